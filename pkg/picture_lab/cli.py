"""Command line entry point: run, scan, audit and report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml
from loguru import logger
from pydantic import ValidationError

from .experiment import StageError, run_experiment
from .models import ExperimentConfig, ExperimentRecord
from .reports import ReportFormat, emit_report, residual_summary
from .storage import RecordFormatError, load_record, write_record

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_INVALID_CONFIG = 2
EXIT_INVARIANT_VIOLATION = 3


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="YAML experiment file")
    parser.add_argument("--name")
    parser.add_argument("--n-sites", type=int)
    parser.add_argument("--box-length", type=float)
    parser.add_argument("--mass", type=float)
    parser.add_argument("--charge", type=float)
    parser.add_argument("--scheme", choices=["spectral", "gauged_hopping"])
    parser.add_argument("--t1", type=float)
    parser.add_argument("--tf", type=float)
    parser.add_argument("--dt", help="time step or 'auto'")
    parser.add_argument("--ramp", choices=["polynomial", "cosine"])
    parser.add_argument("--outputs", type=Path)
    parser.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="picture-lab", description=__doc__)
    parser.add_argument("--log-level", default="INFO")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the configured experiment and write record plus reports")
    _add_experiment_arguments(run)

    scan = commands.add_parser("scan", help="run an f-grid and write the scan table")
    _add_experiment_arguments(scan)
    scan.add_argument("--f", dest="f_values", type=float, action="append", help="explicit amplitude (repeatable)")
    scan.add_argument("--f-star-multiple", dest="f_star_multiples", type=float, action="append", help="amplitude as a multiple of f* (repeatable)")

    audit = commands.add_parser("audit", help="run the experiment and print the residual summary")
    _add_experiment_arguments(audit)

    report = commands.add_parser("report", help="emit plot-ready files from a stored record")
    report.add_argument("--record", type=Path, required=True)
    report.add_argument("--outputs", type=Path)
    report.add_argument("--format", dest="formats", choices=[f.value for f in ReportFormat], action="append")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    dt = args.dt
    if dt is not None and dt != "auto":
        dt = float(dt)
    pulse = {"t1": args.t1, "ramp": args.ramp}
    if getattr(args, "f_values", None) is not None or getattr(args, "f_star_multiples", None) is not None:
        pulse["f_values"] = args.f_values or []
        pulse["f_star_multiples"] = args.f_star_multiples or []
    return {
        "name": args.name,
        "lattice": {
            "n_sites": args.n_sites,
            "box_length": args.box_length,
            "mass": args.mass,
            "charge": args.charge,
            "scheme": args.scheme,
        },
        "pulse": pulse,
        "tf": args.tf,
        "dt": dt,
        "outputs": str(args.outputs) if args.outputs else None,
        "seed": args.seed,
    }


def _configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper())


def _run(args: argparse.Namespace) -> int:
    try:
        experiment = ExperimentConfig.from_yaml(args.config, _overrides(args))
    except (ValidationError, yaml.YAMLError, OSError, ValueError) as exc:
        logger.error("invalid configuration: {}", exc)
        return EXIT_INVALID_CONFIG
    try:
        record = run_experiment(experiment)
    except StageError as exc:
        logger.error(str(exc))
        return EXIT_STAGE_FAILURE
    try:
        write_record(record, experiment.outputs)
        if args.command == "scan":
            emit_report(record, experiment.outputs, [ReportFormat.TABLE])
        else:
            emit_report(record, experiment.outputs)
    except OSError as exc:
        logger.error("could not write outputs: {}", exc)
        return EXIT_STAGE_FAILURE
    if args.command == "audit":
        sys.stdout.write(residual_summary(record))
    return _verdict(record)


def _verdict(record: ExperimentRecord) -> int:
    for message in record.violations:
        logger.error("invariant violated: {}", message)
    return EXIT_INVARIANT_VIOLATION if record.violations else EXIT_OK


def _report(args: argparse.Namespace) -> int:
    try:
        record = load_record(args.record)
    except (RecordFormatError, ValidationError, ValueError, OSError) as exc:
        logger.error("could not read record {}: {}", args.record, exc)
        return EXIT_INVALID_CONFIG
    formats = args.formats or [f.value for f in ReportFormat]
    try:
        emit_report(record, args.outputs or args.record.parent, formats)
    except OSError as exc:
        logger.error("could not write outputs: {}", exc)
        return EXIT_STAGE_FAILURE
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    if args.command == "report":
        return _report(args)
    return _run(args)


if __name__ == "__main__":
    raise SystemExit(main())
