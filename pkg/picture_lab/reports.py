"""Plot-ready exports of a run record: scan table, per-path time series, residual summary."""

from __future__ import annotations

from collections.abc import Iterable
from enum import Enum
from pathlib import Path

import pandas as pd

from .models import ExperimentRecord
from .storage import RunStorage

SCAN_COLUMNS = [
    "f",
    "formula_total",
    "direct_total",
    "schrodinger_total",
    "f_star",
    "free_term",
    "gauge_term",
    "gauge_term_direct",
    "divergence_norm",
]
SERIES_COLUMNS = ["f", "t", "h0_heisenberg", "h0_schrodinger"]
SERIES_PATHS = ("closed_form", "ode")
RESIDUAL_FIELDS = [
    "conjugation_gap",
    "picture_gap_formula",
    "picture_gap_direct",
    "formula_vs_direct",
    "formula_gap_bound",
    "gap_bound",
    "gauge_identity_residual",
    "closed_form_vs_ode",
    "stepped_vs_ode",
    "conjugation_residual",
    "covariance_residual",
]
CURVE_COLUMNS = ["f", *RESIDUAL_FIELDS]
IDENTITY_COLUMNS = ["n_sites", "f_multiple", "f", "gauge_identity_residual", "closed_form_vs_ode"]


class ReportFormat(str, Enum):
    TABLE = "table"
    SERIES = "series"
    RESIDUALS = "residuals"
    SUMMARY = "summary"


def scan_table(record: ExperimentRecord) -> pd.DataFrame:
    rows = [
        {
            "f": row.f,
            "formula_total": row.decomposition.formula_total,
            "direct_total": row.decomposition.direct_total,
            "schrodinger_total": row.decomposition.schrodinger_total,
            "f_star": record.f_star,
            "free_term": row.decomposition.free_term,
            "gauge_term": row.decomposition.gauge_term,
            "gauge_term_direct": row.decomposition.gauge_term_direct,
            "divergence_norm": record.divergence_norm,
        }
        for row in record.rows
    ]
    return pd.DataFrame(rows, columns=SCAN_COLUMNS)


def series_table(record: ExperimentRecord, path: str) -> pd.DataFrame:
    if path not in SERIES_PATHS:
        raise ValueError(f"unknown Heisenberg path {path!r}")
    rows = [
        {"f": row.f, "t": point.t, "h0_heisenberg": getattr(point, path), "h0_schrodinger": point.schrodinger}
        for row in record.rows
        for point in row.series
    ]
    return pd.DataFrame(rows, columns=SERIES_COLUMNS)


def residual_curve_table(record: ExperimentRecord) -> pd.DataFrame:
    """Audit residuals across the f-grid, one row per amplitude."""
    rows = [{"f": row.f, **{name: getattr(row.audit, name) for name in RESIDUAL_FIELDS}} for row in record.rows]
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def identity_scan_table(record: ExperimentRecord) -> pd.DataFrame:
    rows = [point.model_dump() for point in record.identity_scan]
    return pd.DataFrame(rows, columns=IDENTITY_COLUMNS)


def residual_summary(record: ExperimentRecord) -> str:
    lines = [
        f"record: {record.config.name}",
        f"scheme: {record.config.lattice.scheme.value}  N = {record.config.lattice.n_sites}",
        f"packet energy: {record.packet_energy:.17g}",
        f"free term: {record.free_term:.17g}",
        f"divergence norm: {record.divergence_norm:.17g}",
        f"f*: {'n/a' if record.f_star is None else format(record.f_star, '.17g')}",
    ]
    if record.linearity is not None:
        lines.append(
            f"linearity: slope {record.linearity.slope:.17g} intercept {record.linearity.intercept:.17g} "
            f"residual {record.linearity.residual:.3e}"
        )
    for row in record.rows:
        lines.append(f"[f = {row.f:.17g}] dt = {row.dt:.6g} norm drift = {row.norm_drift:.3e}")
        for name in RESIDUAL_FIELDS:
            lines.append(f"  {name}: {getattr(row.audit, name):.6e}")
    for point in record.identity_scan:
        lines.append(
            f"[N = {point.n_sites} f = {point.f:.6g}] gauge_identity_residual: {point.gauge_identity_residual:.6e}"
            f" closed_form_vs_ode: {point.closed_form_vs_ode:.6e}"
        )
    lines.append(f"violations: {len(record.violations)}")
    lines.extend(f"  - {message}" for message in record.violations)
    return "\n".join(lines) + "\n"


def emit_report(
    record: ExperimentRecord,
    directory: Path,
    formats: Iterable[ReportFormat | str] = tuple(ReportFormat),
) -> list[Path]:
    storage = RunStorage(directory)
    name = record.config.name
    written: list[Path] = []
    for fmt in (ReportFormat(item) for item in formats):
        if fmt is ReportFormat.TABLE:
            written.append(storage.write_frame(f"{name}-scan", scan_table(record)))
        elif fmt is ReportFormat.SERIES:
            written.extend(storage.write_frame(f"{name}-series-{path}", series_table(record, path)) for path in SERIES_PATHS)
        elif fmt is ReportFormat.RESIDUALS:
            written.append(storage.write_frame(f"{name}-residual-curve", residual_curve_table(record)))
            written.append(storage.write_frame(f"{name}-identity-scan", identity_scan_table(record)))
        else:
            written.append(storage.write_text(f"{name}-residuals", ".txt", residual_summary(record)))
    return written
