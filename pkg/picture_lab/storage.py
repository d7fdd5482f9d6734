"""Atomic file storage for run records and tables."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import pandas as pd
from loguru import logger
from slugify import slugify

from .models import RECORD_SCHEMA, SUPPORTED_SCHEMAS, ExperimentRecord


class RecordFormatError(ValueError):
    pass


def atomic_write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    return path


class RunStorage:
    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, name: str, suffix: str) -> Path:
        return self.base_dir / f"{slugify(name) or 'run'}{suffix}"

    def write_text(self, name: str, suffix: str, text: str) -> Path:
        path = atomic_write_text(self.path_for(name, suffix), text)
        logger.info("wrote {}", path)
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        return self.write_text(name, ".csv", frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))

    def write_record(self, record: ExperimentRecord) -> Path:
        return self.write_text(record.config.name, ".jsonl", dump_record(record))


def _line(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, allow_nan=False)


def dump_record(record: ExperimentRecord) -> str:
    """Header line, one line per scan row, trailer line."""
    header = {
        "kind": "header",
        "schema": RECORD_SCHEMA,
        "config": record.config.model_dump(mode="json"),
        "basis": record.basis.model_dump(mode="json"),
        "packet_energy": record.packet_energy,
        "free_term": record.free_term,
        "divergence_norm": record.divergence_norm,
        "f_star": record.f_star,
    }
    lines = [_line(header)]
    lines.extend(_line({"kind": "row", **row.model_dump(mode="json")}) for row in record.rows)
    trailer = {
        "kind": "trailer",
        "linearity": record.linearity.model_dump(mode="json") if record.linearity else None,
        "identity_scan": [point.model_dump(mode="json") for point in record.identity_scan],
        "violations": record.violations,
    }
    lines.append(_line(trailer))
    return "\n".join(lines) + "\n"


def write_record(record: ExperimentRecord, directory: Path) -> Path:
    return RunStorage(directory).write_record(record)


def load_record(path: Path) -> ExperimentRecord:
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise RecordFormatError(f"{path} is empty")
    entries = [json.loads(line) for line in lines]
    header, trailer = entries[0], entries[-1]
    if header.get("kind") != "header" or trailer.get("kind") != "trailer":
        raise RecordFormatError(f"{path} lacks a header or trailer line")
    if header.get("schema") not in SUPPORTED_SCHEMAS:
        raise RecordFormatError(f"unsupported record schema {header.get('schema')!r}")
    rows = []
    for entry in entries[1:-1]:
        if entry.get("kind") != "row":
            raise RecordFormatError(f"unexpected line kind {entry.get('kind')!r}")
        rows.append({key: value for key, value in entry.items() if key != "kind"})
    return ExperimentRecord.model_validate(
        {
            "schema": header["schema"],
            "config": header["config"],
            "basis": header["basis"],
            "packet_energy": header["packet_energy"],
            "free_term": header["free_term"],
            "divergence_norm": header["divergence_norm"],
            "f_star": header.get("f_star"),
            "rows": rows,
            "linearity": trailer.get("linearity"),
            "identity_scan": trailer.get("identity_scan", []),
            "violations": trailer.get("violations", []),
        }
    )
