import json

import pandas as pd
import pytest

from picture_lab.experiment import check_record_invariants, run_experiment
from picture_lab.models import RECORD_SCHEMA
from picture_lab.reports import emit_report
from picture_lab.storage import RecordFormatError, RunStorage, atomic_write_text, dump_record, load_record, write_record


@pytest.fixture(scope="module")
def stored_record(canonical_record, tmp_path_factory):
    return write_record(canonical_record, tmp_path_factory.mktemp("stored"))


@pytest.fixture(scope="module")
def rerun_record(stored_record):
    return run_experiment(load_record(stored_record).config)


def test_stored_record_loads(stored_record, canonical_record):
    record = load_record(stored_record)
    assert record.schema_tag == RECORD_SCHEMA
    assert record.config.name == "canonical"
    assert record.config.packet.weights == canonical_record.config.packet.weights
    assert record.f_grid == canonical_record.f_grid
    assert record.rows[0].decomposition.formula_total == record.free_term
    assert record.rows[0].audit.dense
    assert check_record_invariants(record) == []


def test_record_reproduces_from_its_config_echo(stored_record, rerun_record):
    stored = load_record(stored_record)
    assert rerun_record.model_dump(mode="json") == stored.model_dump(mode="json")
    assert rerun_record.divergence_norm == stored.divergence_norm
    assert rerun_record.f_star == stored.f_star


def test_repeat_runs_write_identical_tables(canonical_record, rerun_record, tmp_path):
    first = emit_report(canonical_record, tmp_path / "first")
    second = emit_report(rerun_record, tmp_path / "second")
    csv_files = [(a, b) for a, b in zip(first, second) if a.suffix == ".csv"]
    assert len(csv_files) == 5
    for a, b in csv_files:
        assert a.name == b.name
        assert a.read_bytes() == b.read_bytes()


def test_scan_table_parses_back_to_f_star(canonical_record, tmp_path):
    emit_report(canonical_record, tmp_path, ["table"])
    table = pd.read_csv(tmp_path / "canonical-scan.csv", float_precision="round_trip")
    recomputed = table["free_term"] / table["divergence_norm"]
    assert (recomputed - table["f_star"]).abs().max() <= 1e-12
    assert table["f_star"].iloc[0] == pytest.approx(canonical_record.f_star, rel=1e-12)


def test_record_lines_are_header_rows_trailer(canonical_record):
    lines = dump_record(canonical_record).splitlines()
    kinds = [json.loads(line)["kind"] for line in lines]
    assert kinds == ["header", "row", "row", "row", "trailer"]
    assert json.loads(lines[0])["schema"] == RECORD_SCHEMA
    assert lines[0] == json.dumps(json.loads(lines[0]), sort_keys=True)
    assert len(json.loads(lines[-1])["identity_scan"]) == len(canonical_record.identity_scan)


def test_record_round_trip(canonical_record, tmp_path):
    path = write_record(canonical_record, tmp_path)
    assert path.name == "canonical.jsonl"
    loaded = load_record(path)
    assert loaded.model_dump(mode="json") == canonical_record.model_dump(mode="json")
    assert loaded.f_star == canonical_record.f_star


def test_atomic_write_leaves_no_temporary_files(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "first\n")
    atomic_write_text(target, "second\n")
    assert target.read_text() == "second\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_storage_slugifies_names(tmp_path):
    storage = RunStorage(tmp_path)
    assert storage.path_for("Canonical Run_2", ".csv").name == "canonical-run-2.csv"
    assert storage.path_for("???", ".csv").name == "run.csv"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda lines: [],
        lambda lines: lines[:-1],
        lambda lines: [lines[0].replace(RECORD_SCHEMA, "picture-lab.record/v0")] + lines[1:],
        lambda lines: [lines[0], lines[2], lines[1]],
    ],
)
def test_malformed_records_are_rejected(stored_record, tmp_path, mutate):
    lines = stored_record.read_text().splitlines()
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(mutate(lines)) + "\n")
    with pytest.raises(RecordFormatError):
        load_record(broken)
