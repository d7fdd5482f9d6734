import numpy as np
import pytest
from pydantic import ValidationError

from picture_lab.experiment import (
    StageError,
    check_record_invariants,
    f_grid,
    prepare_context,
    run_experiment,
    series_times,
)
from picture_lab.gauge_profiles import build_gauge_profile
from picture_lab.jobs import dispatch_scan_rows
from picture_lab.models import ExperimentConfig
from picture_lab.observables import DegenerateCurrentError, h0_expectation_schrodinger
from picture_lab.schrodinger_evolution import evolve_state

from conftest import experiment_payload

PACKET_ENERGY = (1 + np.sqrt(1 + (np.pi / 2) ** 2)) / 2


def test_canonical_run_is_clean(canonical_record):
    assert canonical_record.violations == []
    assert len(canonical_record.rows) == 3
    f_star = canonical_record.f_star
    assert canonical_record.f_grid == pytest.approx([0.0, f_star, 2 * f_star])
    assert canonical_record.packet_energy == pytest.approx(PACKET_ENERGY, abs=1e-12)
    assert canonical_record.free_term == pytest.approx(PACKET_ENERGY, abs=1e-10)


def test_formula_crosses_zero_while_schrodinger_stays_positive(canonical_record):
    zero, at_star, beyond = (row.decomposition for row in canonical_record.rows)
    assert zero.formula_total == pytest.approx(PACKET_ENERGY, abs=1e-10)
    assert at_star.formula_total == pytest.approx(0.0, abs=1e-10)
    assert beyond.formula_total == pytest.approx(-PACKET_ENERGY, abs=1e-9)
    for row in canonical_record.rows:
        assert row.decomposition.schrodinger_total >= -1e-10
        assert row.decomposition.direct_total >= -1e-10


def test_linearity_slope_is_divergence_norm(canonical_record):
    fit = canonical_record.linearity
    assert fit.slope == pytest.approx(-canonical_record.divergence_norm, rel=1e-9)
    assert fit.intercept == pytest.approx(canonical_record.free_term, rel=1e-9)


def test_series_covers_pulse_and_free_stretch(canonical_record):
    for row in canonical_record.rows:
        times = [point.t for point in row.series]
        assert times == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])
        assert row.series[0].schrodinger == pytest.approx(PACKET_ENERGY, abs=1e-10)
        assert row.series[-1].closed_form == pytest.approx(row.decomposition.direct_total, abs=1e-12)
        assert row.dt <= 1 / 32


def test_audit_rows_are_dense(canonical_record):
    for row in canonical_record.rows:
        assert row.audit.dense
        assert row.audit.conjugation_gap <= 1e-8


def test_invariant_check_flags_negative_schrodinger_energy(canonical_record):
    row = canonical_record.rows[1]
    broken = row.model_copy(update={"decomposition": row.decomposition.model_copy(update={"schrodinger_total": -0.5})})
    record = canonical_record.model_copy(update={"rows": [broken]})
    violations = check_record_invariants(record)
    assert len(violations) == 1
    assert "negative" in violations[0]


def test_f_grid_appends_multiples(experiment_config):
    config = experiment_config.model_copy(
        update={"pulse": experiment_config.pulse.model_copy(update={"f_values": [0.25]})}
    )
    assert f_grid(config, 2.0) == [0.25, 0.0, 2.0, 4.0]


def test_series_times():
    assert series_times(1.0, 1.0, 3).tolist() == [0.0, 0.5, 1.0]
    assert series_times(1.0, 3.0, 3).tolist() == [0.0, 0.5, 1.0, 2.0, 3.0]


def test_prepare_context_reports_degenerate_current(tmp_path):
    payload = experiment_payload(tmp_path)
    payload["packet"] = {"weights": {1: 1.0}}
    with pytest.raises(StageError) as excinfo:
        prepare_context(ExperimentConfig.model_validate(payload))
    assert excinfo.value.stage == "pulse"
    assert isinstance(excinfo.value.cause, DegenerateCurrentError)


def test_sampled_profile_has_no_f_star(tmp_path):
    payload = experiment_payload(tmp_path)
    payload["pulse"] = {"profile": "samples", "samples": [0.1, 0.0, -0.1, 0.0], "t1": 1.0}
    context = prepare_context(ExperimentConfig.model_validate(payload))
    assert context.f_star is None
    assert np.allclose(context.spatial, [0.1, 0.0, -0.1, 0.0])


def test_scan_failures_surface_as_stage_errors(experiment_config):
    def failing(config, grid):
        raise RuntimeError("worker lost")

    with pytest.raises(StageError, match="stage 'scan' failed: worker lost"):
        run_experiment(experiment_config, dispatch=failing)


def test_empty_grid_gives_record_without_rows(experiment_config):
    config = experiment_config.model_copy(
        update={"pulse": experiment_config.pulse.model_copy(update={"f_star_multiples": []})}
    )
    record = run_experiment(config)
    assert record.rows == []
    assert record.linearity is None
    assert record.violations == []
    assert dispatch_scan_rows(config, []) == []


@pytest.mark.parametrize(
    "change",
    [
        {"tf": 0.5},
        {"dt": 0.0},
        {"packet": {"weights": {7: 1.0}}},
        {"pulse": {"t1": 1.0, "profile": "samples", "samples": [0.0, 1.0]}},
        {"pulse": {"t1": 1.0, "samples": [0.0, 0.0, 0.0, 0.0]}},
    ],
)
def test_invalid_configs_are_rejected(tmp_path, change):
    payload = experiment_payload(tmp_path)
    payload.update(change)
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(payload)


def test_canonical_run_finishes_within_a_minute(canonical_run):
    _, elapsed = canonical_run
    assert elapsed < 60.0


def test_automatic_step_is_converged(canonical_record):
    context = prepare_context(canonical_record.config)
    times = series_times(1.0, 2.0, 3)
    for row in canonical_record.rows:
        profile = build_gauge_profile(context.spatial, 1.0, "polynomial", row.f, config=context.config.lattice)
        finer = evolve_state(context.state, profile, context.field, times, dt=row.dt / 2)
        energy = h0_expectation_schrodinger(finer.state_at(2.0), context.field)
        assert energy == pytest.approx(row.decomposition.schrodinger_total, abs=1e-8)


def test_rows_carry_their_pulse(canonical_record):
    context = prepare_context(canonical_record.config)
    for row in canonical_record.rows:
        assert row.profile.f == row.f
        assert row.profile.ramp == "polynomial"
        assert row.profile.t1 == 1.0
        assert np.allclose(row.profile.spatial, context.spatial, rtol=0.0, atol=1e-14)


def test_identity_scan_covers_both_sizes(canonical_record):
    by_size = {}
    for point in canonical_record.identity_scan:
        by_size.setdefault(point.n_sites, {})[point.f_multiple] = point
    assert sorted(by_size) == [4, 6]
    for points in by_size.values():
        assert sorted(points) == pytest.approx([0.0, 0.01, 0.02, 0.5, 1.0])
        assert points[0.0].gauge_identity_residual == pytest.approx(0.0, abs=1e-12)
        assert points[0.0].closed_form_vs_ode < 1e-7

    six = by_size[6]
    assert 1.8 < six[0.02].closed_form_vs_ode / six[0.01].closed_form_vs_ode < 2.2
    assert 1.8 < six[0.02].gauge_identity_residual / six[0.01].gauge_identity_residual < 2.2
    assert six[1.0].closed_form_vs_ode > 1e-6
