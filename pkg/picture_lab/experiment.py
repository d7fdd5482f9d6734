"""Experiment pipeline: basis, Fock space, packet, pulse, both pictures, decomposition and audit."""

from __future__ import annotations

from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from loguru import logger

from .equivalence_audit import IdentityScanPoint, identity_residual_curve, run_audit
from .fock_space import (
    FieldOperator,
    LadderSet,
    StateVector,
    assemble_field_operator,
    build_ladder_operators,
    packet_energy,
    prepare_wave_packet,
)
from .gauge_profiles import build_gauge_profile, chi_from_current_divergence
from .heisenberg_evolution import closed_form_field_at, free_evolve_field, integrate_propagator
from .lattice_model import ModeBasis, RealArray, build_free_hamiltonian, mode_basis
from .models import BasisSummary, ExperimentConfig, ExperimentRecord, PulseRecord, ScanRow, SeriesPoint
from .observables import (
    DEGENERACY_TOL,
    DegenerateCurrentError,
    current_expectation,
    divergence_norm,
    formula_linearity,
    h0_expectation_heisenberg,
    h0_expectation_schrodinger,
    heisenberg_decomposition,
)
from .schrodinger_evolution import evolve_state


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str) -> Iterator[None]:
    logger.info("stage {}", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True, eq=False)
class ExperimentContext:
    config: ExperimentConfig
    basis: ModeBasis
    ladder: LadderSet
    field: FieldOperator
    state: StateVector
    current: RealArray
    spatial: RealArray
    packet_energy: float
    free_term: float
    divergence_norm: float

    @property
    def f_star(self) -> float | None:
        if self.config.pulse.profile != "current_divergence":
            return None
        return self.free_term / self.divergence_norm


def prepare_context(config: ExperimentConfig) -> ExperimentContext:
    lattice, pulse, numerics = config.lattice, config.pulse, config.numerics
    with stage("basis"):
        basis = mode_basis(build_free_hamiltonian(lattice), lattice)
    with stage("fock"):
        ladder = build_ladder_operators(basis, max_sites=numerics.max_sites)
        field = assemble_field_operator(ladder, basis)
    with stage("state"):
        amplitudes = config.packet.amplitudes()
        state = prepare_wave_packet(basis, ladder, amplitudes)
        energy = packet_energy(basis, amplitudes)
    with stage("pulse"):
        current = current_expectation(state, pulse.t1, field)
        norm = divergence_norm(current, field)
        free_term = h0_expectation_heisenberg(state, free_evolve_field(field, pulse.t1))
        if pulse.profile == "current_divergence":
            if norm <= DEGENERACY_TOL:
                raise DegenerateCurrentError("packet current has no divergence at t1; chi = -f div J vanishes")
            spatial = chi_from_current_divergence(current, 1.0, lattice)
        else:
            spatial = np.asarray(pulse.samples, dtype=float)
    return ExperimentContext(
        config=config,
        basis=basis,
        ladder=ladder,
        field=field,
        state=state,
        current=current,
        spatial=spatial,
        packet_energy=energy,
        free_term=free_term,
        divergence_norm=norm,
    )


def f_grid(config: ExperimentConfig, f_star: float | None) -> list[float]:
    grid = [float(f) for f in config.pulse.f_values]
    if config.pulse.f_star_multiples:
        grid.extend(float(multiple * f_star) for multiple in config.pulse.f_star_multiples)
    return grid


def series_times(t1: float, tf: float, points: int) -> np.ndarray:
    during = np.linspace(0.0, t1, points)
    if tf <= t1:
        return during
    return np.unique(np.concatenate([during, np.linspace(t1, tf, points)]))


def compute_scan_row(context: ExperimentContext, f: float) -> ScanRow:
    config = context.config
    numerics, pulse = config.numerics, config.pulse
    field, state = context.field, context.state
    profile = build_gauge_profile(
        context.spatial,
        pulse.t1,
        pulse.ramp,
        f,
        config=config.lattice,
        band_fraction=numerics.band_fraction,
        enforce_band_limit=numerics.enforce_band_limit,
    )
    times = series_times(pulse.t1, config.tf, numerics.series_points)
    trajectory = evolve_state(
        state,
        profile,
        field,
        times,
        dt=config.time_step,
        tol=numerics.krylov_tol,
        dt_tol=numerics.dt_tol,
        max_halvings=numerics.max_halvings,
        initial_steps=numerics.initial_steps,
        hermiticity_tol=numerics.hermiticity_tol,
        ordering=numerics.ordering,
    )
    propagators = integrate_propagator(context.basis, profile, times, rtol=numerics.ode_rtol)
    series = [
        SeriesPoint(
            t=float(t),
            closed_form=h0_expectation_heisenberg(state, closed_form_field_at(field, profile, float(t))),
            ode=h0_expectation_heisenberg(state, field.transformed(w)),
            schrodinger=h0_expectation_schrodinger(trajectory.states[i], field),
        )
        for i, (t, w) in enumerate(zip(times, propagators))
    ]
    decomposition = heisenberg_decomposition(
        state,
        profile,
        pulse.t1,
        field_S=field,
        tf=config.tf,
        schrodinger_state=trajectory.state_at(config.tf),
        current=context.current,
    )
    audit = run_audit(
        state,
        profile,
        field,
        config.tf,
        trajectory=trajectory,
        decomposition=decomposition,
        ode_rtol=numerics.ode_rtol,
        dense_max_sites=numerics.dense_max_sites,
        trials=numerics.spot_check_trials,
        seed=config.seed,
    )
    return ScanRow(
        f=float(f),
        profile=PulseRecord(**profile.to_record()),
        decomposition=decomposition,
        audit=audit,
        series=series,
        norm_drift=trajectory.norm_drift(),
        dt=trajectory.dt,
    )


def identity_scan(config: ExperimentConfig, context: ExperimentContext | None = None) -> list[IdentityScanPoint]:
    """Gauge identity residual and closed-form error against N and f for chi = -f div J.

    Each lattice size gets its own packet current and f*, the box length stays fixed.
    """
    numerics = config.numerics
    if config.pulse.profile != "current_divergence":
        return []
    points: list[IdentityScanPoint] = []
    for n in numerics.identity_scan_sites:
        if n > numerics.max_sites or max(config.packet.weights) > n:
            logger.warning("identity scan skips N = {}: packet or Fock-space cap does not fit", n)
            continue
        if context is not None and n == config.lattice.n_sites:
            sized = context
        else:
            lattice = config.lattice.model_copy(update={"n_sites": n})
            try:
                sized = prepare_context(config.model_copy(update={"lattice": lattice}))
            except StageError as exc:
                if not isinstance(exc.cause, DegenerateCurrentError):
                    raise
                logger.warning("identity scan skips N = {}: {}", n, exc.cause)
                continue
        f_star = sized.f_star
        points.extend(
            identity_residual_curve(
                sized.basis,
                sized.spatial,
                config.pulse.t1,
                [multiple * f_star for multiple in numerics.identity_scan_multiples],
                ramp=config.pulse.ramp,
                f_star=f_star,
                ode_rtol=numerics.ode_rtol,
            )
        )
    return points


def check_record_invariants(record: ExperimentRecord) -> list[str]:
    """Messages for every invariant the record breaks; empty when it is clean."""
    violations: list[str] = []
    for row in record.rows:
        d, a = row.decomposition, row.audit
        label = f"f = {row.f:.6g}"
        if d.schrodinger_total < -1e-10:
            violations.append(f"{label}: Schrodinger H0 expectation {d.schrodinger_total:.3e} is negative")
        if abs(d.gauge_term - d.gauge_term_direct) > 1e-10 * (1 + abs(d.gauge_term)):
            violations.append(f"{label}: gauge term forms differ by {abs(d.gauge_term - d.gauge_term_direct):.3e}")
        if abs(d.free_term - d.free_term_at_tf) > 1e-9 * (1 + abs(d.free_term)):
            violations.append(f"{label}: free term drifts between t1 and tf")
        if a.conjugation_gap > 1e-8 * (1 + abs(d.schrodinger_total)):
            violations.append(f"{label}: conjugated-field expectation misses the Schrodinger value by {a.conjugation_gap:.3e}")
        if a.formula_vs_direct > a.formula_gap_bound + 1e-9:
            violations.append(f"{label}: formula gap {a.formula_vs_direct:.3e} exceeds its bound {a.formula_gap_bound:.3e}")
        if abs(a.picture_gap_direct) > a.gap_bound + 1e-8:
            violations.append(f"{label}: direct gap {a.picture_gap_direct:.3e} exceeds its bound {a.gap_bound:.3e}")
        if row.norm_drift > 1e-10:
            violations.append(f"{label}: Schrodinger state norm drifted by {row.norm_drift:.3e}")
        if row.f == 0.0:
            totals = (d.free_term, d.formula_total, d.direct_total, d.schrodinger_total)
            if max(abs(total - record.packet_energy) for total in totals) > 1e-9 * (1 + abs(record.packet_energy)):
                violations.append(f"{label}: free-theory totals disagree with the packet energy {record.packet_energy:.12g}")
    if record.linearity is not None and record.config.pulse.profile == "current_divergence":
        expected = -record.divergence_norm
        if abs(record.linearity.slope - expected) > 1e-9 * abs(expected):
            violations.append(f"formula slope {record.linearity.slope:.12g} differs from -integral (div J)^2 = {expected:.12g}")
    return violations


def run_experiment(config: ExperimentConfig, *, dispatch: Callable | None = None) -> ExperimentRecord:
    """Run every stage and assemble the record; any failure is re-raised as StageError."""
    context = prepare_context(config)
    grid = f_grid(config, context.f_star)
    if dispatch is None:
        from .jobs import dispatch_scan_rows as dispatch
    with stage("scan"):
        rows = dispatch(config, grid)
    with stage("linearity"):
        linearity = formula_linearity([row.decomposition for row in rows]) if len({row.f for row in rows}) >= 2 else None
    with stage("identity_scan"):
        scan = identity_scan(config, context)
    record = ExperimentRecord(
        config=config,
        basis=BasisSummary(
            energies=[float(e) for e in context.basis.energies],
            vacuum_energy=context.basis.vacuum_energy,
            orthonormality_defect=context.basis.orthonormality_defect(),
            eigen_residual=context.basis.eigen_residual(),
        ),
        packet_energy=context.packet_energy,
        free_term=context.free_term,
        divergence_norm=context.divergence_norm,
        f_star=context.f_star,
        rows=rows,
        linearity=linearity,
        identity_scan=scan,
    )
    record = record.model_copy(update={"violations": check_record_invariants(record)})
    if record.violations:
        logger.warning("{} invariant violations", len(record.violations))
    return record
