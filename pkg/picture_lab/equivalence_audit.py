"""Numerical audit of picture equivalence at finite dimension.

The Heisenberg field is recovered by conjugating the Schrodinger field with the Fock
propagator, densely for small lattices and on random trial states otherwise, and the
residual of every identity the comparison leans on is reported next to the gaps.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from .fock_space import FieldOperator, FockCapacityError, StateVector, fock_hamiltonian, free_hamiltonian_operator
from .gauge_profiles import GaugeProfile, Ramp, RampShape, build_gauge_profile
from .heisenberg_evolution import (
    DEFAULT_RTOL,
    closed_form_propagator,
    field_mismatch,
    gauge_identity_residual,
    integrate_propagator,
)
from .lattice_model import ComplexArray, ModeBasis
from .observables import DecompositionReport, h0_expectation_heisenberg, heisenberg_decomposition
from .schrodinger_evolution import Ordering, SchrodingerTrajectory, evolve_state, lanczos_expm_action

DENSE_MAX_SITES = 4


class AuditReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    f: float
    conjugation_residual: float
    covariance_residual: float
    picture_gap_formula: float
    picture_gap_direct: float
    closed_form_vs_ode: float
    stepped_vs_ode: float
    gauge_identity_residual: float
    conjugation_gap: float
    formula_vs_direct: float
    gap_bound: float
    formula_gap_bound: float
    dense: bool


def _conjugation_coefficients(propagator: ComplexArray, field_S: FieldOperator) -> tuple[ComplexArray, float]:
    """V with U^dagger A_m U = sum_n V[m, n] A_n, and the worst reconstruction defect."""
    operators = [op.dense() for op in field_S.ladder.mode_operators]
    dim = propagator.shape[0]
    count = len(operators)
    coefficients = np.zeros((count, count), dtype=complex)
    defect = 0.0
    for m, operator in enumerate(operators):
        conjugated = propagator.conj().T @ operator @ propagator
        for n, basis_operator in enumerate(operators):
            coefficients[m, n] = 2.0 * np.vdot(basis_operator, conjugated) / dim
        rebuilt = sum(coefficients[m, n] * operators[n] for n in range(count))
        defect = max(defect, float(np.max(np.abs(conjugated - rebuilt))))
    return coefficients, defect


def conjugated_field(propagator: ComplexArray, field_S: FieldOperator, *, max_sites: int = DENSE_MAX_SITES) -> FieldOperator:
    """U^dagger psi_S U, re-expanded on the mode operators."""
    if field_S.config.n_sites > max_sites:
        raise FockCapacityError(f"dense conjugation is limited to N <= {max_sites} sites")
    coefficients, _ = _conjugation_coefficients(np.asarray(propagator), field_S)
    return FieldOperator(field_S.ladder, field_S.basis, field_S.coefficients @ coefficients)


def _apply_steps(hamiltonians: Sequence, dts: Sequence[float], state: StateVector, *, adjoint: bool) -> StateVector:
    if adjoint:
        for hamiltonian, dt in zip(reversed(hamiltonians), reversed(dts)):
            state = lanczos_expm_action(hamiltonian, state, -dt)
    else:
        for hamiltonian, dt in zip(hamiltonians, dts):
            state = lanczos_expm_action(hamiltonian, state, dt)
    return state


def spot_check_conjugation(
    trajectory: SchrodingerTrajectory,
    field_S: FieldOperator,
    trials: int = 2,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Compare U^dagger A_m U and U^dagger H0 U with their single-particle images on random states.

    Returns the worst field defect and the worst H0 expectation defect.
    """
    rng = rng or np.random.default_rng(0)
    cache: dict[int, object] = {}
    hamiltonians = []
    for step in trajectory.steps:
        key = id(step.kernel)
        if key not in cache:
            cache[key] = fock_hamiltonian(field_S, step.kernel)
        hamiltonians.append(cache[key])
    dts = [step.dt for step in trajectory.steps]

    image = trajectory.single_particle_image()
    spacing = field_S.config.spacing
    coefficients = spacing * field_S.coefficients.conj().T @ image @ field_S.coefficients
    evolved = FieldOperator(field_S.ladder, field_S.basis, field_S.coefficients @ coefficients)
    free_h = free_hamiltonian_operator(field_S)
    evolved_h = free_hamiltonian_operator(evolved)
    operators = field_S.ladder.mode_operators

    field_defect = energy_defect = 0.0
    for _ in range(trials):
        trial = rng.normal(size=field_S.ladder.dim) + 1j * rng.normal(size=field_S.ladder.dim)
        trial /= np.linalg.norm(trial)
        forward = _apply_steps(hamiltonians, dts, trial, adjoint=False)
        energy_defect = max(energy_defect, abs(free_h.expectation(forward).real - evolved_h.expectation(trial).real))
        for m, operator in enumerate(operators):
            conjugated = _apply_steps(hamiltonians, dts, operator.apply(forward), adjoint=True)
            expected = sum(coefficients[m, n] * operators[n].apply(trial) for n in range(len(operators)))
            field_defect = max(field_defect, float(np.linalg.norm(conjugated - expected)))
    logger.debug("spot check on {} trials: field {:.3e}, energy {:.3e}", trials, field_defect, energy_defect)
    return field_defect, energy_defect


def run_audit(
    state0: StateVector,
    profile: GaugeProfile,
    field_S: FieldOperator,
    tf: float,
    *,
    trajectory: SchrodingerTrajectory | None = None,
    decomposition: DecompositionReport | None = None,
    dt: float | None = None,
    ode_rtol: float = DEFAULT_RTOL,
    dense_max_sites: int = DENSE_MAX_SITES,
    trials: int = 2,
    seed: int = 0,
    ordering: Ordering | str = Ordering.MAGNUS4,
) -> AuditReport:
    basis = field_S.basis
    n_sites = field_S.config.n_sites
    t1 = profile.t1
    if trajectory is None:
        trajectory = evolve_state(state0, profile, field_S, [0.0, t1, tf], dt=dt, ordering=ordering)
    if decomposition is None:
        decomposition = heisenberg_decomposition(
            state0, profile, t1, field_S=field_S, tf=tf, schrodinger_state=trajectory.state_at(tf)
        )

    ode = integrate_propagator(basis, profile, [0.0, tf], rtol=ode_rtol)[-1]
    closed = closed_form_propagator(basis, profile, tf)
    stepped = trajectory.single_particle_image(until=tf)
    closed_form_vs_ode = field_mismatch(closed, ode)
    stepped_vs_ode = field_mismatch(stepped, ode)
    identity_defect = gauge_identity_residual(profile.chi_at_end(), basis, literal=True)
    schrodinger_total = decomposition.schrodinger_total

    dense = n_sites <= dense_max_sites
    if dense:
        propagator = trajectory.dense_propagator(field_S, until=tf)
        coefficients, reconstruction = _conjugation_coefficients(propagator, field_S)
        conjugated = FieldOperator(field_S.ladder, field_S.basis, field_S.coefficients @ coefficients)
        conjugation_residual = max(reconstruction, field_mismatch(conjugated, field_S.transformed(stepped)))
        rotated = propagator.conj().T @ free_hamiltonian_operator(field_S).dense() @ propagator
        covariance_residual = float(np.max(np.abs(rotated - free_hamiltonian_operator(conjugated).dense())))
        heisenberg_total = h0_expectation_heisenberg(state0, conjugated)
    else:
        conjugation_residual, covariance_residual = spot_check_conjugation(
            trajectory, field_S, trials, np.random.default_rng(seed)
        )
        heisenberg_total = h0_expectation_heisenberg(state0, field_S.transformed(stepped))

    norm_h0 = float(np.linalg.norm(basis.hamiltonian.matrix, 2))
    report = AuditReport(
        f=profile.amplitude,
        conjugation_residual=conjugation_residual,
        covariance_residual=covariance_residual,
        picture_gap_formula=schrodinger_total - decomposition.formula_total,
        picture_gap_direct=schrodinger_total - decomposition.direct_total,
        closed_form_vs_ode=closed_form_vs_ode,
        stepped_vs_ode=stepped_vs_ode,
        gauge_identity_residual=identity_defect,
        conjugation_gap=abs(heisenberg_total - schrodinger_total),
        formula_vs_direct=abs(decomposition.formula_total - decomposition.direct_total),
        gap_bound=2 * n_sites * norm_h0 * (closed_form_vs_ode + stepped_vs_ode),
        formula_gap_bound=n_sites * identity_defect,
        dense=dense,
    )
    logger.info(
        "audit f = {:.4g}: conjugation gap {:.3e}, formula gap {:.3e}, direct gap {:.3e}",
        report.f,
        report.conjugation_gap,
        report.picture_gap_formula,
        report.picture_gap_direct,
    )
    return report


class IdentityScanPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_sites: int
    f: float
    f_multiple: float | None = None
    gauge_identity_residual: float
    closed_form_vs_ode: float


def identity_residual_curve(
    basis: ModeBasis,
    spatial,
    t1: float,
    f_values: Iterable[float],
    *,
    ramp: Ramp | RampShape | str = Ramp.POLYNOMIAL,
    f_star: float | None = None,
    ode_rtol: float = DEFAULT_RTOL,
) -> list[IdentityScanPoint]:
    """Gauge identity defect and closed-form error at t1 along the family chi = f * spatial."""
    config = basis.config
    points = []
    for f in f_values:
        profile = build_gauge_profile(spatial, t1, ramp, f, config=config, enforce_band_limit=False)
        ode = integrate_propagator(basis, profile, [0.0, t1], rtol=ode_rtol)[-1]
        points.append(
            IdentityScanPoint(
                n_sites=config.n_sites,
                f=float(f),
                f_multiple=float(f / f_star) if f_star else None,
                gauge_identity_residual=gauge_identity_residual(profile.chi_at_end(), basis),
                closed_form_vs_ode=field_mismatch(closed_form_propagator(basis, profile, t1), ode),
            )
        )
        logger.debug(
            "N = {} f = {:.4g}: identity residual {:.3e}, closed form vs ode {:.3e}",
            config.n_sites,
            f,
            points[-1].gauge_identity_residual,
            points[-1].closed_form_vs_ode,
        )
    return points
