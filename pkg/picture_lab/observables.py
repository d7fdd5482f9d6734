"""Expectation values in both pictures and the free-plus-gauge decomposition of H0."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, computed_field

from .fock_space import (
    FieldOperator,
    StateVector,
    current_operator,
    free_hamiltonian_operator,
)
from .gauge_profiles import GaugeProfile, Ramp, RampShape, build_gauge_profile, chi_from_current_divergence
from .heisenberg_evolution import EvolutionError, closed_form_evolved_field, free_evolve_field
from .lattice_model import RealArray, lattice_gradient, lattice_integral
from .schrodinger_evolution import evolve_state

DEGENERACY_TOL = 1e-14


class DegenerateCurrentError(ValueError):
    pass


class DecompositionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    f: float
    free_term: float
    gauge_term: float
    gauge_term_direct: float
    direct_total: float
    schrodinger_total: float
    free_term_at_tf: float

    @computed_field
    @property
    def formula_total(self) -> float:
        return self.free_term + self.gauge_term


class LinearityFit(BaseModel):
    slope: float
    intercept: float
    residual: float


class NegativityScan(BaseModel):
    free_term: float
    divergence_norm: float
    f_star: float
    rows: list[DecompositionReport]

    def crossing_rows(self) -> list[DecompositionReport]:
        return [row for row in self.rows if row.formula_total < 0]


def h0_expectation_heisenberg(state0: StateVector, evolved_field: FieldOperator) -> float:
    """<Omega(0)| H0(psi(t)) |Omega(0)> with the fixed renormalization constant."""
    return free_hamiltonian_operator(evolved_field).expectation(state0).real


def h0_expectation_schrodinger(state_t: StateVector, field_S: FieldOperator) -> float:
    return free_hamiltonian_operator(field_S).expectation(state_t).real


def current_profile(state: StateVector, field: FieldOperator) -> RealArray:
    return np.array([current_operator(field, site).expectation(state).real for site in range(field.config.n_sites)])


def current_expectation(state0: StateVector, t: float, field_S: FieldOperator) -> RealArray:
    """The current that would flow at time t had no potential been applied."""
    return current_profile(state0, free_evolve_field(field_S, t))


def divergence_norm(current: RealArray, field_S: FieldOperator) -> float:
    """Integral of (div J)^2 over the lattice."""
    divergence = lattice_gradient(current, field_S.config)
    return lattice_integral(divergence**2, field_S.config)


def heisenberg_decomposition(
    state0: StateVector,
    profile: GaugeProfile,
    t1: float,
    *,
    field_S: FieldOperator,
    tf: float,
    schrodinger_state: StateVector | None = None,
    dt: float | None = None,
    current: RealArray | None = None,
) -> DecompositionReport:
    """Split H0(psi(tf)) into the free term at t1 and the gauge term -integral J . grad(chi).

    The gauge term is stored twice: as integral chi div J and as -integral J grad chi.
    """
    if tf < t1:
        raise EvolutionError(f"final time {tf} precedes the pulse end {t1}")
    config = field_S.config
    free_term = h0_expectation_heisenberg(state0, free_evolve_field(field_S, t1))
    current = current_expectation(state0, t1, field_S) if current is None else np.asarray(current, dtype=float)
    chi = profile.chi_at_end()
    gauge_term = lattice_integral(chi * lattice_gradient(current, config), config)
    gauge_term_direct = -lattice_integral(current * lattice_gradient(chi, config), config)
    direct_total = h0_expectation_heisenberg(state0, closed_form_evolved_field(field_S, profile, t1, tf))
    if schrodinger_state is None:
        schrodinger_state = evolve_state(state0, profile, field_S, [0.0, tf], dt=dt).final_state
    return DecompositionReport(
        f=profile.amplitude,
        free_term=free_term,
        gauge_term=gauge_term,
        gauge_term_direct=gauge_term_direct,
        direct_total=direct_total,
        schrodinger_total=h0_expectation_schrodinger(schrodinger_state, field_S),
        free_term_at_tf=h0_expectation_heisenberg(state0, free_evolve_field(field_S, tf)),
    )


def negativity_scan(
    state0: StateVector,
    field_S: FieldOperator,
    f_grid: Iterable[float],
    t1: float,
    tf: float,
    *,
    ramp: Ramp | RampShape | str = Ramp.POLYNOMIAL,
    dt: float | None = None,
    band_fraction: float = 0.5,
    mapper: Callable = map,
) -> NegativityScan:
    """Decomposition rows for chi(t1) = -f div J over an f-grid, plus the zero crossing f*."""
    config = field_S.config
    current = current_expectation(state0, t1, field_S)
    norm = divergence_norm(current, field_S)
    if norm <= DEGENERACY_TOL:
        raise DegenerateCurrentError("current divergence vanishes; chi = -f div J carries no gauge term")
    spatial = chi_from_current_divergence(current, 1.0, config)
    free_term = h0_expectation_heisenberg(state0, free_evolve_field(field_S, t1))

    def row(f: float) -> DecompositionReport:
        profile = build_gauge_profile(spatial, t1, ramp, f, config=config, band_fraction=band_fraction)
        return heisenberg_decomposition(state0, profile, t1, field_S=field_S, tf=tf, dt=dt, current=current)

    rows = list(mapper(row, list(f_grid)))
    logger.info("negativity scan: {} rows, f* = {:.6g}", len(rows), free_term / norm)
    return NegativityScan(free_term=free_term, divergence_norm=norm, f_star=free_term / norm, rows=rows)


def formula_linearity(rows: Sequence[DecompositionReport]) -> LinearityFit:
    """Least-squares line through (f, formula_total)."""
    f = np.array([row.f for row in rows], dtype=float)
    totals = np.array([row.formula_total for row in rows], dtype=float)
    if np.unique(f).size < 2:
        raise ValueError("a linearity fit needs at least two distinct amplitudes")
    slope, intercept = np.polyfit(f, totals, 1)
    residual = float(np.max(np.abs(totals - (slope * f + intercept))))
    return LinearityFit(slope=float(slope), intercept=float(intercept), residual=residual)
