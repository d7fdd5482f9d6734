"""Heisenberg-picture field evolution through a gauge pulse.

The field equation is linear in psi, so every evolution is a 2N x 2N single-particle
map W(t) acting on the field's coefficient matrix. Three routes are offered: the free
exponential, the closed form built from gauge phases, and a step-doubling RK4
integration of i dW/dt = K(t) W that serves as the lattice ground truth.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from loguru import logger

from .fock_space import FieldOperator
from .gauge_profiles import GaugeProfile
from .lattice_model import (
    ALPHA,
    SPINOR_IDENTITY,
    ComplexArray,
    LatticeConfig,
    ModeBasis,
    Potential,
    build_hamiltonian,
    lattice_gradient,
)

DEFAULT_RTOL = 1e-10
MIN_STEP = 1e-12
MAX_STEPS = 1_000_000


class EvolutionError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


def free_propagator(basis: ModeBasis, t: float) -> ComplexArray:
    """e^{-i H0 t} assembled from the mode basis."""
    spectrum = np.concatenate([basis.energies, -basis.energies])
    modes = basis.matrix
    return basis.config.spacing * (modes * np.exp(-1j * spectrum * t)) @ modes.conj().T


def gauge_phase_matrix(chi, config: LatticeConfig) -> ComplexArray:
    phases = np.exp(-1j * config.charge * np.asarray(chi, dtype=float))
    return np.kron(np.diag(phases), SPINOR_IDENTITY)


def free_evolve_field(field: FieldOperator, t: float) -> FieldOperator:
    return field.transformed(free_propagator(field.basis, t))


def closed_form_propagator(basis: ModeBasis, profile: GaugeProfile, t: float) -> ComplexArray:
    if t < 0:
        raise EvolutionError(f"evolution starts at t = 0, got t = {t}")
    config = basis.config
    if t <= profile.t1:
        return gauge_phase_matrix(profile.chi(t), config) @ free_propagator(basis, t)
    return (
        free_propagator(basis, t - profile.t1)
        @ gauge_phase_matrix(profile.chi_at_end(), config)
        @ free_propagator(basis, profile.t1)
    )


def closed_form_evolved_field(field: FieldOperator, profile: GaugeProfile, t1: float, tf: float) -> FieldOperator:
    """psi(tf) = e^{-i H0 (tf - t1)} e^{-i q chi(t1)} e^{-i H0 t1} psi_S."""
    if tf < t1:
        raise EvolutionError(f"final time {tf} precedes the pulse end {t1}")
    if not np.isclose(t1, profile.t1, rtol=0.0, atol=1e-14 * max(1.0, abs(t1))):
        raise EvolutionError(f"t1 = {t1} does not match the profile's pulse end {profile.t1}")
    return field.transformed(closed_form_propagator(field.basis, profile, tf))


def closed_form_field_at(field: FieldOperator, profile: GaugeProfile, t: float) -> FieldOperator:
    """Gauge-phased free field inside the pulse, the three-factor product after it."""
    return field.transformed(closed_form_propagator(field.basis, profile, t))


def single_particle_kernel(config: LatticeConfig, profile: GaugeProfile, t: float) -> ComplexArray:
    return build_hamiltonian(config, profile.potential_at(t)).matrix


def _rk4_step(config: LatticeConfig, profile: GaugeProfile, w: ComplexArray, t: float, h: float) -> ComplexArray:
    def rate(time: float, state: ComplexArray) -> ComplexArray:
        return -1j * single_particle_kernel(config, profile, time) @ state

    k1 = rate(t, w)
    k2 = rate(t + h / 2, w + h / 2 * k1)
    k3 = rate(t + h / 2, w + h / 2 * k2)
    k4 = rate(t + h, w + h * k3)
    return w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_segment(
    config: LatticeConfig,
    profile: GaugeProfile,
    w: ComplexArray,
    start: float,
    stop: float,
    step: float,
    rtol: float,
) -> tuple[ComplexArray, float, int]:
    t, accepted, rejected = start, 0, 0
    while t < stop:
        last = step >= stop - t
        h = stop - t if last else step
        single = _rk4_step(config, profile, w, t, h)
        half = _rk4_step(config, profile, w, t, h / 2)
        double = _rk4_step(config, profile, half, t + h / 2, h / 2)
        error = float(np.linalg.norm(double - single) / np.linalg.norm(double))
        factor = 4.0 if error == 0.0 else min(4.0, max(0.1, 0.9 * (rtol / error) ** 0.2))
        if error <= rtol:
            w = double + (double - single) / 15
            t = stop if last else t + h
            accepted += 1
            step = max(step, h * factor) if last else h * factor
        else:
            rejected += 1
            step = h * factor
            if step < MIN_STEP:
                raise IntegrationError(f"step size underflow at t = {t:.6g}; achieved relative error {error:.3e}")
        if accepted + rejected > MAX_STEPS:
            raise IntegrationError(f"no convergence after {MAX_STEPS} steps; achieved relative error {error:.3e}")
    logger.debug("RK4 segment [{:.4g}, {:.4g}]: {} accepted, {} rejected", start, stop, accepted, rejected)
    return w, step, accepted


def _validate_grid(t_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise EvolutionError("time grid must be a non-empty one dimensional sequence")
    if grid[0] != 0.0:
        raise EvolutionError(f"time grid must start at 0, got {grid[0]}")
    if np.any(np.diff(grid) < 0):
        raise EvolutionError("time grid must be monotone")
    return grid


def integrate_propagator(
    basis: ModeBasis,
    profile: GaugeProfile,
    t_grid: Sequence[float],
    *,
    rtol: float = DEFAULT_RTOL,
    initial_step: float | None = None,
) -> list[ComplexArray]:
    """W(t) on every grid time: RK4 on [0, t1], exact free exponential afterwards."""
    grid = _validate_grid(t_grid)
    config = basis.config
    w = np.eye(config.dim, dtype=complex)
    step = initial_step or profile.t1 / 16
    current = 0.0
    at_end: ComplexArray | None = None
    propagators: list[ComplexArray] = []
    for t in grid:
        if t <= profile.t1:
            if t > current:
                w, step, _ = _integrate_segment(config, profile, w, current, t, step, rtol)
                current = t
            propagators.append(w.copy())
            continue
        if at_end is None:
            at_end = w if current == profile.t1 else _integrate_segment(config, profile, w, current, profile.t1, step, rtol)[0]
        propagators.append(free_propagator(basis, t - profile.t1) @ at_end)
    return propagators


def ode_field_trajectory(field: FieldOperator, profile: GaugeProfile, t_grid, **options) -> list[FieldOperator]:
    return [field.transformed(w) for w in integrate_propagator(field.basis, profile, t_grid, **options)]


def ode_evolve_field(field: FieldOperator, profile: GaugeProfile, t_grid, **options) -> FieldOperator:
    """Field at the last grid time from direct integration of the field equation."""
    return ode_field_trajectory(field, profile, t_grid, **options)[-1]


def gauge_identity_residual(chi, basis: ModeBasis, *, literal: bool = True) -> float:
    """Spectral-norm defect of H0 D = D (H0 - q alpha grad chi) on the lattice.

    ``literal=False`` compares against the covariant form, H0 with link phases from
    A = grad chi, which is exact for the gauged hopping scheme.
    """
    config = basis.config
    chi = np.asarray(chi, dtype=float)
    h0 = basis.hamiltonian.matrix
    phases = gauge_phase_matrix(chi, config)
    gradient = lattice_gradient(chi, config)
    if literal:
        shifted = h0 - config.charge * np.kron(np.diag(gradient), ALPHA)
    else:
        shifted = build_hamiltonian(
            config,
            Potential(scalar=np.zeros_like(chi), vector=gradient, links=np.roll(chi, -1) - chi),
        ).matrix
    return float(np.linalg.norm(h0 @ phases - phases @ shifted, 2))


def field_mismatch(first: FieldOperator | ComplexArray, second: FieldOperator | ComplexArray) -> float:
    """Spectral norm of the difference between two single-particle maps."""
    maps = [item.single_particle_map() if isinstance(item, FieldOperator) else np.asarray(item) for item in (first, second)]
    return float(np.linalg.norm(maps[0] - maps[1], 2))
