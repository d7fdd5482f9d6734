"""Schrodinger-picture evolution of Fock states under the time-dependent Hamiltonian.

The pulse is time-ordered with uniform steps. Each step exponentiates one quadratic
Hamiltonian: either H(t) sampled at the step midpoint, or the fourth-order Magnus
generator built from two Gauss-Legendre samples. The commutator of two symmetrized
bilinears is the bilinear of the kernel commutator, so both orderings stay a single
kernel per step and the step list describes U(t) exactly. The exponential action is
a Lanczos iteration; the dense exponential is kept for small Fock spaces as an oracle.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field as dataclass_field
from enum import Enum
from functools import reduce

import numpy as np
from loguru import logger
from scipy.linalg import eigh_tridiagonal, expm
from scipy.sparse.linalg import expm_multiply

from .fock_space import FieldOperator, FockOperator, StateVector, fock_hamiltonian, free_hamiltonian_operator
from .gauge_profiles import GaugeProfile
from .heisenberg_evolution import single_particle_kernel
from .lattice_model import ComplexArray, LatticeConfig

KRYLOV_TOL = 1e-12
DT_TOL = 1e-8
MAX_HALVINGS = 12
INITIAL_STEPS = 16
DENSE_MAX_DIM = 4**4
NORM_TOL = 1e-10
FREE_STEP = 0.25
GAUSS_OFFSET = np.sqrt(3) / 6
MAGNUS_WEIGHT = np.sqrt(3) / 12


class Ordering(str, Enum):
    MIDPOINT = "midpoint"
    MAGNUS4 = "magnus4"


class NonHermitianError(ValueError):
    pass


class KrylovConvergenceError(RuntimeError):
    def __init__(self, achieved: float, dimension: int) -> None:
        super().__init__(f"Lanczos exponential did not converge in {dimension} vectors (error estimate {achieved:.3e})")
        self.achieved = achieved
        self.dimension = dimension


class TimeStepConvergenceError(RuntimeError):
    pass


def _krylov_first_column(alphas: list[float], betas: list[float], dt: float) -> ComplexArray:
    """First column of exp(-i dt T) for the Lanczos tridiagonal T."""
    if len(alphas) == 1:
        return np.array([np.exp(-1j * dt * alphas[0])])
    values, vectors = eigh_tridiagonal(np.asarray(alphas), np.asarray(betas))
    return vectors @ (np.exp(-1j * dt * values) * vectors[0])


def lanczos_expm_action(
    hamiltonian: FockOperator,
    state: StateVector,
    dt: float,
    *,
    tol: float = KRYLOV_TOL,
    max_dim: int = 120,
) -> StateVector:
    """exp(-i H dt) |state> in a fully reorthogonalized Krylov space."""
    norm = float(np.linalg.norm(state))
    if norm == 0.0:
        return np.zeros_like(state)
    matrix = hamiltonian.matrix
    limit = min(max_dim, hamiltonian.dim)
    vectors = [np.asarray(state, dtype=complex) / norm]
    alphas: list[float] = []
    betas: list[float] = []
    error = np.inf
    for j in range(limit):
        w = matrix @ vectors[j]
        alphas.append(float(np.vdot(vectors[j], w).real))
        block = np.array(vectors)
        w = w - block.T @ (block.conj() @ w)
        w = w - block.T @ (block.conj() @ w)
        beta = float(np.linalg.norm(w))
        small = _krylov_first_column(alphas, betas, dt)
        error = beta * abs(small[-1])
        if error < tol or beta < 1e-14 or j + 1 == hamiltonian.dim:
            logger.trace("Lanczos converged with {} vectors", j + 1)
            return norm * (block.T @ small)
        betas.append(beta)
        vectors.append(w / beta)
    raise KrylovConvergenceError(float(error), limit)


def kernel_hermiticity_defect(kernel: ComplexArray) -> float:
    return float(np.max(np.abs(kernel - kernel.conj().T)))


def propagator_step(
    hamiltonian: FockOperator,
    dt: float,
    state: StateVector,
    *,
    tol: float = KRYLOV_TOL,
    dense: bool = False,
    hermiticity_tol: float = 1e-10,
    check_hermiticity: bool = True,
) -> StateVector:
    if dt < 0:
        raise ValueError(f"time step must be non-negative, got {dt}")
    if check_hermiticity:
        defect = hamiltonian.hermiticity_defect()
        if defect > hermiticity_tol:
            raise NonHermitianError(f"Hamiltonian is not Hermitian (defect {defect:.3e})")
    if dt == 0:
        return np.array(state, dtype=complex)
    if dense:
        if hamiltonian.dim > DENSE_MAX_DIM:
            raise ValueError(f"dense exponential is limited to Fock dimension {DENSE_MAX_DIM}")
        return expm(-1j * dt * hamiltonian.dense()) @ state
    return lanczos_expm_action(hamiltonian, state, dt, tol=tol)


def step_kernel(
    config: LatticeConfig,
    profile: GaugeProfile,
    start: float,
    dt: float,
    ordering: Ordering | str = Ordering.MAGNUS4,
) -> ComplexArray:
    """Single-particle generator of one step: exp(-i dt K) approximates the time-ordered exponential."""
    if Ordering(ordering) is Ordering.MIDPOINT:
        return single_particle_kernel(config, profile, start + 0.5 * dt)
    early = single_particle_kernel(config, profile, start + (0.5 - GAUSS_OFFSET) * dt)
    late = single_particle_kernel(config, profile, start + (0.5 + GAUSS_OFFSET) * dt)
    return 0.5 * (early + late) - 1j * MAGNUS_WEIGHT * dt * (late @ early - early @ late)


@dataclass(frozen=True, eq=False)
class PropagationStep:
    start: float
    dt: float
    kernel: ComplexArray


@dataclass(frozen=True, eq=False)
class SchrodingerTrajectory:
    times: np.ndarray
    states: tuple[StateVector, ...]
    energies: tuple[float, ...]
    dt: float
    ordering: Ordering
    steps: tuple[PropagationStep, ...] = dataclass_field(repr=False)

    @property
    def final_state(self) -> StateVector:
        return self.states[-1]

    def state_at(self, t: float) -> StateVector:
        matches = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-12))
        if matches.size == 0:
            raise KeyError(f"t = {t} is not a grid time of this trajectory")
        return self.states[int(matches[0])]

    def norm_drift(self) -> float:
        return max(abs(float(np.linalg.norm(state)) - 1.0) for state in self.states)

    def distance(self, other: SchrodingerTrajectory) -> float:
        """Largest change of the final state or of any H0 expectation between two runs."""
        energy = max(abs(a - b) for a, b in zip(self.energies, other.energies))
        return max(float(np.linalg.norm(self.final_state - other.final_state)), energy)

    def _steps_until(self, until: float | None) -> list[PropagationStep]:
        if until is None:
            return list(self.steps)
        return [step for step in self.steps if step.start + step.dt <= until + 1e-12]

    def dense_propagator(self, field: FieldOperator, until: float | None = None) -> ComplexArray:
        """U(t) as a dense Fock matrix, rebuilt from the recorded step kernels."""
        dim = field.ladder.dim
        if dim > DENSE_MAX_DIM:
            raise ValueError(f"dense propagators are limited to Fock dimension {DENSE_MAX_DIM}")
        propagator = np.eye(dim, dtype=complex)
        # consecutive steps sharing a kernel (the free stretch after t1) collapse into one exponential
        groups: list[tuple[ComplexArray, float]] = []
        for step in self._steps_until(until):
            if groups and groups[-1][0] is step.kernel:
                groups[-1] = (step.kernel, groups[-1][1] + step.dt)
            else:
                groups.append((step.kernel, step.dt))
        for kernel, dt in groups:
            generator = fock_hamiltonian(field, kernel).matrix * (-1j * dt)
            propagator = expm_multiply(generator.tocsc(), propagator)
        return propagator

    def single_particle_image(self, until: float | None = None) -> ComplexArray:
        """The 2N x 2N time-ordered product the same step list induces on one particle."""
        steps = self._steps_until(until)
        if not steps:
            return np.eye(self.steps[0].kernel.shape[0] if self.steps else 0, dtype=complex)
        factors = [expm(-1j * step.dt * step.kernel) for step in steps]
        return reduce(lambda acc, factor: factor @ acc, factors[1:], factors[0])


def _segments(grid: np.ndarray, t1: float) -> list[float]:
    boundaries = set(float(t) for t in grid)
    if grid[-1] > t1:
        boundaries.add(float(t1))
    return sorted(boundaries)


def _run(
    state0: StateVector,
    profile: GaugeProfile,
    field_S: FieldOperator,
    grid: np.ndarray,
    dt: float,
    *,
    tol: float,
    dense: bool,
    hermiticity_tol: float,
    ordering: Ordering,
) -> SchrodingerTrajectory:
    config = field_S.config
    free_kernel = field_S.basis.hamiltonian.matrix
    free_hamiltonian = free_hamiltonian_operator(field_S)
    state = np.array(state0, dtype=complex)
    states: dict[float, StateVector] = {0.0: state.copy()}
    steps: list[PropagationStep] = []
    boundaries = _segments(grid, profile.t1)
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        inside = stop <= profile.t1
        # H0 is constant after the pulse, so those steps are exact at any length
        width = dt if inside else max(dt, FREE_STEP)
        count = max(1, int(np.ceil((stop - start) / width - 1e-9)))
        h = (stop - start) / count
        for i in range(count):
            t = start + i * h
            if inside:
                kernel = step_kernel(config, profile, t, h, ordering)
                defect = kernel_hermiticity_defect(kernel)
                if defect > hermiticity_tol:
                    raise NonHermitianError(f"step kernel at t = {t:.6g} is not Hermitian (defect {defect:.3e})")
                hamiltonian = fock_hamiltonian(field_S, kernel)
            else:
                kernel, hamiltonian = free_kernel, free_hamiltonian
            state = propagator_step(hamiltonian, h, state, tol=tol, dense=dense, check_hermiticity=False)
            steps.append(PropagationStep(start=t, dt=h, kernel=kernel))
        states[stop] = state.copy()
    ordered = tuple(states[float(t)] for t in grid)
    energies = tuple(free_hamiltonian.expectation(s).real for s in ordered)
    return SchrodingerTrajectory(
        times=grid, states=ordered, energies=energies, dt=dt, ordering=ordering, steps=tuple(steps)
    )


def evolve_state(
    state0: StateVector,
    profile: GaugeProfile,
    field_S: FieldOperator,
    t_grid: Sequence[float],
    *,
    dt: float | None = None,
    ordering: Ordering | str = Ordering.MAGNUS4,
    tol: float = KRYLOV_TOL,
    dt_tol: float = DT_TOL,
    max_halvings: int = MAX_HALVINGS,
    initial_steps: int = INITIAL_STEPS,
    dense: bool = False,
    hermiticity_tol: float = 1e-10,
) -> SchrodingerTrajectory:
    """|Omega(t)> on the grid: H(t) time-ordered inside the pulse, H0 after it.

    With ``dt`` omitted the step starts at t1 / initial_steps and is halved until
    neither the final state nor any grid-time H0 expectation moves by ``dt_tol``.
    """
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0 or np.any(np.diff(grid) < 0):
        raise ValueError("time grid must be monotone and start at 0")
    if abs(float(np.linalg.norm(state0)) - 1.0) > NORM_TOL:
        raise ValueError("initial state must be normalized")
    options = dict(tol=tol, dense=dense, hermiticity_tol=hermiticity_tol, ordering=Ordering(ordering))
    if dt is not None:
        return _run(state0, profile, field_S, grid, dt, **options)

    step = profile.t1 / initial_steps
    previous = _run(state0, profile, field_S, grid, step, **options)
    change = np.inf
    for halving in range(1, max_halvings + 1):
        step /= 2
        current = _run(state0, profile, field_S, grid, step, **options)
        change = current.distance(previous)
        logger.debug("dt halving {}: dt = {:.3e}, change {:.3e}", halving, step, change)
        if change < dt_tol:
            return current
        previous = current
    raise TimeStepConvergenceError(
        f"final state still moved by {change:.3e} after {max_halvings} halvings (dt = {step:.3e})"
    )
