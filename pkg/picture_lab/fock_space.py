"""Second-quantized layer: ladder operators, the field operator and its symmetrized bilinears.

Fermionic modes are encoded with a Jordan-Wigner string in the fixed order
b_1..b_N, d_1..d_N. The field operator is kept in structured form,
``psi(x_i) = sum_m C[i, m] A_m`` with ``A_m = b_m`` for m <= N and ``A_m = d_m^dagger``
otherwise, so evolving the field only touches the 2N x 2N coefficient matrix.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np
import scipy.sparse as sp
from loguru import logger
from numpy.typing import NDArray

from .lattice_model import (
    ALPHA,
    SPINOR_IDENTITY,
    ComplexArray,
    LatticeConfig,
    ModeBasis,
    Potential,
    Scheme,
    SingleParticleOperator,
    build_hamiltonian,
)

DEFAULT_MAX_SITES = 8

StateVector = NDArray[np.complex128]

_LOWER = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
_PARITY = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
_IDENTITY = sp.identity(2, dtype=complex, format="csr")


class FockCapacityError(MemoryError):
    """Raised when a Fock space would exceed the configured size cap."""


class FieldMismatchError(ValueError):
    """Raised when ladder operators, bases and kernels disagree on dimensions."""


class WavePacketError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FockOperator:
    matrix: sp.csr_matrix

    def __post_init__(self) -> None:
        matrix = sp.csr_matrix(self.matrix, dtype=complex)
        if matrix.shape[0] != matrix.shape[1]:
            raise FieldMismatchError(f"Fock operator must be square, got {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls, dim: int) -> FockOperator:
        return cls(sp.identity(dim, dtype=complex, format="csr"))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: FockOperator) -> FockOperator:
        return FockOperator(self.matrix + other.matrix)

    def __sub__(self, other: FockOperator) -> FockOperator:
        return FockOperator(self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> FockOperator:
        return FockOperator(self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> FockOperator:
        return FockOperator(-self.matrix)

    def adjoint(self) -> FockOperator:
        return FockOperator(self.matrix.conj().T)

    def apply(self, state: StateVector) -> StateVector:
        return self.matrix @ state

    def expectation(self, state: StateVector) -> complex:
        return complex(np.vdot(state, self.matrix @ state))

    def distance(self, other: FockOperator) -> float:
        difference = (self.matrix - other.matrix).tocoo()
        return float(np.max(np.abs(difference.data))) if difference.nnz else 0.0

    def hermiticity_defect(self) -> float:
        return self.distance(self.adjoint())

    def dense(self) -> NDArray[np.complex128]:
        return self.matrix.toarray()


def jordan_wigner_annihilator(index: int, n_modes: int) -> sp.csr_matrix:
    factors = [_PARITY] * index + [_LOWER] + [_IDENTITY] * (n_modes - index - 1)
    return reduce(lambda left, right: sp.kron(left, right, format="csr"), factors)


@dataclass(frozen=True, eq=False)
class LadderSet:
    n_sites: int
    electrons: tuple[FockOperator, ...]
    positrons: tuple[FockOperator, ...]

    @property
    def dim(self) -> int:
        return 4**self.n_sites

    @property
    def mode_count(self) -> int:
        return len(self.electrons) + len(self.positrons)

    def b(self, n: int) -> FockOperator:
        return self.electrons[n - 1]

    def b_dag(self, n: int) -> FockOperator:
        return self.electrons[n - 1].adjoint()

    def d(self, n: int) -> FockOperator:
        return self.positrons[n - 1]

    def d_dag(self, n: int) -> FockOperator:
        return self.positrons[n - 1].adjoint()

    @cached_property
    def mode_operators(self) -> tuple[FockOperator, ...]:
        """The A_m of the field expansion: b_1..b_N, d_1^dagger..d_N^dagger."""
        return self.electrons + tuple(d.adjoint() for d in self.positrons)

    @cached_property
    def _lift(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Linear map from the flattened M_mn to the CSR data of sum_mn M_mn A_m^dagger A_n."""
        operators = [op.matrix for op in self.mode_operators]
        count = len(operators)
        rows, cols, values, pairs = [], [], [], []
        for m, left in enumerate(operators):
            raised = left.conj().T.tocsr()
            for n, right in enumerate(operators):
                product = (raised @ right).tocoo()
                rows.append(product.row)
                cols.append(product.col)
                values.append(product.data)
                pairs.append(np.full(product.nnz, m * count + n))
        keys = np.concatenate(rows).astype(np.int64) * self.dim + np.concatenate(cols)
        entries, slots = np.unique(keys, return_inverse=True)
        lift = sp.csr_matrix(
            (np.concatenate(values), (slots, np.concatenate(pairs))), shape=(entries.size, count * count)
        )
        indptr = np.concatenate([[0], np.cumsum(np.bincount(entries // self.dim, minlength=self.dim))])
        return lift, (entries % self.dim).astype(np.int64), indptr

    def quadratic_form(self, coefficients: ComplexArray) -> FockOperator:
        """sum_mn M_mn A_m^dagger A_n."""
        coefficients = np.asarray(coefficients, dtype=complex)
        if coefficients.shape != (self.mode_count, self.mode_count):
            raise FieldMismatchError(f"expected {self.mode_count}x{self.mode_count} coefficients")
        lift, indices, indptr = self._lift
        data = lift @ coefficients.ravel()
        return FockOperator(sp.csr_matrix((data, indices, indptr), shape=(self.dim, self.dim)))

    def vacuum(self) -> StateVector:
        return vacuum_state(self)


def build_ladder_operators(basis: ModeBasis, *, max_sites: int = DEFAULT_MAX_SITES) -> LadderSet:
    n = basis.config.n_sites
    if len(basis.positive) != n or len(basis.negative) != n:
        raise FieldMismatchError(
            f"mode basis has {len(basis.positive)} positive and {len(basis.negative)} negative modes, expected {n} each"
        )
    if n > max_sites:
        raise FockCapacityError(f"Fock dimension 4^{n} = {4**n} exceeds the cap of N = {max_sites} sites")
    n_modes = 2 * n
    operators = [FockOperator(jordan_wigner_annihilator(j, n_modes)) for j in range(n_modes)]
    logger.debug("built {} fermionic modes on a {}-dimensional Fock space", n_modes, 4**n)
    return LadderSet(n_sites=n, electrons=tuple(operators[:n]), positrons=tuple(operators[n:]))


def vacuum_state(ladder: LadderSet) -> StateVector:
    state = np.zeros(ladder.dim, dtype=complex)
    state[0] = 1.0
    return state


def anticommutator(left: FockOperator, right: FockOperator) -> FockOperator:
    return left @ right + right @ left


@dataclass(frozen=True, eq=False)
class FieldOperator:
    ladder: LadderSet
    basis: ModeBasis
    coefficients: ComplexArray

    @property
    def config(self) -> LatticeConfig:
        return self.basis.config

    @property
    def n_components(self) -> int:
        return self.coefficients.shape[0]

    def component(self, site: int, spinor: int) -> FockOperator:
        return self.component_at(2 * site + spinor)

    def component_at(self, index: int) -> FockOperator:
        row = self.coefficients[index]
        terms = [c * op.matrix for c, op in zip(row, self.ladder.mode_operators) if c != 0]
        if not terms:
            return FockOperator(sp.csr_matrix((self.ladder.dim, self.ladder.dim), dtype=complex))
        return FockOperator(reduce(lambda left, right: left + right, terms))

    def transformed(self, propagator: ComplexArray) -> FieldOperator:
        """Field whose single-particle content is propagated by ``propagator``."""
        return FieldOperator(self.ladder, self.basis, np.asarray(propagator) @ self.coefficients)

    def single_particle_map(self) -> ComplexArray:
        """W with psi = W psi_S, recovered through the lattice orthonormality of the modes."""
        return self.config.spacing * self.coefficients @ self.basis.matrix.conj().T

    def coefficient_anticommutator_defect(self) -> float:
        expected = np.eye(self.n_components) / self.config.spacing
        return float(np.max(np.abs(self.coefficients @ self.coefficients.conj().T - expected)))


def assemble_field_operator(ladder: LadderSet, basis: ModeBasis) -> FieldOperator:
    if ladder.n_sites != basis.config.n_sites or ladder.mode_count != len(basis.modes):
        raise FieldMismatchError(
            f"ladder set has {ladder.mode_count} modes, basis has {len(basis.modes)}"
        )
    return FieldOperator(ladder=ladder, basis=basis, coefficients=basis.matrix.copy())


def anticommutator_defect(field: FieldOperator, pairs: Iterable[tuple[int, int]] | None = None) -> float:
    """Largest deviation from the equal-time relations on the requested component pairs."""
    count = field.n_components
    pairs = list(pairs) if pairs is not None else [(i, j) for i in range(count) for j in range(count)]
    identity = FockOperator.identity(field.ladder.dim)
    components: dict[int, FockOperator] = {}

    def component(index: int) -> FockOperator:
        if index not in components:
            components[index] = field.component_at(index)
        return components[index]

    worst = 0.0
    delta = 1.0 / field.config.spacing
    for i, j in pairs:
        left, right = component(i), component(j)
        mixed = anticommutator(left.adjoint(), right)
        expected = identity * (delta if i == j else 0.0)
        worst = max(worst, mixed.distance(expected), anticommutator(left, right).distance(0.0 * identity))
    return worst


def _kernel_matrix(kernel, field: FieldOperator) -> ComplexArray:
    matrix = kernel.matrix if isinstance(kernel, SingleParticleOperator) else np.asarray(kernel, dtype=complex)
    if matrix.shape != (field.n_components, field.n_components):
        raise FieldMismatchError(f"kernel shape {matrix.shape} does not match the field's {field.n_components} components")
    return matrix


def symmetrized_bilinear(field: FieldOperator, kernel) -> FockOperator:
    """(1/2) a sum_ij K_ij [psi_i^dagger, psi_j] with the lattice measure a."""
    matrix = _kernel_matrix(kernel, field)
    reduced = field.config.spacing * field.coefficients.conj().T @ matrix @ field.coefficients
    identity = FockOperator.identity(field.ladder.dim)
    return field.ladder.quadratic_form(reduced) - identity * (0.5 * np.trace(reduced))


def renormalization_constant(basis: ModeBasis) -> float:
    """xi_r = -E_vac, fixed once from the free basis."""
    return -basis.vacuum_energy


def fock_hamiltonian(field: FieldOperator, kernel) -> FockOperator:
    """Symmetrized bilinear of ``kernel`` minus the fixed renormalization constant."""
    xi = renormalization_constant(field.basis)
    return symmetrized_bilinear(field, kernel) - FockOperator.identity(field.ladder.dim) * xi


def free_hamiltonian_operator(field: FieldOperator, basis: ModeBasis | None = None) -> FockOperator:
    basis = basis or field.basis
    return symmetrized_bilinear(field, basis.hamiltonian) - FockOperator.identity(field.ladder.dim) * renormalization_constant(basis)


def _site_kernel(config: LatticeConfig, site: int, spinor_matrix: np.ndarray) -> ComplexArray:
    if not 0 <= site < config.n_sites:
        raise IndexError(f"site {site} outside lattice of {config.n_sites} sites")
    selector = np.zeros((config.n_sites, config.n_sites))
    selector[site, site] = 1.0
    return (config.charge / config.spacing) * np.kron(selector, spinor_matrix)


def current_operator(field: FieldOperator, site: int) -> FockOperator:
    """J(x) = (q/2)[psi^dagger, alpha psi] at one site."""
    return symmetrized_bilinear(field, _site_kernel(field.config, site, ALPHA))


def charge_operator(field: FieldOperator, site: int) -> FockOperator:
    """rho(x) = (q/2)[psi^dagger, psi] at one site."""
    return symmetrized_bilinear(field, _site_kernel(field.config, site, SPINOR_IDENTITY))


def total_charge_operator(field: FieldOperator) -> FockOperator:
    return symmetrized_bilinear(field, field.config.charge * np.eye(field.n_components))


def interaction_hamiltonian(field: FieldOperator, potential: Potential | tuple) -> FockOperator:
    """H0 - integral J.A + integral rho A0 for a potential sampled at one instant.

    The hopping scheme couples A through link phases, so its Hamiltonian is the
    bilinear of the covariant single-particle kernel rather than the J.A sum.
    """
    if not isinstance(potential, Potential):
        scalar, vector = potential
        potential = Potential(scalar=scalar, vector=vector)
    config = field.config
    if config.scheme is Scheme.GAUGED_HOPPING:
        return fock_hamiltonian(field, build_hamiltonian(config, potential))
    hamiltonian = free_hamiltonian_operator(field)
    a = config.spacing
    for site in range(config.n_sites):
        if potential.vector[site] != 0.0:
            hamiltonian = hamiltonian - current_operator(field, site) * (a * potential.vector[site])
        if potential.scalar[site] != 0.0:
            hamiltonian = hamiltonian + charge_operator(field, site) * (a * potential.scalar[site])
    return hamiltonian


def packet_amplitudes(basis: ModeBasis, weights: Mapping[int, complex] | Sequence[complex]) -> ComplexArray:
    n = basis.config.n_sites
    amplitudes = np.zeros(n, dtype=complex)
    if isinstance(weights, Mapping):
        for index, weight in weights.items():
            if not 1 <= int(index) <= n:
                raise WavePacketError(f"wave packets use positive modes 1..{n}, got {index}")
            amplitudes[int(index) - 1] = weight
    else:
        values = np.asarray(weights, dtype=complex)
        if values.shape != (n,):
            raise WavePacketError(f"expected {n} weights, got {values.shape}")
        amplitudes[:] = values
    norm = float(np.linalg.norm(amplitudes))
    if norm == 0.0:
        raise WavePacketError("wave packet weights are all zero")
    if abs(norm - 1.0) > 1e-12:
        logger.warning("renormalizing wave packet weights (norm {:.6g})", norm)
    return amplitudes / norm


def packet_energy(basis: ModeBasis, weights) -> float:
    """sum_n |c_n|^2 E_n for a one-electron packet."""
    amplitudes = packet_amplitudes(basis, weights)
    return float(np.sum(np.abs(amplitudes) ** 2 * basis.energies))


def prepare_wave_packet(basis: ModeBasis, ladder: LadderSet, weights) -> StateVector:
    """|Omega(0)> = sum_{n>0} c_n b_n^dagger |0>."""
    amplitudes = packet_amplitudes(basis, weights)
    vacuum = vacuum_state(ladder)
    state = np.zeros(ladder.dim, dtype=complex)
    for n, amplitude in enumerate(amplitudes, start=1):
        if amplitude != 0:
            state += amplitude * ladder.b_dag(n).apply(vacuum)
    return state / np.linalg.norm(state)
