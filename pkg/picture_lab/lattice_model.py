"""Single-particle lattice Dirac operator, its plane-wave eigenbasis and lattice calculus.

Ordering convention for every single-particle vector and matrix is (site x spinor):
component ``2 * j + s`` belongs to site ``j`` and spinor index ``s``. The lattice
inner product is ``<f, g> = a * sum(conj(f) * g)`` with ``a = L / N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

ComplexArray = NDArray[np.complex128]
RealArray = NDArray[np.float64]

# 1+1 dimensional reduction: alpha plays sigma_x, beta plays sigma_z.
ALPHA = np.array([[0, 1], [1, 0]], dtype=complex)
BETA = np.array([[1, 0], [0, -1]], dtype=complex)
SPINOR_IDENTITY = np.eye(2, dtype=complex)

PHASE_TOL = 1e-12


class SpectrumError(RuntimeError):
    """Raised when a free Hamiltonian does not have the expected Dirac spectrum."""


class PotentialError(ValueError):
    """Raised for potentials that are not real valued or have the wrong shape."""


class Scheme(str, Enum):
    SPECTRAL = "spectral"
    GAUGED_HOPPING = "gauged_hopping"


class LatticeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_sites: int = Field(4, gt=0)
    box_length: float = Field(4.0, gt=0)
    mass: float = Field(1.0, ge=0)
    charge: float = 1.0
    scheme: Scheme = Scheme.SPECTRAL

    @field_validator("n_sites")
    @classmethod
    def require_even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("n_sites must be even so the momentum grid is symmetric")
        return value

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_sites

    @property
    def dim(self) -> int:
        return 2 * self.n_sites

    def positions(self) -> RealArray:
        return self.spacing * np.arange(self.n_sites)


@dataclass(frozen=True, eq=False)
class SingleParticleOperator:
    matrix: ComplexArray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise ValueError(f"expected a square 2N x 2N matrix, got shape {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T, 2))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_defect() <= tol

    def eigenvalues(self) -> RealArray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True, eq=False)
class Potential:
    """Classical potential (A0, A) sampled on the sites at one instant.

    ``links[j]`` is the integral of A from x_j to x_{j+1}; the hopping scheme uses it
    for the link phases and falls back to the trapezoid rule when it is absent.
    """

    scalar: RealArray
    vector: RealArray
    links: RealArray | None = None

    def __post_init__(self) -> None:
        for name in ("scalar", "vector", "links"):
            value = getattr(self, name)
            if value is None:
                continue
            object.__setattr__(self, name, _real_samples(value, name))
        if self.scalar.shape != self.vector.shape:
            raise PotentialError("scalar and vector potential must share the lattice shape")
        if self.links is not None and self.links.shape != self.scalar.shape:
            raise PotentialError("link integrals must have one entry per site")

    @classmethod
    def zero(cls, n_sites: int) -> Potential:
        return cls(scalar=np.zeros(n_sites), vector=np.zeros(n_sites), links=np.zeros(n_sites))

    def link_integrals(self, spacing: float) -> RealArray:
        if self.links is not None:
            return self.links
        return 0.5 * spacing * (self.vector + np.roll(self.vector, -1))


def _real_samples(value, name: str) -> RealArray:
    array = np.asarray(value)
    if np.iscomplexobj(array):
        if np.any(np.abs(array.imag) > 0):
            raise PotentialError(f"{name} potential must be real valued")
        array = array.real
    array = np.asarray(array, dtype=float)
    if array.ndim != 1:
        raise PotentialError(f"{name} potential must be a one dimensional lattice function")
    return array


@dataclass(frozen=True, eq=False)
class Mode:
    index: int
    energy: float
    sign: int
    momentum: float
    wave: ComplexArray


@dataclass(frozen=True, eq=False)
class ModeBasis:
    config: LatticeConfig
    hamiltonian: SingleParticleOperator
    modes: tuple[Mode, ...]

    def mode(self, index: int) -> Mode:
        for mode in self.modes:
            if mode.index == index:
                return mode
        raise KeyError(f"no mode with index {index}")

    @cached_property
    def positive(self) -> tuple[Mode, ...]:
        return tuple(sorted((m for m in self.modes if m.index > 0), key=lambda m: m.index))

    @cached_property
    def negative(self) -> tuple[Mode, ...]:
        return tuple(sorted((m for m in self.modes if m.index < 0), key=lambda m: -m.index))

    @cached_property
    def matrix(self) -> ComplexArray:
        """Mode waves as columns: phi_1..phi_N, then phi_-1..phi_-N."""
        return np.column_stack([m.wave for m in self.positive + self.negative])

    @cached_property
    def energies(self) -> RealArray:
        return np.array([m.energy for m in self.positive])

    @property
    def vacuum_energy(self) -> float:
        return float(np.sum(self.energies))

    def orthonormality_defect(self) -> float:
        gram = self.config.spacing * self.matrix.conj().T @ self.matrix
        return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))

    def eigen_residual(self) -> float:
        h0 = self.hamiltonian.matrix
        return max(
            float(np.linalg.norm(h0 @ m.wave - m.sign * m.energy * m.wave)) for m in self.modes
        )

    def reconstruction_defect(self) -> float:
        spectrum = np.array([m.sign * m.energy for m in self.positive + self.negative])
        rebuilt = self.config.spacing * (self.matrix * spectrum) @ self.matrix.conj().T
        return float(np.linalg.norm(rebuilt - self.hamiltonian.matrix, 2))


def momentum_integers(config: LatticeConfig) -> NDArray[np.int64]:
    """Integers k in FFT order: 0, 1, ..., N/2 - 1, -N/2, ..., -1."""
    n = config.n_sites
    return np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64)


def momentum_grid(config: LatticeConfig) -> RealArray:
    return 2 * np.pi * np.fft.fftfreq(config.n_sites, d=config.spacing)


def fourier_matrix(config: LatticeConfig) -> ComplexArray:
    """Unitary plane-wave matrix, column k is exp(i p_k x_j) / sqrt(N)."""
    phases = np.outer(config.positions(), momentum_grid(config))
    return np.exp(1j * phases) / np.sqrt(config.n_sites)


def _hopping_matrix(config: LatticeConfig, theta: RealArray | None = None) -> ComplexArray:
    n, a = config.n_sites, config.spacing
    theta = np.zeros(n) if theta is None else theta
    hop = np.zeros((n, n), dtype=complex)
    for j in range(n):
        k = (j + 1) % n
        hop[j, k] += -0.5j / a * np.exp(-1j * theta[j])
        hop[k, j] += 0.5j / a * np.exp(1j * theta[j])
    return hop


def momentum_operator(config: LatticeConfig) -> ComplexArray:
    """Lattice -i d/dx on scalar functions for the configured scheme."""
    if config.scheme is Scheme.GAUGED_HOPPING:
        return _hopping_matrix(config)
    fourier = fourier_matrix(config)
    return (fourier * momentum_grid(config)) @ fourier.conj().T


def build_hamiltonian(config: LatticeConfig, potential: Potential | None = None) -> SingleParticleOperator:
    """Lattice H = H0 - q alpha A + q A0.

    Spectral: the literal kernel. Gauged hopping: A enters through the link phases
    exp(-i q theta_j), which keeps lattice gauge covariance exact.
    """
    n, q = config.n_sites, config.charge
    if potential is not None and potential.scalar.shape != (n,):
        raise PotentialError(f"potential has {potential.scalar.shape[0]} samples, lattice has {n} sites")
    if config.scheme is Scheme.GAUGED_HOPPING:
        theta = None if potential is None else q * potential.link_integrals(config.spacing)
        matrix = np.kron(_hopping_matrix(config, theta), ALPHA)
    else:
        matrix = np.kron(momentum_operator(config), ALPHA)
        if potential is not None:
            matrix = matrix - q * np.kron(np.diag(potential.vector), ALPHA)
    matrix = matrix + config.mass * np.kron(np.eye(n), BETA)
    if potential is not None:
        matrix = matrix + q * np.kron(np.diag(potential.scalar), SPINOR_IDENTITY)
    return SingleParticleOperator(matrix)


def build_free_hamiltonian(config: LatticeConfig) -> SingleParticleOperator:
    return build_hamiltonian(config, None)


def _fix_phase(spinor: ComplexArray) -> ComplexArray:
    spinor = spinor / np.linalg.norm(spinor)
    for value in spinor:
        if abs(value) > PHASE_TOL:
            return spinor * (np.conj(value) / abs(value))
    return spinor


def mode_basis(
    h0: SingleParticleOperator,
    config: LatticeConfig,
    *,
    degeneracy_tol: float = 1e-9,
    check_tol: float = 1e-10,
) -> ModeBasis:
    """Plane-wave eigenmodes of a translation-invariant H0.

    One mode per (momentum, energy sign). Positive modes are numbered n = 1..N by
    |k| then by sign of k, so b_1 is the k = 0 electron. Zero-energy blocks (m = 0)
    take the beta eigenvectors, +1 for the electron and -1 for the positron.
    """
    n = config.n_sites
    if h0.dim != config.dim:
        raise ValueError(f"Hamiltonian dimension {h0.dim} does not match 2N = {config.dim}")
    if not h0.is_hermitian(check_tol):
        raise SpectrumError("free Hamiltonian is not Hermitian")

    fourier = fourier_matrix(config)
    transform = np.kron(fourier, SPINOR_IDENTITY)
    blocks = transform.conj().T @ h0.matrix @ transform
    on_block = np.kron(np.eye(n), np.ones((2, 2))).astype(bool)
    leak = float(np.max(np.abs(blocks[~on_block]))) if n > 1 else 0.0
    if leak > check_tol * max(1.0, float(np.max(np.abs(blocks)))):
        raise SpectrumError(f"Hamiltonian is not translation invariant (leak {leak:.3e})")

    integers = momentum_integers(config)
    momenta = momentum_grid(config)
    order = sorted(range(n), key=lambda col: (abs(integers[col]), integers[col] < 0))
    positive: list[Mode] = []
    negative: list[Mode] = []
    for rank, col in enumerate(order, start=1):
        block = blocks[2 * col : 2 * col + 2, 2 * col : 2 * col + 2]
        values, vectors = np.linalg.eigh(0.5 * (block + block.conj().T))
        if np.any(np.abs(values) < degeneracy_tol):
            if config.mass > 0 or np.any(np.abs(values) >= degeneracy_tol):
                raise SpectrumError(
                    f"unexpected near-zero eigenvalue {values} at k = {integers[col]} with m = {config.mass}"
                )
            electron, positron, energy = np.array([1, 0], complex), np.array([0, 1], complex), 0.0
        else:
            if not values[0] < 0 < values[1]:
                raise SpectrumError(f"block at k = {integers[col]} is not a +-E pair: {values}")
            electron, positron = vectors[:, 1], vectors[:, 0]
            energy = float(0.5 * (values[1] - values[0]))
        plane = np.sqrt(n) * fourier[:, col] / np.sqrt(config.box_length)
        positive.append(Mode(rank, energy, +1, float(momenta[col]), np.kron(plane, _fix_phase(electron))))
        negative.append(Mode(-rank, energy, -1, float(momenta[col]), np.kron(plane, _fix_phase(positron))))

    basis = ModeBasis(config=config, hamiltonian=h0, modes=tuple(positive + negative))
    if basis.orthonormality_defect() > check_tol:
        raise SpectrumError(f"mode basis is not orthonormal ({basis.orthonormality_defect():.3e})")
    if basis.eigen_residual() > check_tol * max(1.0, float(np.max(basis.energies))):
        raise SpectrumError(f"mode basis does not diagonalize H0 ({basis.eigen_residual():.3e})")
    return basis


def _wavenumbers(n: int, box_length: float) -> RealArray:
    return 2 * np.pi * np.fft.fftfreq(n, d=box_length / n)


def spectral_gradient(values, box_length: float):
    """Fourier-exact derivative on the periodic grid; the Nyquist coefficient is dropped."""
    values = np.asarray(values)
    n = values.shape[-1]
    k = _wavenumbers(n, box_length)
    if n % 2 == 0:
        k[n // 2] = 0.0
    derivative = np.fft.ifft(1j * k * np.fft.fft(values, axis=-1), axis=-1)
    return derivative.real if np.isrealobj(values) else derivative


def spectral_laplacian(values, box_length: float):
    values = np.asarray(values)
    k = _wavenumbers(values.shape[-1], box_length)
    laplacian = np.fft.ifft(-(k**2) * np.fft.fft(values, axis=-1), axis=-1)
    return laplacian.real if np.isrealobj(values) else laplacian


def central_difference_gradient(values, box_length: float):
    values = np.asarray(values)
    spacing = box_length / values.shape[-1]
    return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (2 * spacing)


def lattice_gradient(values, config: LatticeConfig):
    """The derivative that matches the configured discretization."""
    if config.scheme is Scheme.GAUGED_HOPPING:
        return central_difference_gradient(values, config.box_length)
    return spectral_gradient(values, config.box_length)


def lattice_integral(values, config: LatticeConfig) -> float:
    return float(config.spacing * np.sum(values))


def band_limit_excess(values, fraction: float = 0.5) -> float:
    """Relative Fourier weight above |k| = fraction * N / 2."""
    values = np.asarray(values)
    n = values.shape[-1]
    coefficients = np.fft.fft(values)
    total = float(np.linalg.norm(coefficients))
    if total == 0.0:
        return 0.0
    integers = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    return float(np.linalg.norm(coefficients[integers > fraction * n / 2]) / total)


def band_limited(values, fraction: float = 0.5):
    values = np.asarray(values)
    n = values.shape[-1]
    coefficients = np.fft.fft(values)
    coefficients[np.abs(np.fft.fftfreq(n, d=1.0 / n)) > fraction * n / 2] = 0.0
    filtered = np.fft.ifft(coefficients)
    return filtered.real if np.isrealobj(values) else filtered
