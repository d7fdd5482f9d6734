"""Pure-gauge potential pulses: A0 = d(chi)/dt and A = -grad(chi) on [0, t1], zero outside."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from loguru import logger

from .lattice_model import (
    LatticeConfig,
    Potential,
    RealArray,
    band_limit_excess,
    lattice_gradient,
)

RAMP_TOL = 1e-12
BAND_TOL = 1e-10


class RampError(ValueError):
    pass


class BandLimitError(ValueError):
    pass


@dataclass(frozen=True)
class RampShape:
    """A switch-on curve s -> value(s) on [0, 1] together with its derivative."""

    name: str
    value: Callable[[float], float]
    rate: Callable[[float], float]

    def __post_init__(self) -> None:
        checks = {
            "ramp(0) = 0": self.value(0.0),
            "ramp'(0) = 0": self.rate(0.0),
            "ramp(1) = 1": self.value(1.0) - 1.0,
        }
        failed = [label for label, residual in checks.items() if abs(residual) > RAMP_TOL]
        if failed:
            raise RampError(f"ramp {self.name!r} violates the initial conditions: {', '.join(failed)}")


class Ramp(str, Enum):
    POLYNOMIAL = "polynomial"
    COSINE = "cosine"

    @property
    def shape(self) -> RampShape:
        return _BUILTIN_RAMPS[self]


_BUILTIN_RAMPS = {
    Ramp.POLYNOMIAL: RampShape(
        "polynomial",
        value=lambda s: 3 * s**2 - 2 * s**3,
        rate=lambda s: 6 * s - 6 * s**2,
    ),
    Ramp.COSINE: RampShape(
        "cosine",
        value=lambda s: 0.5 * (1 - np.cos(np.pi * s)),
        rate=lambda s: 0.5 * np.pi * np.sin(np.pi * s),
    ),
}


def resolve_ramp(ramp: Ramp | RampShape | str) -> RampShape:
    if isinstance(ramp, RampShape):
        return ramp
    try:
        return Ramp(ramp).shape
    except ValueError as exc:
        raise RampError(f"unknown ramp {ramp!r}") from exc


@dataclass(frozen=True, eq=False)
class GaugeProfile:
    """chi(x, t) = f * ramp(t / t1) * spatial(x).

    chi is held at chi(x, t1) after the pulse while the potential itself is zero there;
    the jump of A at t1 is the abrupt shutoff the closed-form evolution relies on.
    """

    config: LatticeConfig
    spatial: RealArray
    t1: float
    ramp: RampShape
    amplitude: float

    def _progress(self, t: float) -> float:
        return min(max(t / self.t1, 0.0), 1.0)

    def active(self, t: float) -> bool:
        return 0.0 <= t <= self.t1

    def chi(self, t: float) -> RealArray:
        return self.amplitude * self.ramp.value(self._progress(t)) * self.spatial

    def chi_at_end(self) -> RealArray:
        return self.amplitude * self.spatial

    def chi_rate(self, t: float) -> RealArray:
        if not self.active(t):
            return np.zeros_like(self.spatial)
        return self.amplitude * self.ramp.rate(self._progress(t)) / self.t1 * self.spatial

    def vector_rate(self, t: float) -> RealArray:
        """dA/dt = -grad(d chi/dt) inside the pulse."""
        return -lattice_gradient(self.chi_rate(t), self.config)

    def potential_at(self, t: float) -> Potential:
        if not self.active(t) or self.amplitude == 0.0:
            return Potential.zero(self.config.n_sites)
        chi = self.chi(t)
        return Potential(
            scalar=self.chi_rate(t),
            vector=-lattice_gradient(chi, self.config),
            links=-(np.roll(chi, -1) - chi),
        )

    def to_record(self) -> dict:
        return {
            "spatial": [float(v) for v in self.spatial],
            "ramp": self.ramp.name,
            "f": float(self.amplitude),
            "t1": float(self.t1),
        }


def build_gauge_profile(
    spatial_profile,
    t1: float,
    ramp: Ramp | RampShape | str = Ramp.POLYNOMIAL,
    f: float = 1.0,
    *,
    config: LatticeConfig,
    band_fraction: float = 0.5,
    enforce_band_limit: bool = True,
) -> GaugeProfile:
    if not t1 > 0:
        raise ValueError(f"pulse end t1 must be positive, got {t1}")
    spatial = np.asarray(spatial_profile)
    if np.iscomplexobj(spatial):
        if np.any(np.abs(spatial.imag) > 0):
            raise ValueError("gauge function must be real valued")
        spatial = spatial.real
    spatial = np.asarray(spatial, dtype=float)
    if spatial.shape != (config.n_sites,):
        raise ValueError(f"spatial profile has shape {spatial.shape}, lattice has {config.n_sites} sites")
    excess = band_limit_excess(spatial, band_fraction)
    if excess > BAND_TOL:
        message = f"spatial profile carries {excess:.3e} of its weight above |k| = {band_fraction} * N/2"
        if enforce_band_limit:
            raise BandLimitError(message)
        logger.warning(message)
    return GaugeProfile(config=config, spatial=spatial, t1=float(t1), ramp=resolve_ramp(ramp), amplitude=float(f))


def chi_from_current_divergence(current, f: float, config: LatticeConfig) -> RealArray:
    """chi(x, t1) = -f * div J with the scheme's own derivative, so the result is mean-zero."""
    current = np.asarray(current, dtype=float)
    return -f * lattice_gradient(current, config)


def electric_field(profile: GaugeProfile, t: float) -> RealArray:
    """-grad(A0) - dA/dt on the lattice; vanishes for a pure-gauge pulse."""
    if not profile.active(t):
        return np.zeros(profile.config.n_sites)
    potential = profile.potential_at(t)
    return -lattice_gradient(potential.scalar, profile.config) - profile.vector_rate(t)
