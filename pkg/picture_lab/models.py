"""Pydantic models for experiment configuration and run records."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from .equivalence_audit import AuditReport, IdentityScanPoint
from .gauge_profiles import Ramp
from .lattice_model import LatticeConfig
from .observables import DecompositionReport, LinearityFit
from .schrodinger_evolution import Ordering

RECORD_SCHEMA = "picture-lab.record/v1"
SUPPORTED_SCHEMAS = (RECORD_SCHEMA,)


class WavePacketSpec(BaseModel):
    """One-electron packet sum_n c_n b_n^dagger |0>; c_n = weight * exp(i phase)."""

    weights: dict[int, float] = Field(..., min_length=1)
    phases: dict[int, float] = Field(default_factory=dict)

    @field_validator("weights", "phases")
    @classmethod
    def positive_modes(cls, value: dict[int, float]) -> dict[int, float]:
        if any(index < 1 for index in value):
            raise ValueError("wave packets are built from positive-energy modes n >= 1")
        return value

    @model_validator(mode="after")
    def phases_need_weights(self) -> "WavePacketSpec":
        stray = set(self.phases) - set(self.weights)
        if stray:
            raise ValueError(f"phases given for modes without weights: {sorted(stray)}")
        return self

    def amplitudes(self) -> dict[int, complex]:
        return {n: w * np.exp(1j * self.phases.get(n, 0.0)) for n, w in sorted(self.weights.items())}


class PulseSpec(BaseModel):
    profile: Literal["current_divergence", "samples"] = "current_divergence"
    samples: Optional[list[float]] = None
    ramp: Ramp = Ramp.POLYNOMIAL
    t1: float = Field(..., gt=0)
    f_values: list[float] = Field(default_factory=list)
    f_star_multiples: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_profile(self) -> "PulseSpec":
        if self.profile == "samples":
            if not self.samples:
                raise ValueError("pulse profile 'samples' needs sampled values")
            if self.f_star_multiples:
                raise ValueError("f* multiples are only defined for the current_divergence profile")
        elif self.samples is not None:
            raise ValueError("samples are only used with the 'samples' profile")
        return self


class NumericsConfig(BaseModel):
    ode_rtol: float = Field(1e-10, gt=0)
    krylov_tol: float = Field(1e-12, gt=0)
    dt_tol: float = Field(1e-8, gt=0)
    max_halvings: int = Field(12, ge=0)
    initial_steps: int = Field(16, ge=1)
    max_sites: int = Field(8, ge=2)
    dense_max_sites: int = Field(4, ge=0)
    band_fraction: float = Field(0.5, gt=0, le=1)
    enforce_band_limit: bool = True
    hermiticity_tol: float = Field(1e-10, gt=0)
    series_points: int = Field(9, ge=2)
    spot_check_trials: int = Field(2, ge=1)
    ordering: Ordering = Ordering.MAGNUS4
    identity_scan_sites: list[int] = Field(default_factory=lambda: [4, 6])
    identity_scan_multiples: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])

    @field_validator("identity_scan_sites")
    @classmethod
    def even_sites(cls, value: list[int]) -> list[int]:
        if any(n < 2 or n % 2 for n in value):
            raise ValueError("identity scan sizes must be even and at least 2")
        return value


class ExperimentConfig(BaseModel):
    name: str = Field("experiment", min_length=1)
    lattice: LatticeConfig
    packet: WavePacketSpec
    pulse: PulseSpec
    tf: float
    dt: float | Literal["auto"] = "auto"
    outputs: Path = Path("runs")
    seed: int = 0
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)

    @field_validator("dt")
    @classmethod
    def positive_dt(cls, value):
        if value != "auto" and not value > 0:
            raise ValueError("dt must be positive or 'auto'")
        return value

    @model_validator(mode="after")
    def check_schedule(self) -> "ExperimentConfig":
        if self.tf < self.pulse.t1:
            raise ValueError(f"tf = {self.tf} precedes the pulse end t1 = {self.pulse.t1}")
        n = self.lattice.n_sites
        if n > self.numerics.max_sites:
            raise ValueError(f"N = {n} exceeds the Fock-space cap of {self.numerics.max_sites} sites")
        if max(self.packet.weights) > n:
            raise ValueError(f"packet uses mode {max(self.packet.weights)} but the lattice has {n} positive modes")
        if self.pulse.samples is not None and len(self.pulse.samples) != n:
            raise ValueError(f"pulse samples have {len(self.pulse.samples)} values, lattice has {n} sites")
        return self

    @property
    def time_step(self) -> float | None:
        return None if self.dt == "auto" else float(self.dt)

    @classmethod
    def from_yaml(cls, path: Path, overrides: dict | None = None) -> "ExperimentConfig":
        with Path(path).open("r", encoding="utf-8") as handle:
            payload = yaml.safe_load(handle) or {}
        return cls.model_validate(merge_overrides(payload, overrides or {}))


def merge_overrides(payload: dict, overrides: dict) -> dict:
    merged = dict(payload)
    for key, value in overrides.items():
        if isinstance(value, dict):
            merged[key] = merge_overrides(merged.get(key) or {}, value)
        elif value is not None:
            merged[key] = value
    return merged


class SeriesPoint(BaseModel):
    t: float
    closed_form: float
    ode: float
    schrodinger: float


class PulseRecord(BaseModel):
    spatial: list[float]
    ramp: str
    f: float
    t1: float


class ScanRow(BaseModel):
    f: float
    profile: PulseRecord
    decomposition: DecompositionReport
    audit: AuditReport
    series: list[SeriesPoint]
    norm_drift: float
    dt: float


class BasisSummary(BaseModel):
    energies: list[float]
    vacuum_energy: float
    orthonormality_defect: float
    eigen_residual: float


class ExperimentRecord(BaseModel):
    schema_tag: str = Field(RECORD_SCHEMA, alias="schema")
    config: ExperimentConfig
    basis: BasisSummary
    packet_energy: float
    free_term: float
    divergence_norm: float
    f_star: Optional[float] = None
    rows: list[ScanRow] = Field(default_factory=list)
    linearity: Optional[LinearityFit] = None
    identity_scan: list[IdentityScanPoint] = Field(default_factory=list)
    violations: list[str] = Field(default_factory=list)

    model_config = {"populate_by_name": True}

    @field_validator("schema_tag")
    @classmethod
    def known_schema(cls, value: str) -> str:
        if value not in SUPPORTED_SCHEMAS:
            raise ValueError(f"unsupported record schema {value!r}")
        return value

    @property
    def f_grid(self) -> list[float]:
        return [row.f for row in self.rows]
