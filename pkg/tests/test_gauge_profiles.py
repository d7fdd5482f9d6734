import numpy as np
import pytest

from picture_lab.gauge_profiles import (
    BandLimitError,
    Ramp,
    RampError,
    RampShape,
    build_gauge_profile,
    chi_from_current_divergence,
    electric_field,
    resolve_ramp,
)
from picture_lab.lattice_model import LatticeConfig, spectral_gradient

CONFIG = LatticeConfig(n_sites=8, box_length=4.0)
X = CONFIG.positions()
SPATIAL = np.cos(2 * np.pi * X / CONFIG.box_length) + 0.5 * np.sin(4 * np.pi * X / CONFIG.box_length)


@pytest.mark.parametrize("ramp", list(Ramp))
def test_builtin_ramps_switch_on_smoothly(ramp):
    shape = ramp.shape
    assert shape.value(0.0) == pytest.approx(0.0, abs=1e-15)
    assert shape.rate(0.0) == pytest.approx(0.0, abs=1e-15)
    assert shape.value(1.0) == pytest.approx(1.0, abs=1e-15)
    h = 1e-6
    assert (shape.value(0.5 + h) - shape.value(0.5 - h)) / (2 * h) == pytest.approx(shape.rate(0.5), rel=1e-8)


def test_ramp_without_zero_start_rate_is_rejected():
    with pytest.raises(RampError, match="ramp'\\(0\\) = 0"):
        RampShape("linear", value=lambda s: s, rate=lambda s: 1.0)


def test_resolve_ramp():
    assert resolve_ramp("cosine") is Ramp.COSINE.shape
    custom = RampShape("cubic", value=lambda s: s**3, rate=lambda s: 3 * s**2)
    assert resolve_ramp(custom) is custom
    with pytest.raises(RampError):
        resolve_ramp("sawtooth")


def test_chi_follows_ramp_and_holds_after_pulse():
    profile = build_gauge_profile(SPATIAL, 2.0, Ramp.POLYNOMIAL, 0.3, config=CONFIG)
    assert np.allclose(profile.chi(0.0), 0.0)
    assert np.allclose(profile.chi(1.0), 0.3 * 0.5 * SPATIAL)
    assert np.allclose(profile.chi(2.0), profile.chi_at_end())
    assert np.allclose(profile.chi(5.0), 0.3 * SPATIAL)


def test_potential_is_pure_gauge_inside_and_zero_outside():
    profile = build_gauge_profile(SPATIAL, 1.0, Ramp.COSINE, 0.7, config=CONFIG)
    potential = profile.potential_at(0.4)
    chi = profile.chi(0.4)
    assert np.allclose(potential.scalar, profile.chi_rate(0.4))
    assert np.allclose(potential.vector, -spectral_gradient(chi, CONFIG.box_length))
    assert np.allclose(potential.links, chi - np.roll(chi, -1))
    for t in (-0.1, 1.5):
        after = profile.potential_at(t)
        assert not after.scalar.any() and not after.vector.any()


def test_potential_starts_at_zero():
    profile = build_gauge_profile(SPATIAL, 1.0, config=CONFIG, f=2.0)
    start = profile.potential_at(0.0)
    assert np.allclose(start.scalar, 0.0) and np.allclose(start.vector, 0.0)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
def test_electric_field_vanishes(t):
    profile = build_gauge_profile(SPATIAL, 1.0, Ramp.POLYNOMIAL, 1.3, config=CONFIG)
    assert np.max(np.abs(electric_field(profile, t))) <= 1e-12


def test_band_limit_is_enforced():
    nyquist = np.cos(np.pi * np.arange(CONFIG.n_sites))
    with pytest.raises(BandLimitError):
        build_gauge_profile(nyquist, 1.0, config=CONFIG)
    profile = build_gauge_profile(nyquist, 1.0, config=CONFIG, enforce_band_limit=False)
    assert np.allclose(profile.chi_at_end(), nyquist)


def test_profile_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_gauge_profile(SPATIAL, 0.0, config=CONFIG)
    with pytest.raises(ValueError):
        build_gauge_profile(SPATIAL[:4], 1.0, config=CONFIG)
    with pytest.raises(ValueError):
        build_gauge_profile(SPATIAL + 1j, 1.0, config=CONFIG)


def test_chi_from_current_divergence_is_mean_zero():
    current = 0.2 + np.sin(2 * np.pi * X / CONFIG.box_length)
    chi = chi_from_current_divergence(current, 1.5, CONFIG)
    assert np.sum(chi) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(chi, -1.5 * spectral_gradient(current, CONFIG.box_length))


def test_profile_record_is_plain_data():
    record = build_gauge_profile(SPATIAL, 1.0, "cosine", 0.5, config=CONFIG).to_record()
    assert record["ramp"] == "cosine"
    assert record["f"] == 0.5
    assert len(record["spatial"]) == CONFIG.n_sites
