import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decoy_timing.model import (
    LASERS,
    AnnouncedClass,
    ChannelConfig,
    EmissionConfig,
    GaussianPeak,
    IntensityClass,
    LaserId,
    Polarization,
    fwhm_from_sigma,
    select_state,
    sigma_from_fwhm,
)


def test_sigma_from_fwhm_values():
    # 200 / (2 sqrt(2 ln 2)) evaluated separately: 84.9322 ps
    assert sigma_from_fwhm(200.0) == pytest.approx(84.93, abs=0.005)
    assert sigma_from_fwhm(1700.0) == pytest.approx(721.9, abs=0.05)
    assert sigma_from_fwhm(2.354820045) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_sigma_from_fwhm_rejects(bad):
    with pytest.raises(ValueError):
        sigma_from_fwhm(bad)


@given(st.floats(1e-6, 1e9), st.floats(1e-3, 1e3))
def test_sigma_from_fwhm_linear_and_roundtrip(x, a):
    s = sigma_from_fwhm(x)
    assert fwhm_from_sigma(s) == pytest.approx(x, rel=1e-9)
    assert sigma_from_fwhm(a * x) == pytest.approx(a * s, rel=1e-12)
    assert sigma_from_fwhm(x * 1.001) > s


def test_select_state_exhaustive():
    outcomes = [select_state(bits) for bits in itertools.product((0, 1), repeat=4)]
    counts = Counter(c for c, _ in outcomes)
    assert counts == {IntensityClass.SIGNAL: 8, IntensityClass.DECOY: 4, IntensityClass.VACUUM: 4}
    for cls in (IntensityClass.SIGNAL, IntensityClass.DECOY):
        pols = Counter(p for c, p in outcomes if c is cls)
        assert set(pols) == set(Polarization)
        assert len(set(pols.values())) == 1


def test_select_state_vacuum_has_no_polarization():
    assert select_state((1, 1, 0, 1)) == (IntensityClass.VACUUM, None)


def test_select_state_sampled_frequencies():
    rng = np.random.default_rng(7)
    bits = rng.integers(0, 2, size=(10**6, 4))
    # vectorized form of the same mapping; spot-check it against select_state
    sig = bits[:, 0] == 0
    dec = (bits[:, 0] == 1) & (bits[:, 1] == 0)
    for row in bits[:200]:
        cls, _ = select_state(tuple(int(b) for b in row))
        assert (cls is IntensityClass.SIGNAL) == (row[0] == 0)
    n = len(bits)
    assert sig.mean() == pytest.approx(0.5, abs=0.002)
    # four binomial standard deviations
    assert abs(dec.mean() - 0.25) < 4 * math.sqrt(0.25 * 0.75 / n)
    assert abs((~sig & ~dec).mean() - 0.25) < 4 * math.sqrt(0.25 * 0.75 / n)


@pytest.mark.parametrize("bits", [(0, 1, 2, 0), (0, 0, 0), (1, 1, 1, 1, 1)])
def test_select_state_rejects_bad_bits(bits):
    with pytest.raises(ValueError):
        select_state(bits)


def test_laser_ids():
    assert len(set(LASERS)) == 8
    assert [str(l) for l in LASERS] == ["H_s", "V_s", "D_s", "A_s", "H_d", "V_d", "D_d", "A_d"]
    for l in LASERS:
        assert LaserId.parse(str(l)) == l
        assert LaserId.from_code(l.code) == l
    with pytest.raises(ValueError):
        LaserId(Polarization.H, IntensityClass.VACUUM)
    with pytest.raises(ValueError):
        LaserId.parse("H_x")


def test_announced_classes():
    assert AnnouncedClass.of_laser(LaserId.parse("V_s")) is AnnouncedClass.HV_S
    assert AnnouncedClass.of_laser(LaserId.parse("A_s")) is AnnouncedClass.DA_S
    assert AnnouncedClass.of_laser(LaserId.parse("D_d")) is AnnouncedClass.D_D
    assert AnnouncedClass.of_laser(None) is AnnouncedClass.VACUUM


def test_orthogonal_pairs():
    assert Polarization.H.orthogonal is Polarization.V
    assert Polarization.A.orthogonal is Polarization.D
    assert Polarization.H.rectilinear and not Polarization.D.rectilinear


def test_emission_defaults():
    e = EmissionConfig()
    assert e.period == 10_000.0
    assert (e.mean_photons_signal, e.mean_photons_decoy) == (0.8, 0.1)
    assert (e.prob_signal, e.prob_decoy, e.prob_vacuum) == (0.5, 0.25, 0.25)
    assert all(e.fwhm[l] == 200.0 for l in LASERS)
    assert all(e.delay[l] == 0.0 for l in LASERS)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"prob_signal": 0.6},
        {"prob_vacuum": -0.25, "prob_signal": 1.0},
        {"fwhm": {"H_s": 0.0}},
        {"period": 500.0},
        {"delay": {"Q_s": 1.0}},
    ],
)
def test_emission_validation(kwargs):
    with pytest.raises(ValueError):
        EmissionConfig(**kwargs)


def test_channel_defaults_and_validation():
    c = ChannelConfig()
    assert c.extinction_ratio == 150.0 and c.jitter_sigma == 720.0
    for bad in ({"jitter_sigma": -1}, {"extinction_ratio": 0.5}, {"background_rate_hz": -1}, {"transmittance": 1.5}):
        with pytest.raises(ValueError):
            ChannelConfig(**bad)


def test_gaussian_peak():
    p = GaussianPeak(10.0, 5.0, 2.0)
    assert p(5.0) == 10.0
    assert p(7.0) == pytest.approx(10.0 * math.exp(-0.5))
    with pytest.raises(ValueError):
        GaussianPeak(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        GaussianPeak(1.0, 0.0, 0.0)
