import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from decoy_timing.attack import (
    DECOY,
    DISCARD,
    SIGNAL,
    GateConfig,
    InputConsistencyError,
    acceptance_fraction,
    attack_report,
    classify_events,
    effective_sigma,
    failure_sweep,
    gate_masses,
    min_gate_width,
    misclassification_probability,
    tail_mass,
)
from decoy_timing.config import load_config
from decoy_timing.model import ChannelConfig, EmissionConfig, Polarization, sigma_from_fwhm
from decoy_timing.simulate import EventStream, TruthLog, simulate_pass

T = 10_000.0
SIGMA = sigma_from_fwhm(200.0)


def _quad_mass(lo, hi, mu, sigma):
    return integrate.quad(lambda t: stats.norm.pdf(t, mu, sigma), lo, hi, epsabs=1e-13)[0]


@pytest.mark.parametrize("w,sigma", [(2000.0, 720.0), (235.0, SIGMA)])
def test_acceptance_examples(w, sigma):
    value = acceptance_fraction(w, sigma)
    assert value == pytest.approx(0.835, abs=0.002)
    assert value == pytest.approx(_quad_mass(-w / 2, w / 2, 0.0, sigma), abs=1e-10)


def test_acceptance_infinite_gate():
    assert acceptance_fraction(math.inf, SIGMA) == 1.0
    with pytest.raises(ValueError):
        acceptance_fraction(0.0, SIGMA)


def test_min_gate_width_examples():
    assert min_gate_width(0.835, 84.93) == pytest.approx(235.0, abs=1.0)
    root = optimize.brentq(lambda w: acceptance_fraction(w, 1.0) - 0.5, 1e-6, 10.0, xtol=1e-12)
    assert min_gate_width(0.5, 1.0) == pytest.approx(root, abs=1e-8)
    assert min_gate_width(0.5, 1.0) == pytest.approx(1.349, abs=1e-3)
    assert min_gate_width(1e-12, SIGMA) < 1e-9


@pytest.mark.parametrize("target", [0.0, 1.0, -0.2, 1.5])
def test_min_gate_width_domain(target):
    with pytest.raises(ValueError):
        min_gate_width(target, SIGMA)


@given(st.floats(1e-6, 1 - 1e-9), st.floats(0.1, 1e4))
def test_min_gate_width_round_trip(target, sigma):
    assert acceptance_fraction(min_gate_width(target, sigma), sigma) == pytest.approx(target, abs=1e-6)


def test_misclassification_312ps_geometry():
    p = misclassification_probability(312.0, 235.0, SIGMA)
    assert 0.012 <= p <= 0.014
    own = _quad_mass(-117.5, 117.5, 0.0, SIGMA)
    wrong = _quad_mass(312 - 117.5, 312 + 117.5, 0.0, SIGMA)
    assert p == pytest.approx(wrong / (own + wrong), rel=1e-8)
    assert tail_mass(312.0, 235.0, SIGMA) == pytest.approx(0.0110, abs=2e-4)


def _mc_failure(sep, width, sigma, n, rng):
    gates = GateConfig(0.0, sep, width)
    t = np.concatenate([rng.normal(0.0, sigma, n), rng.normal(sep, sigma, n)])
    truth = np.repeat([SIGNAL, DECOY], n)
    # keep times positive inside one period so folding is the identity
    ev = EventStream(np.zeros(2 * n, np.int64), np.zeros(2 * n, np.int8), t + T / 2)
    labels = classify_events(ev, GateConfig(T / 2, T / 2 + sep, width), T)
    accepted = labels != DISCARD
    wrong = accepted & (labels != truth)
    return wrong.sum() / accepted.sum(), accepted.sum(), labels, truth, gates


def test_misclassification_matches_monte_carlo():
    rng = np.random.default_rng(2024)
    p_hat, n_acc, *_ = _mc_failure(312.0, 235.0, SIGMA, 10**6, rng)
    p = misclassification_probability(312.0, 235.0, SIGMA)
    assert abs(p_hat - p) < 3 * math.sqrt(p * (1 - p) / n_acc)


# fixed examples and one seed: letting the search pick draws would hunt for 3-sigma outliers
@settings(max_examples=15, deadline=None, derandomize=True)
@given(st.floats(50.0, 600.0), st.floats(0.2, 0.95), st.floats(20.0, 300.0))
def test_monte_carlo_agreement_any_geometry(sep, width_frac, sigma):
    width = sep * width_frac
    rng = np.random.default_rng(99)
    n = 100_000
    p_hat, n_acc, labels, truth, _ = _mc_failure(sep, width, sigma, n, rng)
    own, wrong = gate_masses(sep, width, sigma)
    p = wrong / (own + wrong)
    assert abs(p_hat - p) <= 3 * math.sqrt(p * (1 - p) / n_acc) + 1e-12
    own_hat = np.mean(labels[truth == SIGNAL] == SIGNAL)
    assert abs(own_hat - own) <= 3 * math.sqrt(own * (1 - own) / n) + 1e-12


def test_misclassification_limits_and_errors():
    assert misclassification_probability(1e5, 235.0, SIGMA) == 0.0
    with pytest.raises(ValueError):
        misclassification_probability(200.0, 235.0, SIGMA)
    with pytest.raises(ValueError):
        GateConfig(0.0, 200.0, 235.0)


@given(st.floats(240.0, 2000.0), st.floats(1.0, 200.0), st.floats(10.0, 300.0), st.floats(1.0, 50.0))
def test_misclassification_monotone(sep, dsep, sigma, dsigma):
    p = misclassification_probability(sep, 235.0, sigma)
    assert misclassification_probability(sep + dsep, 235.0, sigma) <= p + 1e-15
    assert misclassification_probability(sep, 235.0, sigma + dsigma) >= p - 1e-15


@given(st.floats(1.0, 1e4), st.floats(1.0, 1e4), st.floats(0.01, 100.0), st.floats(1.0, 100.0))
def test_acceptance_increasing_and_scale_invariant(w, sigma, a, dw):
    f = acceptance_fraction(w, sigma)
    assert acceptance_fraction(a * w, a * sigma) == pytest.approx(f, rel=1e-12, abs=1e-15)
    assert acceptance_fraction(w + dw, sigma) >= f
    if f < 0.999:
        assert acceptance_fraction(w + dw, sigma) > f


def test_effective_sigma_convolves_jitter():
    assert effective_sigma(SIGMA) == SIGMA
    assert effective_sigma(3.0, 4.0) == 5.0


def test_classify_examples():
    gates = GateConfig(100.0, 900.0, 235.0)
    ev = EventStream(np.array([3, 3, 3, 4]), np.zeros(4, np.int8),
                     np.array([3 * T + 100.0, 3 * T + 500.0, 3 * T + 900.0, 4 * T + 1500.0]))
    assert list(classify_events(ev, gates, T)) == [SIGNAL, DISCARD, DECOY, DISCARD]
    # gates wrap around the slot boundary
    wrap = GateConfig(-10.0, 302.0, 235.0)
    ev = EventStream(np.array([1, 2]), np.zeros(2, np.int8), np.array([T + 9990.0, 2 * T + 20.0]))
    assert list(classify_events(ev, wrap, T)) == [SIGNAL, SIGNAL]


def test_failure_sweep_skips_overlap():
    rows = list(failure_sweep([100.0, 312.0], [50.0, 235.0, 400.0], SIGMA))
    assert [(s, w) for s, w, _ in rows] == [(100.0, 50.0), (312.0, 50.0), (312.0, 235.0)]


def test_report_without_truth_is_analytic_only():
    r = attack_report(None, None, GateConfig(-10.0, 302.0, 235.0), T, SIGMA)
    assert r.confusion is None and not r.empirical
    assert r.failure_probability + r.distinguish_probability == 1.0
    assert 0 < r.discard_fraction < 1


def test_truth_mismatch_is_reported():
    ev = EventStream(np.array([5]), np.zeros(1, np.int8), np.array([5 * T + 1.0]))
    truth = TruthLog(np.array([4]), np.array([0], np.int8))
    with pytest.raises(InputConsistencyError, match="slot 5"):
        attack_report(ev, truth, GateConfig(0.0, 400.0, 235.0), T, SIGMA)


def test_coincident_pulses_give_chance_performance():
    e = EmissionConfig(prob_signal=0.5, prob_decoy=0.5, prob_vacuum=0.0)
    c = ChannelConfig(transmittance=0.05, jitter_sigma=0.0, extinction_ratio=1e9)
    sim = simulate_pass(e, c, 4_000_000, seed=6)
    r = attack_report(sim.events, sim.truth, GateConfig(-200.0, 200.0, 235.0), T, SIGMA)
    n = r.empirical["empirical_accepted_events"]
    assert abs(r.empirical["empirical_failure_probability"] - 0.5) < 3 * math.sqrt(0.25 / n)


@pytest.fixture(scope="module")
def eve_sim():
    cfg = load_config("eve_oct31").override(n_slots=300_000_000)
    return cfg, simulate_pass(cfg.emission, cfg.channel, cfg.n_slots, cfg.seed)


def test_empirical_attack_matches_analytics(eve_sim):
    cfg, sim = eve_sim
    gates = GateConfig(cfg.attack.signal_center, cfg.attack.decoy_center,
                       min_gate_width(cfg.attack.target_acceptance, cfg.attack.sigma))
    r = attack_report(sim.events, sim.truth, gates, T, cfg.attack.sigma, polarizations=[Polarization.V])
    emp = r.empirical
    n_acc, n_tx = emp["empirical_accepted_events"], emp["empirical_transmitter_events"]
    p = r.failure_probability
    assert 0.012 <= p <= 0.014
    assert abs(emp["empirical_failure_probability"] - p) < 3 * math.sqrt(p * (1 - p) / n_acc)
    d = r.discard_fraction
    assert abs(emp["empirical_discard_fraction"] - d) < 3 * math.sqrt(d * (1 - d) / n_tx)
    # rows of the confusion matrix: signal, decoy, other
    assert r.confusion[:2].sum() == n_tx
    assert r.confusion[2].sum() == 0
