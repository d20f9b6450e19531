import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfit import primitives as pr
from qfit.errors import BadWeights, NonConvergence


def test_config_invariants():
    cfg = pr.PhaseEstimationConfig.for_precision(0.01)
    assert 2 * np.pi / cfg.size <= cfg.target_precision
    assert cfg.register_bits == math.ceil(math.log2(2 * np.pi / 0.01)) + pr.GUARD_BITS
    with pytest.raises(ValueError):
        pr.PhaseEstimationConfig(register_bits=2, target_precision=0.1)
    tight = pr.PhaseEstimationConfig.for_precision(0.01, failure_budget=1e-4)
    assert tight.boost_rounds > cfg.boost_rounds


def test_exact_phase_and_zero(rng):
    cfg = pr.PhaseEstimationConfig(register_bits=3, target_precision=1.0)
    assert pr.phase_estimate([(2 * np.pi * 2 / 8, 1.0)], cfg, rng) == (2, 0)
    dist = pr.pe_distribution(0.0, 64)
    assert dist[0] == 1.0 and dist[1:].sum() == 0.0
    for _ in range(20):
        assert pr.phase_estimate([(0.0, 1.0)], cfg, rng)[0] == 0


def test_phase_estimate_validation(rng):
    cfg = pr.PhaseEstimationConfig(register_bits=3, target_precision=1.0)
    with pytest.raises(BadWeights):
        pr.phase_estimate([(0.1, 0.5), (0.2, 0.4)], cfg, rng)
    with pytest.raises(BadWeights):
        pr.phase_estimate([(0.1, -0.5), (0.2, 1.5)], cfg, rng)
    with pytest.raises(ValueError):
        pr.phase_estimate([(7.0, 1.0)], cfg, rng)


def test_phase_estimate_component_weights(rng):
    cfg = pr.PhaseEstimationConfig(register_bits=4, target_precision=1.0)
    picks = [pr.phase_estimate([(0.5, 0.25), (2.0, 0.75)], cfg, rng)[1] for _ in range(2000)]
    assert abs(np.mean(picks) - 0.75) < 0.04


@given(st.floats(0, 2 * np.pi, exclude_max=True), st.sampled_from([4, 6, 8]))
def test_distribution_normalized_and_concentrated(theta, bits):
    size = 2**bits
    dist = pr.pe_distribution(theta, size)
    assert abs(dist.sum() - 1) < 1e-12
    lo = int(np.floor(theta * size / (2 * np.pi))) % size
    assert dist[lo] + dist[(lo + 1) % size] >= 8 / np.pi**2 - 1e-12


def test_amplitudes_against_direct_sum():
    theta, size = 1.234, 16
    m = np.arange(size)
    direct = [np.exp(1j * m * (theta - 2 * np.pi * k / size)).sum() / size for k in range(size)]
    np.testing.assert_allclose(pr.pe_amplitudes(theta, size), direct, atol=1e-12)
    np.testing.assert_allclose(pr.pe_amplitudes(theta, size, [3, 19]), [direct[3], direct[3]], atol=1e-12)


def test_idealized_window():
    theta, prec = 1.0, 0.05
    cfg = pr.PhaseEstimationConfig.for_precision(prec)
    dist = pr.register_distribution(theta, cfg, "idealized")
    lam = pr.decode_phase(np.nonzero(dist)[0], cfg.size)
    assert np.all(np.abs(lam - theta) <= prec)
    assert dist.sum() == pytest.approx(1.0)


def test_signed_decoding():
    lam = pr.decode_phase([0, 1, 4, 5, 7], 8, signed=True)
    np.testing.assert_allclose(lam, np.array([0, 1, 4, -3, -1]) * 2 * np.pi / 8)


def test_median_distribution_matches_sampling(rng):
    dist = pr.pe_distribution(1.3, 16)
    med = pr.median_distribution(dist, 5)
    draws = rng.choice(16, size=(20000, 5), p=dist)
    emp = np.bincount(np.median(draws, axis=1).astype(int), minlength=16) / 20000
    np.testing.assert_allclose(med, emp, atol=0.01)
    # median concentrates more than a single draw
    peak = int(np.argmax(dist))
    assert med[peak] > dist[peak]


def test_amplify_cost():
    c = pr.amplitude_amplify_cost(0.25, 1 / 3)
    assert c.rounds == 1 and c.repetitions == 2 and c.final_probability == pytest.approx(2 / 3)
    c = pr.amplitude_amplify_cost(0.01, 1e-3)
    assert c.final_probability >= 1 - 1e-3
    assert c.repetitions == c.rounds * 10
    with pytest.raises(ValueError):
        pr.amplitude_amplify_cost(0.0, 0.1)


def test_additive_schedule_and_extremes(rng):
    o = pr.amplitude_estimate_additive(0.3, 0.05, rng)
    assert o.repetitions_used == math.ceil(np.pi / 0.05)
    assert o.claimed_confidence == pytest.approx(2 / 3)
    assert pr.amplitude_estimate_additive(0.0, 0.1, rng).value == 0.0
    assert pr.amplitude_estimate_additive(1.0, 0.1, rng).value == pytest.approx(1.0)
    with pytest.raises(NonConvergence):
        pr.amplitude_estimate_additive(0.3, 1e-5, rng)


def test_ae_distribution_two_nearest_bins_are_within_eps():
    for p in (0.1, 0.5, 0.77):
        for eps in (0.1, 0.03):
            size = math.ceil(np.pi / eps)
            dist = pr.ae_distribution(p, size)
            vals = np.sin(np.pi * np.arange(size) / size) ** 2
            assert dist[np.abs(vals - p) <= eps].sum() >= 8 / np.pi**2


@pytest.mark.parametrize("p", [0.05, 0.5, 0.9])
def test_multiplicative_contract(p):
    rng = np.random.default_rng(7)
    hits = sum(abs(pr.amplitude_estimate_multiplicative(p, 0.1, r).value - p) <= 0.1 * p
               for r in rng.spawn(300))
    assert hits / 300 >= 2 / 3


def test_multiplicative_zero_fails(rng):
    with pytest.raises(NonConvergence):
        pr.amplitude_estimate_multiplicative(0.0, 0.1, rng, cap=1000)


def test_rounds_for_confidence():
    assert pr.rounds_for_confidence(1 / 3) == 1
    r = pr.rounds_for_confidence(0.01)
    assert pr.median_failure(r, 1 / 3) <= 0.01 < pr.median_failure(r - 2, 1 / 3)


def test_boost_median_is_deterministic_and_traced():
    def est(r):
        return pr.amplitude_estimate_additive(0.4, 0.1, r)

    a = pr.boost_median(est, 7, np.random.default_rng(3))
    b = pr.boost_median(est, 7, np.random.default_rng(3))
    assert a == b
    assert len(a.seed_trace) == 7 and len(set(a.seed_trace)) == 7
    assert a.repetitions_used == 7 * math.ceil(np.pi / 0.1)
    assert a.claimed_confidence > 2 / 3


def test_boost_majority():
    def est(r):
        return pr.EstimationOutcome(1.0 if r.random() < 0.7 else -1.0, 1, 0.0, 0.7)

    out = pr.boost_majority(est, 31, np.random.default_rng(0))
    assert out.value == 1.0
    with pytest.raises(ValueError):
        pr.boost_majority(est, 4, np.random.default_rng(0))
