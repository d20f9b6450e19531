"""Statistical simulators for phase estimation and amplitude estimation.

Outcomes are sampled from exact register distributions rather than from a
materialized circuit.  Every stochastic routine takes an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import binom

from .errors import BadWeights, NonConvergence

TWO_PI = 2.0 * np.pi
GUARD_BITS = 2
CANONICAL_SUCCESS = 8.0 / np.pi**2
AE_CONFIDENCE = 2.0 / 3.0
AE_MULT_CONSTANT = 3.0 * np.pi
DEFAULT_AE_CAP = 10**5


@dataclass(frozen=True)
class PhaseEstimationConfig:
    register_bits: int
    target_precision: float
    failure_budget: float = 1.0 / 3.0
    boost_rounds: int = 1

    def __post_init__(self):
        if TWO_PI / 2**self.register_bits > self.target_precision * (1 + 1e-12):
            raise ValueError("register too narrow for the target precision")
        if self.boost_rounds < 1 or self.boost_rounds % 2 == 0:
            raise ValueError("boost_rounds must be a positive odd integer")

    @property
    def size(self) -> int:
        return 2**self.register_bits

    @classmethod
    def for_precision(cls, precision: float, failure_budget: float = 1.0 / 3.0, guard_bits: int = GUARD_BITS):
        return cls(
            register_bits=register_bits(precision, guard_bits),
            target_precision=float(precision),
            failure_budget=failure_budget,
            boost_rounds=rounds_for_confidence(failure_budget, 1.0 - CANONICAL_SUCCESS),
        )


@dataclass(frozen=True)
class EstimationOutcome:
    value: float
    repetitions_used: int
    claimed_error: float
    claimed_confidence: float
    seed_trace: tuple = ()
    details: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class AmplificationCost:
    final_probability: float
    repetitions: int
    rounds: int


def register_bits(precision: float, guard_bits: int = GUARD_BITS) -> int:
    """Smallest register whose bin width ``2*pi/2**b`` is at most ``precision``, plus guard bits."""
    if precision <= 0:
        raise ValueError("precision must be positive")
    return max(1, math.ceil(math.log2(TWO_PI / precision))) + guard_bits


def decode_phase(k, size: int, signed: bool = False):
    """Map register values to phases; with ``signed``, values above ``size/2`` are negative."""
    lam = TWO_PI * np.asarray(k, dtype=float) / size
    if signed:
        lam = np.where(np.asarray(k) > size // 2, lam - TWO_PI, lam)
    return lam


def wrap(x):
    """Reduce angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)


def pe_amplitudes(theta: float, size: int, k=None) -> np.ndarray:
    """Register amplitudes ``(1/M) sum_m exp(i m (theta - 2 pi k / M))``.

    ``k`` defaults to ``0..M-1``; any integer array is accepted and read
    modulo ``M``.
    """
    k = np.arange(size) if k is None else np.asarray(k)
    if theta == 0.0:
        return (np.mod(k, size) == 0).astype(complex)
    delta = theta - TWO_PI * np.mod(k, size) / size
    half = 0.5 * delta
    den = np.sin(half)
    small = np.abs(den) < 1e-14
    ratio = np.where(small, size * np.cos(size * half) / np.where(small, np.cos(half), 1.0),
                     np.sin(size * half) / np.where(small, 1.0, den))
    return np.exp(1j * (size - 1) * half) * ratio / size


def pe_distribution(theta: float, size: int) -> np.ndarray:
    """Canonical phase-estimation outcome distribution for eigenphase ``theta``."""
    p = np.abs(pe_amplitudes(theta, size)) ** 2
    return p / p.sum()


def window_mask(theta: float, size: int, precision: float) -> np.ndarray:
    lam = decode_phase(np.arange(size), size)
    return np.abs(wrap(lam - theta)) <= precision


def idealize(dist: np.ndarray, theta: float, precision: float) -> np.ndarray:
    """Condition a register distribution on landing within ``precision`` of ``theta``."""
    size = dist.shape[0]
    if theta == 0.0:
        out = np.zeros(size)
        out[0] = 1.0
        return out
    masked = np.where(window_mask(theta, size, precision), dist, 0.0)
    return masked / masked.sum()


def _signed_order(size: int) -> np.ndarray:
    return np.concatenate([np.arange(size // 2 + 1, size), np.arange(size // 2 + 1)])


def median_distribution(dist: np.ndarray, rounds: int, signed: bool = False) -> np.ndarray:
    """Distribution of the median of ``rounds`` independent draws (ordered by decoded phase)."""
    if rounds == 1:
        return dist
    size = dist.shape[0]
    order = _signed_order(size) if signed else np.arange(size)
    cdf = np.clip(np.cumsum(dist[order]), 0.0, 1.0)
    half = (rounds + 1) // 2
    med_cdf = binom.sf(half - 1, rounds, cdf)
    pm = np.diff(np.concatenate([[0.0], med_cdf]))
    out = np.empty(size)
    out[order] = np.clip(pm, 0.0, None)
    return out / out.sum()


def register_distribution(theta: float, cfg: PhaseEstimationConfig, mode: str = "faithful",
                          signed: bool = False) -> np.ndarray:
    dist = pe_distribution(theta, cfg.size)
    if mode == "idealized":
        dist = idealize(dist, theta, cfg.target_precision)
    elif mode != "faithful":
        raise ValueError(f"unknown phase-estimation mode {mode!r}")
    return median_distribution(dist, cfg.boost_rounds, signed)


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise BadWeights("weights must be nonnegative and sum to 1")
    return w


def phase_estimate(spectrum, cfg: PhaseEstimationConfig, rng, mode: str = "faithful",
                   signed: bool = False) -> tuple[int, int]:
    """Sample ``(register value, collapsed component)`` for a superposition of eigenstates.

    ``spectrum`` is a sequence of ``(eigenphase, weight)`` pairs.
    """
    phases = [float(t) for t, _ in spectrum]
    weights = _check_weights([w for _, w in spectrum])
    if any(not 0.0 <= t < TWO_PI for t in phases):
        raise ValueError("eigenphases must lie in [0, 2*pi)")
    j = int(rng.choice(len(phases), p=weights))
    dist = register_distribution(phases[j], cfg, mode, signed)
    return int(rng.choice(cfg.size, p=dist)), j


def amplitude_amplify_cost(alpha: float, delta: float) -> AmplificationCost:
    """Cost of boosting a success probability ``>= alpha`` to ``>= 1 - delta``.

    Each round amplifies to at least 2/3 with ``ceil(1/sqrt(alpha))``
    applications; independent rounds fail together with probability ``3**-rounds``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rounds = max(1, math.ceil(math.log(1.0 / delta) / math.log(3.0) - 1e-12))
    return AmplificationCost(
        final_probability=1.0 - 3.0**-rounds,
        repetitions=rounds * math.ceil(1.0 / math.sqrt(alpha) - 1e-12),
        rounds=rounds,
    )


def _seed_trace(rng) -> tuple:
    seq = getattr(rng.bit_generator, "seed_seq", None)
    return (tuple(getattr(seq, "spawn_key", ())),)


def _check_probability(p: float) -> float:
    # allow roundoff just outside [0, 1]
    if not -1e-12 <= p <= 1.0 + 1e-12:
        raise ValueError("true_p must lie in [0, 1]")
    return min(max(float(p), 0.0), 1.0)


@lru_cache(maxsize=512)
def ae_distribution(p: float, size: int) -> np.ndarray:
    """Outcome distribution of canonical amplitude estimation with ``size`` Grover applications."""
    theta = 2.0 * math.asin(math.sqrt(min(max(p, 0.0), 1.0)))
    if theta == 0.0:
        out = pe_distribution(0.0, size)
    else:
        out = 0.5 * (pe_distribution(theta, size) + pe_distribution(TWO_PI - theta, size))
    # cached, so keep it immutable
    out.flags.writeable = False
    return out


def _ae_sample(p: float, size: int, rng) -> float:
    y = int(rng.choice(size, p=ae_distribution(p, size)))
    return math.sin(np.pi * y / size) ** 2


def amplitude_estimate_additive(true_p: float, eps: float, rng, cap: int = DEFAULT_AE_CAP) -> EstimationOutcome:
    """Estimate ``true_p`` to additive ``eps`` with probability at least 2/3."""
    true_p = _check_probability(true_p)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    size = math.ceil(np.pi / eps)
    if size > cap:
        raise NonConvergence(f"additive estimation needs {size} applications, cap is {cap}")
    return EstimationOutcome(
        value=_ae_sample(true_p, size, rng),
        repetitions_used=size,
        claimed_error=eps,
        claimed_confidence=AE_CONFIDENCE,
        seed_trace=_seed_trace(rng),
    )


def amplitude_estimate_multiplicative(true_p: float, eps: float, rng, cap: int = DEFAULT_AE_CAP,
                                      constant: float = AE_MULT_CONSTANT) -> EstimationOutcome:
    """Estimate ``true_p`` to relative ``eps`` with probability at least 2/3.

    Runs additive estimation with a doubling register until the register
    size reaches ``constant / (eps * sqrt(p'))`` for the current estimate ``p'``,
    then reports a fresh estimate at that size.
    """
    true_p = _check_probability(true_p)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    used = 0
    size = 4
    stages = []
    while True:
        if used + size > cap:
            raise NonConvergence(f"multiplicative estimation exceeded {cap} applications")
        est = _ae_sample(true_p, size, rng)
        used += size
        stages.append(size)
        if est > 0 and size >= constant / (eps * math.sqrt(est)):
            break
        size *= 2
    if used + size > cap:
        raise NonConvergence(f"multiplicative estimation exceeded {cap} applications")
    value = _ae_sample(true_p, size, rng)
    used += size
    return EstimationOutcome(
        value=value,
        repetitions_used=used,
        claimed_error=eps,
        claimed_confidence=AE_CONFIDENCE,
        seed_trace=_seed_trace(rng),
        details={"stages": stages, "final_size": size},
    )


def median_failure(rounds: int, per_round_failure: float) -> float:
    """Probability that at least half of ``rounds`` independent trials fail."""
    return float(binom.sf((rounds + 1) // 2 - 1, rounds, per_round_failure))


def rounds_for_confidence(delta: float, per_round_failure: float = 1.0 / 3.0, max_rounds: int = 10001) -> int:
    """Smallest odd number of rounds whose median fails with probability at most ``delta``."""
    rounds = 1
    while median_failure(rounds, per_round_failure) > delta:
        rounds += 2
        if rounds > max_rounds:
            raise ValueError(f"cannot reach failure {delta} within {max_rounds} rounds")
    return rounds


def _boost(estimator, rounds: int, rng, combine) -> EstimationOutcome:
    if rounds < 1 or rounds % 2 == 0:
        raise ValueError("rounds must be a positive odd integer")
    outcomes = [estimator(child) for child in rng.spawn(rounds)]
    if rounds == 1:
        return outcomes[0]
    first = outcomes[0]
    return EstimationOutcome(
        value=combine([o.value for o in outcomes]),
        repetitions_used=sum(o.repetitions_used for o in outcomes),
        claimed_error=first.claimed_error,
        claimed_confidence=1.0 - median_failure(rounds, 1.0 - first.claimed_confidence),
        seed_trace=tuple(t for o in outcomes for t in o.seed_trace),
        details={"rounds": rounds, "values": [o.value for o in outcomes]},
    )


def boost_median(estimator, rounds: int, rng) -> EstimationOutcome:
    """Median of ``rounds`` independent runs of ``estimator(rng)``."""
    return _boost(estimator, rounds, rng, lambda v: float(np.median(v)))


def boost_majority(estimator, rounds: int, rng) -> EstimationOutcome:
    """Majority vote over ``rounds`` independent runs returning +1/-1."""
    return _boost(estimator, rounds, rng, lambda v: 1.0 if sum(np.sign(v) >= 0) * 2 > len(v) else -1.0)
