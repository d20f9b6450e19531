"""Scaling and contract sweeps with log-log slope fits."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import binomtest, linregress

from . import hamsim, linalg, primitives as pr

SWEEP_KINDS = ("dme_scaling", "suzuki_scaling", "pe_concentration", "ae_contract")


def thread_count() -> int:
    """Worker count from ``QFIT_THREADS``; absent means the CPU count."""
    raw = os.environ.get("QFIT_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def parallel_map(fn, items) -> list:
    items = list(items)
    workers = min(thread_count(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fit_slope(xs, ys) -> dict:
    """Least-squares slope of ``log y`` against ``log x`` with a 95% interval."""
    res = linregress(np.log(xs), np.log(ys))
    half = 1.96 * res.stderr if len(xs) > 2 else float("nan")
    return {"slope": float(res.slope), "intercept": float(res.intercept),
            "ci95": [float(res.slope - half), float(res.slope + half)]}


def dme_step_error(rho, sigma, x: float) -> float:
    out = hamsim.dme_step(rho, x).apply(sigma)
    U = linalg.herm_exp(rho, x)
    return linalg.trace_distance(out, U @ sigma @ U.conj().T)


def dme_scaling(seed: int = 0, xs=None, pairs: int = 20) -> dict:
    """Mean single-step DME error against the exact conjugation over random qubit/qutrit pairs."""
    xs = np.geomspace(0.0125, 0.2, 5) if xs is None else np.asarray(xs, dtype=float)
    rngs = np.random.default_rng(seed).spawn(pairs)

    def one(r):
        dim = 2 + int(r.integers(2))
        rho, sigma = linalg.random_density(dim, r), linalg.random_density(dim, r)
        return [dme_step_error(rho, sigma, x) for x in xs]

    errs = np.mean(parallel_map(one, rngs), axis=0)
    fit = fit_slope(xs, errs)
    return {"kind": "dme_scaling", "points": [{"x": float(x), "error": float(e)} for x, e in zip(xs, errs)],
            "fit": fit, "expected_slope": 2.0, "tolerance": 0.2,
            "passed": bool(abs(fit["slope"] - 2.0) <= 0.2)}


def dme_accuracy(seed: int = 0, eps_values=(0.04, 0.02, 0.01), t: float = 1.0, cases: int = 4) -> dict:
    """Worst battery distance of :func:`hamsim.dme_simulate` to the exact conjugation."""
    rngs = np.random.default_rng(seed).spawn(cases)
    rows = []
    for r in rngs:
        dim = 2 + int(r.integers(2))
        rho = linalg.random_density(dim, r)
        exact = hamsim.unitary_superop(linalg.herm_exp(rho, t))
        for eps in eps_values:
            ch = hamsim.dme_simulate(rho, t, eps)
            rows.append({"dim": dim, "eps": eps, "steps": ch.copies_consumed,
                         "error": hamsim.channel_distance(ch.superop, exact, dim)})
    return {"points": rows, "passed": all(r["error"] <= r["eps"] for r in rows)}


def suzuki_error(A, B, x: float, k: int) -> float:
    exact = linalg.herm_exp(A + B, x)
    return linalg.operator_norm(exact - hamsim.suzuki_product(A, B, x, k))


def suzuki_scaling(seed: int = 0, pairs: int = 10, grids=None) -> dict:
    """Splitting error of the order-2 and order-4 formulas with exact exponentials."""
    grids = grids or {1: [0.4, 0.2, 0.1], 2: [0.8, 0.4, 0.2]}
    rngs = np.random.default_rng(seed).spawn(pairs)
    mats = []
    for r in rngs:
        dim = 2 + int(r.integers(3))
        mats.append((linalg.random_hermitian(dim, r), linalg.random_hermitian(dim, r)))
    orders = {}
    passed = True
    for k, xs in grids.items():
        errs = [float(np.mean([suzuki_error(A, B, x, k) for A, B in mats])) for x in xs]
        fit = fit_slope(xs, errs)
        expected = 2 * k + 1
        tol = 0.1 * expected
        ok = abs(fit["slope"] - expected) <= tol
        passed &= ok
        orders[str(2 * k)] = {"points": [{"x": x, "error": e} for x, e in zip(xs, errs)], "fit": fit,
                              "expected_slope": expected, "tolerance": tol, "passed": bool(ok)}
    return {"kind": "suzuki_scaling", "orders": orders, "passed": bool(passed)}


def bin_mass(theta: float, bits: int) -> float:
    """Probability of landing on one of the two register values adjacent to ``theta``."""
    size = 2**bits
    dist = pr.pe_distribution(theta, size)
    lo = int(np.floor(theta * size / pr.TWO_PI)) % size
    hi = (lo + 1) % size
    return float(dist[lo] + (dist[hi] if hi != lo else 0.0))


def pe_concentration(bits_values=(4, 6, 8), grid: int = 32) -> dict:
    phases = pr.TWO_PI * (np.arange(grid) + 0.5 * np.sqrt(2) - 0.5) / grid % pr.TWO_PI
    rows = []
    for b in bits_values:
        masses = [bin_mass(float(t), b) for t in phases]
        rows.append({"bits": b, "min_mass": min(masses)})
    zero = float(pr.pe_distribution(0.0, 2**bits_values[0])[0])
    bound = pr.CANONICAL_SUCCESS
    return {"kind": "pe_concentration", "points": rows, "bound": bound, "zero_phase_mass": zero,
            "passed": bool(all(r["min_mass"] >= bound for r in rows) and zero == 1.0)}


def _contract_cell(p: float, eps: float, trials: int, rng, kind: str) -> dict:
    hits = 0
    for r in rng.spawn(trials):
        if kind == "additive":
            v = pr.amplitude_estimate_additive(p, eps, r).value
            hits += abs(v - p) <= eps
        else:
            v = pr.amplitude_estimate_multiplicative(p, eps, r).value
            hits += abs(v - p) <= eps * p
    # reject the contract only if the rate is significantly below 2/3
    pval = binomtest(hits, trials, pr.AE_CONFIDENCE, alternative="less").pvalue
    return {"p": p, "eps": eps, "contract": kind, "successes": hits, "trials": trials,
            "rate": hits / trials, "p_value": float(pval), "passed": bool(pval >= 0.05)}


def ae_contract(seed: int = 0, ps=(0.1, 0.25, 0.5, 0.9), eps_values=(0.1, 0.05), trials: int = 1000) -> dict:
    cells = [(p, e, kind) for kind in ("additive", "multiplicative") for p in ps for e in eps_values]
    rngs = np.random.default_rng(seed).spawn(len(cells))
    rows = parallel_map(lambda item: _contract_cell(item[0][0], item[0][1], trials, item[1], item[0][2]),
                        list(zip(cells, rngs)))
    return {"kind": "ae_contract", "points": rows, "passed": all(r["passed"] for r in rows)}


def run_sweep(kind: str, seed: int = 0) -> dict:
    if kind == "dme_scaling":
        out = dme_scaling(seed)
        out["dme_simulate"] = dme_accuracy(seed)
        out["passed"] = out["passed"] and out["dme_simulate"]["passed"]
        return out
    if kind == "suzuki_scaling":
        return suzuki_scaling(seed)
    if kind == "pe_concentration":
        return pe_concentration()
    if kind == "ae_contract":
        return ae_contract(seed)
    raise ValueError(f"unknown sweep {kind!r}")
