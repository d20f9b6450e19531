"""Simulated state preparation for the design matrix and the response.

Postselected states are computed exactly; the cost of amplifying the
postselection is recorded in ``cost_model`` instead of materializing
parallel registers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ZeroRow
from .primitives import amplitude_amplify_cost
from .problem import ZERO_TOL, FitProblem


@dataclass(frozen=True, eq=False)
class DiscretizedRow:
    """Bucketed version of a normalized row: ``phi[j]**2 = Z[j] / M``."""

    i: int
    M: int
    partial_sums: np.ndarray
    bucket_bounds: np.ndarray
    bucket_sizes: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True, eq=False)
class PreparedState:
    state: np.ndarray
    success_probability: float
    accuracy: float
    cost_model: dict = field(default_factory=dict)


def bucket_count(d: int, gamma: float) -> int:
    return math.ceil(d / gamma**2 - 1e-9)


def discretize_row(p: FitProblem, i: int, gamma: float) -> DiscretizedRow:
    """Split ``M = ceil(d / gamma**2)`` buckets among the entries of row ``i``.

    Bucket ``j`` receives ``Z[j] = ceil(M S_j / S_d) - ceil(M S_{j-1} / S_d)``
    slots, where ``S_j`` are partial sums of squared entries.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    row = np.asarray(p.F[i], dtype=float)
    norm = np.linalg.norm(row)
    if norm <= ZERO_TOL:
        raise ZeroRow(f"row {i} is zero")
    M = bucket_count(row.shape[0], gamma)
    S = np.cumsum(row**2)
    bounds = np.zeros(row.shape[0] + 1, dtype=np.int64)
    # small slack keeps exact ratios such as 1/2 from rounding up
    bounds[1:] = np.ceil(M * S / S[-1] - 1e-9).astype(np.int64)
    bounds[-1] = M
    bounds = np.maximum.accumulate(bounds)
    Z = np.diff(bounds)
    phi = np.sign(row) * np.sqrt(Z / M)
    return DiscretizedRow(i=i, M=M, partial_sums=S, bucket_bounds=bounds, bucket_sizes=Z, phi=phi)


def _amplification(success: float, delta: float) -> dict:
    cost = amplitude_amplify_cost(success, delta)
    return {
        "oracle_calls_per_attempt": 1,
        "amplified_success": cost.final_probability,
        "repetitions": cost.repetitions,
        "rounds": cost.rounds,
    }


def normalized_rows(p: FitProblem, gamma: float | None = None) -> np.ndarray:
    """Rows divided by their norms; discretized when ``gamma`` is given.  Zero rows stay zero."""
    rows = np.zeros_like(p.F)
    norms = np.linalg.norm(p.F, axis=1)
    for i in np.flatnonzero(norms > ZERO_TOL):
        rows[i] = discretize_row(p, i, gamma).phi if gamma is not None else p.F[i] / norms[i]
    return rows


def prepare_F_state(p: FitProblem, delta: float, gamma: float | None = None) -> PreparedState:
    """Postselected ``sum_i |i>|F_i>`` on ``n*d`` amplitudes (index ``i*d + j``).

    Each row is loaded with amplitude ``|F_i| / (sqrt(n) beta)``, so the
    postselection succeeds with probability ``sum_i |F_i|**2 / (n beta**2)``.
    With ``gamma`` set, the row directions come from :func:`discretize_row`.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    norms = np.linalg.norm(p.F, axis=1)
    rows = normalized_rows(p, gamma)
    amps = (norms / (np.sqrt(p.n) * p.beta))[:, None] * rows
    success = float(np.sum(amps**2))
    state = (amps / np.sqrt(success)).ravel()
    accuracy = 0.0
    if gamma is not None:
        exact = (p.F / np.sqrt(np.sum(p.F**2))).ravel()
        accuracy = float(np.sqrt(max(0.0, 1.0 - abs(exact @ state) ** 2)))
    cost = _amplification(success, delta)
    cost["success_lower_bound"] = p.alpha**2 / p.beta**2 / p.n * int(np.sum(norms > ZERO_TOL))
    return PreparedState(state=state, success_probability=success, accuracy=accuracy, cost_model=cost)


def prepare_sigma(p: FitProblem, delta: float, gamma: float | None = None) -> PreparedState:
    """Reduced row-register state of :func:`prepare_F_state`; equals ``F F^T`` when exact."""
    prep = prepare_F_state(p, delta, gamma)
    psi = prep.state.reshape(p.n, p.d)
    sigma = psi @ psi.conj().T
    return PreparedState(state=sigma, success_probability=prep.success_probability,
                         accuracy=prep.accuracy, cost_model=prep.cost_model)


def prepare_y_state(p: FitProblem, delta: float) -> PreparedState:
    """Postselected response state; succeeds with probability ``|y|**2 / (n zeta**2)``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    amps = p.y / (np.sqrt(p.n) * p.zeta)
    success = float(amps @ amps)
    cost = _amplification(success, delta)
    cost["success_lower_bound"] = 1.0 / p.chi**2 * int(np.sum(np.abs(p.y) > ZERO_TOL)) / p.n
    return PreparedState(state=amps / np.sqrt(success), success_probability=success,
                         accuracy=0.0, cost_model=cost)


def tau_eigensystem(p: FitProblem):
    """Eigenvalues ``+s_j**2`` then ``-s_j**2`` and the matching vectors ``w_j^+, w_j^-``.

    The vectors live on ``{0,1} x R^n`` with index ``q*n + r``; ``v_j`` is
    zero-padded to ``n`` entries.
    """
    spec = p.spectral
    n, d = p.n, p.d
    V = np.zeros((n, d))
    V[:d] = spec.right_vectors
    U = spec.left_vectors
    plus = np.vstack([V, U]) / np.sqrt(2.0)
    minus = np.vstack([V, -U]) / np.sqrt(2.0)
    s2 = spec.singular_values**2
    return np.concatenate([s2, -s2]), np.hstack([plus, minus])


def tau_states(p: FitProblem):
    """Return ``(tau_plus, tau_minus)``, both unit-trace states of dimension ``2n``."""
    vals, W = tau_eigensystem(p)
    d = p.d
    s2 = vals[:d]
    tp = (W[:, :d] * s2) @ W[:, :d].T
    tm = (W[:, d:] * s2) @ W[:, d:].T
    return tp, tm


def tau_operator(p: FitProblem) -> np.ndarray:
    """``tau_plus - tau_minus``, a traceless generator with eigenvalues ``+-s_j**2``."""
    tp, tm = tau_states(p)
    return tp - tm


def prepare_tau(p: FitProblem, sign: int, delta: float) -> PreparedState:
    """Prepare ``tau_plus`` (``sign=+1``) or ``tau_minus`` (``sign=-1``) from copies of the row state."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    prep = prepare_F_state(p, delta)
    tp, tm = tau_states(p)
    rho = tp if sign == 1 else tm
    return PreparedState(state=rho.astype(complex), success_probability=prep.success_probability,
                         accuracy=0.0, cost_model=prep.cost_model)


def column_projector(rho, tol: float = 1e-10) -> np.ndarray:
    """Projector onto the range of a PSD matrix."""
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    Vr = V[:, w > tol]
    return Vr @ Vr.conj().T


def reduced_rows(state: np.ndarray, n: int, d: int) -> np.ndarray:
    psi = np.asarray(state).reshape(n, d)
    return linalg.partial_trace(np.outer(psi.ravel(), psi.ravel().conj()), [n, d], keep=0)
