"""Density-matrix exponentiation channels and product formulas.

Channels are stored as superoperators acting on row-major vectorized
matrices, so ``vec(A X B) = (A kron B.T) vec(X)`` and composition is a
matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import BudgetTooLarge, HypothesisViolated

DME_CONSTANT = 4.0
DEFAULT_STEP_CAP = 10**6


@dataclass(frozen=True, eq=False)
class ChannelApprox:
    """A channel on ``dim x dim`` matrices with its claimed accuracy and copy count."""

    dim: int
    superop: np.ndarray
    accuracy: float = 0.0
    copies_consumed: int = 0
    target: dict = field(default_factory=dict)

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return (self.superop @ rho.ravel()).reshape(self.dim, self.dim)

    def then(self, other: "ChannelApprox") -> "ChannelApprox":
        """Apply ``self`` first, then ``other``."""
        return ChannelApprox(
            dim=self.dim,
            superop=other.superop @ self.superop,
            accuracy=self.accuracy + other.accuracy,
            copies_consumed=self.copies_consumed + other.copies_consumed,
            target={"composite": True},
        )


def identity_channel(dim: int) -> ChannelApprox:
    return ChannelApprox(dim=dim, superop=np.eye(dim * dim, dtype=complex), target={"time": 0.0})


def superop_from_map(fn, dim: int) -> np.ndarray:
    """Superoperator whose column ``a*dim + b`` is ``vec(fn(|a><b|))``."""
    cols = []
    for a in range(dim):
        for b in range(dim):
            E = np.zeros((dim, dim), dtype=complex)
            E[a, b] = 1.0
            cols.append(np.asarray(fn(E)).ravel())
    return np.array(cols).T


def unitary_superop(U) -> np.ndarray:
    U = np.asarray(U)
    return np.kron(U, U.conj())


def swap_operator(D: int) -> np.ndarray:
    S = np.zeros((D * D, D * D))
    for i in range(D):
        for j in range(D):
            S[i * D + j, j * D + i] = 1.0
    return S


def swap_exponential(D: int, x: float) -> np.ndarray:
    """``exp(i x S) = cos(x) I + i sin(x) S`` on two ``D``-dimensional registers."""
    if D < 1:
        raise ValueError("D must be positive")
    return math.cos(x) * np.eye(D * D) + 1j * math.sin(x) * swap_operator(D)


def _check_program(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("program state must be square")
    return rho


def dme_step_superop(rho, x: float) -> np.ndarray:
    """Superoperator of ``sigma -> tr_1(e^{iSx} (rho kron sigma) e^{-iSx})``."""
    rho = _check_program(rho)
    D = rho.shape[0]
    W = swap_exponential(D, x)
    Wd = W.conj().T
    return superop_from_map(lambda E: linalg.partial_trace(W @ np.kron(rho, E) @ Wd, [D, D], keep=1), D)


def dme_step(rho, x: float) -> ChannelApprox:
    """One partial-swap interaction with a fresh copy of ``rho``."""
    if abs(x) > 1:
        raise ValueError("step size must satisfy |x| <= 1")
    rho = _check_program(rho)
    return ChannelApprox(dim=rho.shape[0], superop=dme_step_superop(rho, x), accuracy=x * x,
                         copies_consumed=1, target={"generator": "rho", "time": float(x)})


def dme_left_multiplier(rho, x: float) -> np.ndarray:
    """Operator ``L`` with ``tr_1(e^{iSx} (rho kron X)) = L X``.

    This is the action on a coherence between a branch where the swap
    interaction fires and a branch where it does not.
    """
    rho = _check_program(rho)
    D = rho.shape[0]
    W = swap_exponential(D, x)
    sup = superop_from_map(lambda E: linalg.partial_trace(W @ np.kron(rho, E), [D, D], keep=1), D)
    # a pure left multiplication L X has superoperator L kron I; read L off a block
    return sup.reshape(D, D, D, D)[:, 0, :, 0]


def dme_steps(t: float, eps: float, constant: float = DME_CONSTANT) -> int:
    if t == 0:
        return 0
    return math.ceil(constant * t * t / eps - 1e-9)


def dme_simulate(rho, t: float, eps: float, cap: int = DEFAULT_STEP_CAP,
                 constant: float = DME_CONSTANT) -> ChannelApprox:
    """Approximate conjugation by ``exp(i rho t)`` with ``m = ceil(c t**2 / eps)`` steps of size ``t/m``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    rho = _check_program(rho)
    D = rho.shape[0]
    m = dme_steps(t, eps, constant)
    if m == 0:
        return identity_channel(D)
    if m > cap:
        raise BudgetTooLarge(f"DME needs {m} steps, cap is {cap}")
    step = dme_step_superop(rho, t / m)
    return ChannelApprox(dim=D, superop=np.linalg.matrix_power(step, m), accuracy=eps,
                         copies_consumed=m, target={"generator": "rho", "time": float(t)})


def dme_simulate_robust(rho_approx, rho_true, t: float, eps: float, cap: int = DEFAULT_STEP_CAP) -> ChannelApprox:
    """DME driven by an approximate program state within ``eps/|t|`` of the true one."""
    gap = linalg.operator_norm(np.asarray(rho_true) - np.asarray(rho_approx))
    if t != 0 and gap > eps / abs(t) * (1 + 1e-12):
        raise HypothesisViolated(f"program-state error {gap:.3e} exceeds eps/t = {eps / abs(t):.3e}")
    ch = dme_simulate(rho_approx, t, eps, cap)
    return ChannelApprox(dim=ch.dim, superop=ch.superop, accuracy=2.0 * eps,
                         copies_consumed=ch.copies_consumed, target={"generator": "rho_true", "time": float(t)})


def test_battery(dim: int) -> list:
    """Basis states, the ``|i>+|j>`` and ``|i>+i|j>`` superpositions and the maximally mixed state."""
    states = [linalg.projector(linalg.basis(dim, i)) for i in range(dim)]
    for i in range(dim):
        for j in range(i + 1, dim):
            for phase in (1.0, 1j):
                psi = linalg.basis(dim, i) + phase * linalg.basis(dim, j)
                states.append(linalg.projector(linalg.ket(psi)))
    states.append(linalg.maximally_mixed(dim))
    return states


def choi_state(superop, dim: int) -> np.ndarray:
    """Output of ``channel x id`` on a maximally entangled input."""
    t = np.asarray(superop).reshape(dim, dim, dim, dim)
    return t.transpose(0, 2, 1, 3).reshape(dim * dim, dim * dim) / dim


def channel_distance(superop_a, superop_b, dim: int) -> float:
    """Largest trace distance between two channels' outputs over the test battery."""
    A = np.asarray(superop_a)
    B = np.asarray(superop_b)
    worst = linalg.trace_distance(choi_state(A, dim), choi_state(B, dim))
    for rho in test_battery(dim):
        v = rho.ravel()
        worst = max(worst, linalg.trace_distance((A @ v).reshape(dim, dim), (B @ v).reshape(dim, dim)))
    return worst


def check_channel(ch: ChannelApprox, tol: float = 1e-9) -> None:
    """Assert trace preservation and output positivity on the test battery."""
    for rho in test_battery(ch.dim):
        out = ch.apply(rho)
        if abs(np.trace(out).real - 1.0) > tol:
            raise ValueError("channel does not preserve the trace")
        if np.linalg.eigvalsh(0.5 * (out + out.conj().T)).min() < -tol:
            raise ValueError("channel output is not positive")


def suzuki_p(k: int) -> float:
    return 1.0 / (4.0 - 4.0 ** (1.0 / (2 * k - 1)))


def suzuki_factors(k: int, x: float) -> list:
    """Factor list ``[(label, time), ...]`` of the order-``2k`` formula; label is ``'A'`` or ``'B'``.

    Adjacent factors with the same label are merged.
    """
    if k < 1:
        raise ValueError("order index k must be at least 1")
    if k == 1:
        seq = [("A", x / 2), ("B", x), ("A", x / 2)]
    else:
        pk = suzuki_p(k)
        outer = suzuki_factors(k - 1, pk * x)
        seq = outer + outer + suzuki_factors(k - 1, (1 - 4 * pk) * x) + outer + outer
    return merge_factors(seq)


def merge_factors(seq) -> list:
    out = []
    for label, tm in seq:
        if out and out[-1][0] == label:
            out[-1] = (label, out[-1][1] + tm)
        else:
            out.append((label, tm))
    return out


def suzuki_product(A, B, x: float, k: int = 1) -> np.ndarray:
    """Order-``2k`` product approximating ``exp(i (A + B) x)`` from exact exponentials."""
    D = np.asarray(A).shape[0]
    out = np.eye(D, dtype=complex)
    for label, tm in suzuki_factors(k, x):
        out = out @ linalg.herm_exp(A if label == "A" else B, tm)
    return out


def suzuki_steps(t: float, k: int, delta: float, constant: float = 1.0) -> int:
    if t == 0:
        return 0
    return max(1, math.ceil(constant * abs(t) ** (1 + 1 / (2 * k)) * delta ** (-1 / (2 * k)) - 1e-9))


def suzuki_compose(tau_plus, tau_minus, t: float, k: int, delta: float, cap: int = DEFAULT_STEP_CAP,
                   step_constant: float = 1.0) -> ChannelApprox:
    """Approximate conjugation by ``exp(i (tau_plus - tau_minus) t)`` with DME factors.

    The time is split into ``ceil(c t^(1+1/2k) delta^(-1/2k))`` product-formula
    steps; each ``tau_plus`` factor runs DME forward and each ``tau_minus``
    factor runs it with negated time, at accuracy ``delta / n_factors``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    tp = _check_program(tau_plus)
    tm = _check_program(tau_minus)
    D = tp.shape[0]
    n_steps = suzuki_steps(t, k, delta, step_constant)
    if n_steps == 0:
        return identity_channel(D)
    seq = merge_factors(suzuki_factors(k, t / n_steps) * n_steps)
    per = delta / len(seq)
    total_steps = sum(dme_steps(tm_, per) for _, tm_ in seq)
    if total_steps > cap:
        raise BudgetTooLarge(f"product formula needs {total_steps} DME steps, cap is {cap}")
    sup = np.eye(D * D, dtype=complex)
    copies = 0
    cache = {}
    for label, tm_ in seq:
        key = (label, round(tm_, 15))
        if key not in cache:
            ch = dme_simulate(tp, tm_, per, cap) if label == "A" else dme_simulate(tm, -tm_, per, cap)
            cache[key] = ch
        ch = cache[key]
        # later factors act after earlier ones on the state
        sup = ch.superop @ sup
        copies += ch.copies_consumed
    return ChannelApprox(dim=D, superop=sup, accuracy=delta, copies_consumed=copies,
                         target={"generator": "tau", "time": float(t), "order": 2 * k,
                                 "outer_steps": n_steps, "factors": len(seq)})


def ladder_pe_distribution(program, rho_in, size: int, steps_per_unit: int) -> np.ndarray:
    """Register distribution of phase estimation on ``exp(i program)`` realized by controlled DME.

    The controlled power ``U^m`` on branch ``m`` is built from ``m *
    steps_per_unit`` partial-swap steps.  Branch ``m`` is active in step
    block ``s`` iff ``s < m``.  Diagonal blocks evolve under the two-sided
    DME channel; a coherence between branches ``m > m'`` picks up the
    one-sided multiplier once branch ``m'`` has stopped.  Returns the
    ``size`` outcome probabilities.
    """
    program = _check_program(program)
    D = program.shape[0]
    x = 1.0 / steps_per_unit
    E = np.linalg.matrix_power(dme_step_superop(program, x), steps_per_unit)
    L = np.linalg.matrix_power(dme_left_multiplier(program, x), steps_per_unit)
    # prefix sums Z_j = sum_{m' < j} E^{m'}(rho_in)
    y = np.asarray(rho_in, dtype=complex).ravel()
    Z = np.zeros((size + 1, D * D), dtype=complex)
    for m in range(size):
        Z[m + 1] = Z[m] + y
        y = E @ y
    C = np.zeros(size, dtype=complex)
    R = np.eye(D, dtype=complex)
    for lag in range(size):
        C[lag] = np.trace(R @ Z[size - lag].reshape(D, D))
        R = L @ R
    f = np.fft.fft(C)
    P = (f + f.conj() - C[0]).real / size**2
    P = np.clip(P, 0.0, None)
    return P / P.sum()
