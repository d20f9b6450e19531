"""Least-squares fitting problems, the classical oracle and the sign gadget."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag, hadamard

from . import linalg
from .errors import BadDimension, DimMismatch, RankDeficient, ZeroInput

MAX_PADDED_ROWS = 2**14
ZERO_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class FitProblem:
    """A normalized fitting instance: ``tr(F^T F) = 1`` and ``|y| = 1``.

    ``alpha``/``beta`` bound the nonzero row norms of ``F``, ``eta``/``zeta``
    the nonzero entries of ``y``, and ``a``/``b`` bracket the singular values.
    Zero rows and zero responses (from padding) are excluded from the
    spread parameters.
    """

    F: np.ndarray
    y: np.ndarray
    alpha: float
    beta: float
    eta: float
    zeta: float
    a: float
    b: float

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def d(self) -> int:
        return self.F.shape[1]

    @property
    def nu(self) -> float:
        return self.beta / self.alpha

    @property
    def chi(self) -> float:
        return self.zeta / self.eta

    @property
    def kappa(self) -> float:
        return self.b / self.a

    @cached_property
    def spectral(self) -> linalg.SpectralData:
        return linalg.svd(self.F)

    @cached_property
    def fit(self) -> "ClassicalFit":
        return classical_fit(self)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "kappa": self.kappa,
            "nu": self.nu,
            "chi": self.chi,
            "a": self.a,
            "b": self.b,
            "phi_classical": self.fit.phi,
        }


@dataclass(frozen=True, eq=False)
class ClassicalFit:
    theta_hat: np.ndarray
    y_hat: np.ndarray
    residual: np.ndarray
    phi: float
    E_hat: float
    theta_bar: np.ndarray
    theta_norm: float


@dataclass(frozen=True, eq=False)
class SignGadget:
    """Augmented instance whose entry ``d+1`` of the solution is known positive."""

    G: np.ndarray
    z: np.ndarray
    F_prime: np.ndarray
    y_prime: np.ndarray
    theta_norm_estimate: float
    padded_rows: int
    problem: FitProblem


def _nonzero_bounds(values) -> tuple[float, float]:
    mags = np.abs(values)
    mags = mags[mags > ZERO_TOL]
    return float(mags.min()), float(mags.max())


def normalize_problem(F_raw, y_raw, a: float | None = None, b: float | None = None) -> FitProblem:
    """Scale ``F`` to unit Frobenius norm and ``y`` to unit length.

    ``a`` and ``b`` default to the extreme singular values of the scaled
    matrix; looser values may be passed to widen the error budgets.
    """
    F = np.array(F_raw, dtype=float)
    y = np.array(y_raw, dtype=float).ravel()
    if F.ndim == 1:
        F = F[:, None]
    if F.ndim != 2:
        raise DimMismatch(f"design matrix must be 2-D, got shape {F.shape}")
    if y.shape[0] != F.shape[0]:
        raise DimMismatch(f"response has length {y.shape[0]}, design matrix has {F.shape[0]} rows")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(y))):
        raise ZeroInput("inputs contain NaN or Inf")
    fro = np.sqrt(np.sum(F**2))
    ynorm = np.linalg.norm(y)
    if fro == 0 or ynorm == 0:
        raise ZeroInput("design matrix and response must be nonzero")
    F = F / fro
    y = y / ynorm
    spec = linalg.svd(F)
    s = spec.singular_values
    a = float(s[0]) if a is None else float(a)
    b = float(s[-1]) if b is None else float(b)
    if not (0 < a <= s[0] * (1 + 1e-12) and b >= s[-1] * (1 - 1e-12)):
        raise ValueError(f"need 0 < a <= s_1 = {s[0]:.6g} and b >= s_d = {s[-1]:.6g}")
    alpha, beta = _nonzero_bounds(np.linalg.norm(F, axis=1))
    eta, zeta = _nonzero_bounds(y)
    problem = FitProblem(F=F, y=y, alpha=alpha, beta=beta, eta=eta, zeta=zeta, a=a, b=b)
    object.__setattr__(problem, "spectral", spec)
    return problem


def classical_fit(p: FitProblem) -> ClassicalFit:
    """Least-squares solution through the SVD pseudoinverse."""
    spec = p.spectral
    U, s, V = spec.left_vectors, spec.singular_values, spec.right_vectors
    coeffs = U.T @ p.y
    theta_hat = V @ (coeffs / s)
    y_hat = p.F @ theta_hat
    residual = p.y - y_hat
    ynorm2 = float(p.y @ p.y)
    phi = float(y_hat @ y_hat) / ynorm2
    theta_norm = float(np.linalg.norm(theta_hat))
    theta_bar = theta_hat / theta_norm if theta_norm > 0 else np.zeros_like(theta_hat)
    return ClassicalFit(
        theta_hat=theta_hat,
        y_hat=y_hat,
        residual=residual,
        phi=phi,
        E_hat=float(residual @ residual),
        theta_bar=theta_bar,
        theta_norm=theta_norm,
    )


def padded_size(n: int) -> int:
    size = 1
    while size < n:
        size *= 2
    return size


def build_sign_gadget(p: FitProblem, theta_norm_est: float) -> SignGadget:
    """Append a block whose fitted parameter equals ``theta_norm_est``.

    ``G`` is made of the first ``d`` columns of a Hadamard matrix of order
    ``n`` (rows zero-padded up to a power of two), scaled so that every
    column has norm ``1/sqrt(d)`` and every row norm ``1/sqrt(n)``.
    """
    if not theta_norm_est > 0:
        raise ValueError("theta_norm_est must be positive")
    n, d = p.n, p.d
    n_pad = padded_size(max(n, d))
    if n_pad > MAX_PADDED_ROWS:
        raise BadDimension(f"padding {n} rows to {n_pad} exceeds the cap {MAX_PADDED_ROWS}")
    F = np.zeros((n_pad, d))
    F[:n] = p.F
    y = np.zeros(n_pad)
    y[:n] = p.y
    G = hadamard(n_pad)[:, :d] / np.sqrt(n_pad * d)
    z = theta_norm_est * G[:, 0]
    F_prime = block_diag(F, G) / np.sqrt(2.0)
    y_prime = np.concatenate([y, z]) / np.sqrt(1.0 + theta_norm_est**2 / d)
    return SignGadget(
        G=G,
        z=z,
        F_prime=F_prime,
        y_prime=y_prime,
        theta_norm_estimate=float(theta_norm_est),
        padded_rows=n_pad - n,
        problem=normalize_problem(F_prime, y_prime),
    )


@dataclass
class BoundsReport:
    checks: dict = field(default_factory=dict)

    def add(self, name: str, lhs: float, rhs: float, rtol: float = 1e-12) -> None:
        """Record the inequality ``lhs <= rhs``; slack is ``rhs - lhs``."""
        slack = float(rhs - lhs)
        ok = slack >= -rtol * max(1.0, abs(lhs), abs(rhs))
        self.checks[name] = {"passed": bool(ok), "slack": slack}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def check_bounds(p: FitProblem) -> BoundsReport:
    """Evaluate the singular-value, parameter-norm and spread inequalities."""
    rep = BoundsReport()
    s = p.spectral.singular_values
    d, kappa = p.d, p.kappa
    fit = p.fit
    rep.add("sum_s2_upper", float(np.sum(s**2)), 1.0)
    rep.add("sum_s2_lower", 1.0, float(np.sum(s**2)))
    rep.add("s1_lower", 1.0 / (kappa * np.sqrt(d)), float(s[0]))
    rep.add("sd_upper", float(s[-1]), kappa / np.sqrt(d))
    rep.add("a_le_s1", p.a, float(s[0]))
    rep.add("sd_le_b", float(s[-1]), p.b)
    rep.add("theta_norm_lower", d * fit.phi / kappa**2, fit.theta_norm**2)
    rep.add("theta_norm_upper", fit.theta_norm**2, d * fit.phi * kappa**2)
    rows = np.linalg.norm(p.F, axis=1)
    rows = rows[rows > ZERO_TOL]
    rep.add("row_norm_lower", p.alpha, float(rows.min()))
    rep.add("row_norm_upper", float(rows.max()), p.beta)
    ys = np.abs(p.y)
    ys = ys[ys > ZERO_TOL]
    rep.add("response_lower", p.eta, float(ys.min()))
    rep.add("response_upper", float(ys.max()), p.zeta)
    return rep


def random_problem(n: int, d: int, rng, kappa_max: float = 50.0, phi_range=(0.0, 1.0)) -> FitProblem:
    """Random normalized instance with ``kappa <= kappa_max`` and a fit quality
    drawn uniformly from ``phi_range``."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, d)))
    W, _ = np.linalg.qr(rng.normal(size=(d, d)))
    s = np.exp(rng.uniform(0.0, np.log(kappa_max), size=d)) if d > 1 else np.ones(1)
    F = (Q * s) @ W.T
    phi = rng.uniform(*phi_range)
    inside = Q @ rng.normal(size=d)
    inside /= np.linalg.norm(inside)
    if n > d:
        outside = rng.normal(size=n)
        outside -= Q @ (Q.T @ outside)
        outside /= np.linalg.norm(outside)
    else:
        outside, phi = np.zeros(n), 1.0
    y = np.sqrt(phi) * inside + np.sqrt(1.0 - phi) * outside
    return normalize_problem(F, y)
