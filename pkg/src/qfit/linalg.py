"""Dense complex linear algebra used throughout the simulator.

Matrices and kets are plain numpy arrays.  Density matrices are validated
on demand with :func:`check_density` and repaired after long channel
compositions with :func:`clean_density`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadFactorization, DimMismatch, NotHermitian, RankDeficient

HERMITIAN_TOL = 1e-10
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SpectralData:
    """Singular triples of a real n x d matrix, sorted ascending.

    ``left_vectors[:, j]`` and ``right_vectors[:, j]`` belong to
    ``singular_values[j]``.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def kappa(self) -> float:
        return float(self.singular_values[-1] / self.singular_values[0])

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def svd(F) -> SpectralData:
    """Thin SVD of a full-column-rank real matrix with ascending singular values.

    Each right singular vector is oriented so that its largest-magnitude
    entry is positive; the left vectors follow from ``u_j = F v_j / s_j``.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise DimMismatch(f"expected a matrix, got shape {F.shape}")
    n, d = F.shape
    if n < d:
        raise RankDeficient(f"need n >= d, got n={n}, d={d}")
    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    if s[-1] <= RANK_TOL:
        raise RankDeficient(f"smallest singular value {s[-1]:.3e} <= {RANK_TOL}")
    order = np.argsort(s, kind="stable")
    s = s[order]
    V = Vt.T[:, order]
    U = U[:, order]
    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivots, np.arange(d)])
    signs[signs == 0] = 1.0
    V = V * signs
    U = U * signs
    return SpectralData(singular_values=s, left_vectors=U, right_vectors=V)


def is_hermitian(H, tol: float = HERMITIAN_TOL) -> bool:
    H = np.asarray(H)
    return H.ndim == 2 and H.shape[0] == H.shape[1] and np.allclose(H, H.conj().T, atol=tol, rtol=0)


def herm_exp(H, t: float = 1.0) -> np.ndarray:
    """Return ``exp(i H t)`` through the eigendecomposition of ``H``."""
    H = np.asarray(H)
    if not is_hermitian(H):
        raise NotHermitian("herm_exp requires a Hermitian generator")
    H = 0.5 * (H + H.conj().T)
    w, V = np.linalg.eigh(H)
    return (V * np.exp(1j * w * t)) @ V.conj().T


def operator_norm(A) -> float:
    """Largest singular value."""
    A = np.atleast_2d(np.asarray(A))
    return float(np.linalg.norm(A, 2))


def trace_norm(A) -> float:
    """Sum of singular values."""
    A = np.atleast_2d(np.asarray(A))
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def trace_distance(rho1, rho2) -> float:
    """Half the trace norm of the difference of two density matrices."""
    rho1 = np.asarray(rho1)
    rho2 = np.asarray(rho2)
    if rho1.shape != rho2.shape:
        raise DimMismatch(f"shapes differ: {rho1.shape} vs {rho2.shape}")
    diff = rho1 - rho2
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def ket(amplitudes) -> np.ndarray:
    """Normalize an amplitude vector into a unit ket."""
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi).ravel()
    return np.outer(psi, psi.conj())


def basis(dim: int, index: int) -> np.ndarray:
    e = np.zeros(dim, dtype=complex)
    e[index] = 1.0
    return e


def partial_trace(rho, dims, keep: int) -> np.ndarray:
    """Reduced state of the factor ``keep`` of a bipartite (or multipartite) system.

    Parameters
    ----------
    rho : array (D, D)
        Operator on the tensor product of the factors in ``dims``.
    dims : sequence of int
        Factor dimensions; their product must equal D.
    keep : int
        Index of the retained factor.
    """
    rho = np.asarray(rho)
    dims = [int(x) for x in dims]
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise BadFactorization(f"operator of shape {rho.shape} does not factor as {dims}")
    if not 0 <= keep < len(dims):
        raise BadFactorization(f"no factor {keep} in {dims}")
    k = len(dims)
    t = rho.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:k])
    col = list(letters[k : 2 * k])
    for i in range(k):
        if i != keep:
            col[i] = row[i]
    spec = "".join(row) + "".join(col) + "->" + row[keep] + col[keep]
    return np.einsum(spec, t)


def check_density(rho, tol: float = HERMITIAN_TOL) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, PSD and unit trace within ``tol``."""
    rho = np.asarray(rho)
    if not is_hermitian(rho, tol):
        raise NotHermitian("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"trace {np.trace(rho).real:.12f} differs from 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ValueError("density matrix has a negative eigenvalue")


def clean_density(rho, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Symmetrize, clip eigenvalues in ``[-tol, 0)`` and renormalize the trace."""
    rho = np.asarray(rho, dtype=complex)
    rho = 0.5 * (rho + rho.conj().T)
    w, V = np.linalg.eigh(rho)
    if w.min() < -tol:
        raise ValueError(f"eigenvalue {w.min():.3e} below the clipping tolerance")
    w = np.clip(w, 0.0, None)
    rho = (V * w) @ V.conj().T
    return rho / np.trace(rho).real


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def random_hermitian(dim: int, rng, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = 0.5 * (A + A.conj().T)
    return scale * H / operator_norm(H)


def random_density(dim: int, rng, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    A = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real
