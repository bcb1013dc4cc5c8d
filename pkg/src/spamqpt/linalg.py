"""Dense linear algebra used by the estimators."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import BranchCutError, ConditioningError, DimensionError, MatrixPowerError

EIGVEC_COND_MAX = 1e8
SMALL_EIGENVALUE = 1e-10
IMAG_RESIDUE_MAX = 1e-8
EXACT_MATCH_MAX_N = 6


@dataclass(frozen=True, eq=False)
class SVDFactors:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.sigma) @ self.V.T


def svd(A) -> SVDFactors:
    U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    return SVDFactors(U, s, Vt.T)


def pinv(A, rank: int | None = None, rtol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Parameters
    ----------
    A : array_like
        Real rectangular matrix.
    rank : int, optional
        Keep exactly this many leading singular values. Overrides ``rtol``.
    rtol : float
        Singular values below ``rtol * sigma_max`` are treated as zero.

    Returns
    -------
    numpy.ndarray
        Array of shape ``A.T.shape``.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise DimensionError("pinv of an empty matrix")
    f = svd(A)
    if rank is not None:
        if rank > min(A.shape) or rank < 0:
            raise DimensionError(f"forced rank {rank} exceeds min(dims) = {min(A.shape)}")
        keep = np.arange(f.sigma.size) < rank
    else:
        keep = f.sigma > rtol * (f.sigma[0] if f.sigma.size else 0.0)
    inv_s = np.zeros_like(f.sigma)
    inv_s[keep] = 1.0 / f.sigma[keep]
    return (f.V * inv_s) @ f.U.T


def truncate_to_rank(A, r: int) -> np.ndarray:
    """Closest rank-``r`` matrix in Frobenius (and spectral) norm."""
    A = np.asarray(A, dtype=float)
    if r <= 0:
        raise DimensionError(f"target rank must be positive, got {r}")
    if r > min(A.shape):
        raise DimensionError(f"target rank {r} exceeds min(dims) = {min(A.shape)}")
    f = svd(A)
    if np.count_nonzero(f.sigma[r:]) == 0:
        return A.copy()
    s = f.sigma.copy()
    s[r:] = 0.0
    return (f.U * s) @ f.V.T


def frac_power(A, p: float) -> np.ndarray:
    """Principal real power ``A**p`` of a diagonalizable real matrix.

    Raises :class:`ConditioningError` when the eigenvector matrix is nearly
    singular and :class:`BranchCutError` when a non-integer power would need an
    eigenvalue on the closed negative real axis. Both carry the offending
    eigenvalue.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"frac_power needs a square matrix, got {A.shape}")
    n = A.shape[0]
    p = float(p)
    if p == 0.0:
        return np.eye(n)
    if p == 1.0:
        return A.copy()

    w, V = np.linalg.eig(A)
    small = np.abs(w) < SMALL_EIGENVALUE
    if small.any():
        lam = w[small][0]
        raise MatrixPowerError(f"matrix is numerically singular (eigenvalue {lam:.3g})", lam)

    if p.is_integer():
        return np.linalg.matrix_power(A, int(p))

    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > EIGVEC_COND_MAX:
        # report the eigenvalue with the closest neighbour, the usual culprit
        gaps = np.abs(w[:, None] - w[None, :]) + np.diag(np.full(n, np.inf))
        lam = w[np.argmin(gaps.min(axis=1))]
        raise ConditioningError(
            f"matrix is nearly defective (eigenvector condition {cond:.3g}, near eigenvalue {lam:.6g})",
            lam,
        )
    on_cut = (w.real < 0) & (np.abs(w.imag) <= 1e-12 * np.abs(w))
    if on_cut.any():
        lam = w[on_cut][0]
        raise BranchCutError(f"eigenvalue {lam:.6g} lies on the negative real axis", lam)

    out = (V * w**p) @ np.linalg.inv(V)
    if np.max(np.abs(out.imag)) > IMAG_RESIDUE_MAX:
        raise ConditioningError(
            f"power has imaginary residue {np.max(np.abs(out.imag)):.3g}", None
        )
    return out.real


@dataclass(frozen=True, eq=False)
class EigenSet:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)


def eigenvalues(A) -> EigenSet:
    """Eigenvalues ordered by decreasing modulus, then by phase."""
    w = np.linalg.eigvals(np.asarray(A, dtype=float))
    order = np.lexsort((np.angle(w), -np.round(np.abs(w), 12)))
    return EigenSet(w[order])


@lru_cache(maxsize=None)
def _permutations(n):
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def eigen_delta(true_vals, est_vals) -> float:
    """Mean absolute eigenvalue error under the best one-to-one pairing.

    Pairing is the exact minimum over all permutations for up to six values
    and an optimal assignment solve above that.
    """
    a = np.asarray(true_vals.values if isinstance(true_vals, EigenSet) else true_vals, dtype=complex)
    b = np.asarray(est_vals.values if isinstance(est_vals, EigenSet) else est_vals, dtype=complex)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"eigenvalue sets differ in length: {a.shape} vs {b.shape}")
    n = a.size
    if n == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    if n <= EXACT_MATCH_MAX_N:
        perms = _permutations(n)
        total = cost[np.arange(n), perms].sum(axis=1).min()
    else:
        rows, cols = linear_sum_assignment(cost)
        total = cost[rows, cols].sum()
    return float(total) / n
