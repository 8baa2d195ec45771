"""The outside observer: least-squares topology estimation and solvability.

The observer sees every node state and fits ``X_b = W_hat X_a`` by ordinary
least squares.  Whether the fit is unique depends only on the Krylov space
generated by the effective dynamics from ``x0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SnapshotPair
from .errors import DegenerateInputError, InsufficientDataError, MalformedInputError
from .spectral_graph import as_matrix

RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class InferenceResult:
    W_hat: np.ndarray
    rank_Xa: int
    unique: bool
    singular_values: np.ndarray
    frobenius_residual: float

    def to_report(self) -> dict:
        return {
            "rank_Xa": self.rank_Xa,
            "unique": self.unique,
            "frobenius_residual": self.frobenius_residual,
            "W_hat": self.W_hat.tolist(),
        }


def _numerical_rank(s: np.ndarray, rank_tol: float) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def ols_estimate(snap: SnapshotPair, rank_tol: float = RANK_TOL) -> InferenceResult:
    """Fit ``W_hat = X_b pinv(X_a)`` with a relative singular-value cutoff.

    When ``X_a`` is rank deficient the minimum-Frobenius-norm solution is
    returned and ``unique`` is False.
    """
    X_a = np.asarray(snap.X_a, dtype=float)
    X_b = np.asarray(snap.X_b, dtype=float)
    if X_a.shape != X_b.shape:
        raise MalformedInputError("X_a and X_b must have the same shape")
    n, T = X_a.shape
    if T < n:
        raise InsufficientDataError(f"need T >= n transitions, got T={T} for n={n}")

    U, s, Vt = np.linalg.svd(X_a, full_matrices=False)
    r = _numerical_rank(s, rank_tol)
    pinv = (Vt[:r].T / s[:r]) @ U[:, :r].T
    W_hat = X_b @ pinv
    residual = float(np.linalg.norm(W_hat @ X_a - X_b))
    return InferenceResult(W_hat, r, r == n, s, residual)


def krylov_matrix(W_eff, x0) -> np.ndarray:
    """Columns span{x0, A x0, ..., A^{n-1} x0}, each scaled to unit norm.

    Normalising every column keeps powers of a contraction from underflowing
    into spurious rank loss; the span is unchanged.
    """
    A = as_matrix(W_eff, "W_eff")
    v = np.asarray(x0, dtype=float)
    n = A.shape[0]
    if v.shape != (n,):
        raise MalformedInputError(f"x0 has shape {v.shape}, expected ({n},)")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DegenerateInputError("x0 must be nonzero")
    cols = np.zeros((n, n))
    v = v / norm
    for k in range(n):
        cols[:, k] = v
        v = A @ v
        norm = np.linalg.norm(v)
        if norm == 0.0:
            break
        v = v / norm
    return cols


def krylov_dimension(W_eff, x0, rank_tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(krylov_matrix(W_eff, x0), compute_uv=False)
    return _numerical_rank(s, rank_tol)


def solvability_check(W_eff, x0, rank_tol: float = RANK_TOL) -> bool:
    """True iff x0 lies in no proper invariant subspace of ``W_eff``."""
    return krylov_dimension(W_eff, x0, rank_tol) == as_matrix(W_eff).shape[0]
