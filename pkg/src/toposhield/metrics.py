"""Scores comparing an inferred or perturbed topology with the true one."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import MalformedInputError
from .spectral_graph import as_matrix, spectral_profile, support_pattern

EPS0 = 0.2


@dataclass(frozen=True)
class SweepRecord:
    alpha_or_eps: float
    E2: float
    E2_frobenius: float
    jaccard: float
    mu2_modulus: float
    e1_final: float
    unique: bool

    def as_row(self) -> list:
        return [self.alpha_or_eps, self.E2, self.E2_frobenius, self.jaccard,
                self.mu2_modulus, self.e1_final, self.unique]


@dataclass(frozen=True)
class BauerFikeAudit:
    lhs_max: float
    rhs: float
    holds: bool | None
    skipped: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(A, B):
    a = np.asarray(as_matrix(A), dtype=float)
    b = np.asarray(as_matrix(B), dtype=float)
    if a.shape != b.shape:
        raise MalformedInputError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def inference_deviation(W_hat, W) -> float:
    """Spectral norm of ``W_hat - W``."""
    a, b = _pair(W_hat, W)
    return float(np.linalg.norm(a - b, 2))


def inference_deviation_frobenius(W_hat, W) -> float:
    a, b = _pair(W_hat, W)
    return float(np.linalg.norm(a - b, "fro"))


def jaccard_support(A, B, eps0: float = EPS0) -> float:
    """Jaccard index of the supports ``{|A_ij| > eps0}`` and ``{|B_ij| > eps0}``."""
    a, b = _pair(A, B)
    sa = support_pattern(a, eps0).pairs
    sb = support_pattern(b, eps0).pairs
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def bauer_fike_audit(W, K) -> BauerFikeAudit:
    """Compare eigenvalue displacement against ``kappa(V) ||K||_2``.

    Skipped when ``W`` is not numerically diagonalizable, since the bound
    then needs Jordan-structure terms that are not implemented.
    """
    Wm, Km = _pair(W, K)
    prof = spectral_profile(W)
    mu = np.linalg.eigvals(Wm + Km)
    lam = np.linalg.eigvals(Wm)
    lhs = float(np.max(np.min(np.abs(mu[:, None] - lam[None, :]), axis=1)))
    if prof.kappa_V is None:
        return BauerFikeAudit(lhs, float("nan"), None, True)
    rhs = prof.kappa_V * float(np.linalg.norm(Km, 2))
    # backward error of the eigensolver itself, so K = 0 is never a false alarm
    floor = 64 * np.finfo(float).eps * prof.kappa_V * max(1.0, float(np.linalg.norm(Wm, 2)))
    return BauerFikeAudit(lhs, rhs, bool(lhs <= rhs * (1 + 1e-8) + floor), False)
