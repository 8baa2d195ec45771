"""Feedback gains that mislead the observer without moving the consensus.

A gain ``K`` preserves the consensus point of ``W`` exactly when
``K 1 = 0``, ``w'K = 0`` and every eigenvalue of ``W + K`` other than 1
lies strictly inside the unit circle.  Three constructions are offered:

* :func:`synth_rank1` freezes the trajectory at ``x0`` so the observer's
  data has rank one.  It ignores sparsity and convergence.
* :func:`synth_sparse_kernel` draws ``K`` from the kernel of the vectorised
  equality constraints on the allowed support, then rescales it.
* :func:`synth_laplacian` uses ``K = -alpha (I - W)``, which every node can
  apply with neighbour information only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CombinationDegenerateError,
    ConsensusValueZeroError,
    DegenerateInitialStateError,
    DegenerateInputError,
    InfeasibleError,
    InvalidK0Error,
    InvalidParameterError,
    MalformedInputError,
)
from .spectral_graph import SupportPattern, as_matrix, spectral_profile

EQ_TOL = 1e-8
PERRON_TOL = 1e-8
KERNEL_RANK_TOL = 1e-10
NNZ_TOL = 1e-12

# Upper bound on eps * ||K0||_2 explored by the epsilon search.
_EPS_NORM_CAP = 1e3
_EPS_RATIO = 1.05


@dataclass(frozen=True)
class PreservationCertificate:
    res_right: float
    res_left: float
    mu2_modulus: float
    perron_simple: bool
    pass_: bool

    def to_dict(self) -> dict:
        return {
            "res_right": self.res_right,
            "res_left": self.res_left,
            "mu2_modulus": self.mu2_modulus,
            "perron_simple": self.perron_simple,
            "pass": self.pass_,
        }

    def explain(self) -> str:
        if self.pass_:
            return "all consensus-preservation conditions hold"
        reasons = []
        if self.res_right > EQ_TOL:
            reasons.append(f"K1 != 0 (residual {self.res_right:.3e})")
        if self.res_left > EQ_TOL:
            reasons.append(f"w'K != 0 (residual {self.res_left:.3e})")
        if not self.perron_simple:
            reasons.append("eigenvalue 1 of W+K is missing or not simple")
        if self.mu2_modulus >= 1.0:
            reasons.append(f"second eigenvalue modulus {self.mu2_modulus:.4f} >= 1")
        return "; ".join(reasons)


@dataclass(frozen=True, eq=False)
class FeedbackMatrix:
    K: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    certificate: PreservationCertificate | None = None
    sparsity_violations: tuple = ()

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def to_dict(self) -> dict:
        out = {"method": self.method}
        out.update(self.params)
        out["K"] = self.K.tolist()
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        if self.sparsity_violations:
            out["sparsity_violations"] = [list(p) for p in self.sparsity_violations]
        return out


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    M_tilde: np.ndarray
    free_support: SupportPattern
    column_map: tuple
    rank: int
    kernel_basis: np.ndarray  # rows are orthonormal kernel vectors

    @property
    def z(self) -> int:
        return len(self.column_map)

    @property
    def kernel_dimension(self) -> int:
        return self.kernel_basis.shape[0]

    def assemble(self, theta) -> np.ndarray:
        """Embed a reduced parameter vector back into an n x n gain."""
        K = np.zeros((self.free_support.n, self.free_support.n))
        for value, (i, j) in zip(np.asarray(theta, dtype=float), self.column_map):
            K[i, j] = value
        return K


def sparsity_violations(W, K, tol: float = NNZ_TOL) -> tuple:
    """Off-diagonal positions where ``K`` is nonzero but ``W`` has no edge."""
    Wm = as_matrix(W, "W")
    Km = as_matrix(K, "K")
    bad = (np.abs(Km) > tol) & (Wm == 0)
    np.fill_diagonal(bad, False)
    return tuple(zip(*(idx.tolist() for idx in np.nonzero(bad))))


def verify_preservation(W, K) -> PreservationCertificate:
    Wm = as_matrix(W, "W")
    Km = as_matrix(K, "K")
    if Km.shape != Wm.shape:
        raise MalformedInputError(f"K has shape {Km.shape}, W has {Wm.shape}")
    w = spectral_profile(W).left_perron
    res_right = float(np.max(np.abs(Km @ np.ones(Wm.shape[0]))))
    res_left = float(np.max(np.abs(w @ Km)))

    mu = np.linalg.eigvals(Wm + Km)
    dist = np.abs(mu - 1.0)
    k = int(np.argmin(dist))
    perron_simple = bool(dist[k] <= PERRON_TOL and np.sum(dist <= PERRON_TOL) == 1)
    mu2 = float(np.max(np.delete(np.abs(mu), k)))
    passed = res_right <= EQ_TOL and res_left <= EQ_TOL and mu2 < 1.0 and perron_simple
    return PreservationCertificate(res_right, res_left, mu2, perron_simple, bool(passed))


def critical_gain(r_max: float) -> float:
    return (1.0 - r_max) / (1.0 + r_max)


def alpha_critical(W) -> float:
    """Laplacian gain below which consensus is guaranteed to be preserved."""
    return critical_gain(spectral_profile(W).r_max)


def laplacian_gain(W, alpha: float) -> np.ndarray:
    Wm = as_matrix(W, "W")
    return -alpha * (np.eye(Wm.shape[0]) - Wm)


def synth_laplacian(W, alpha: float) -> FeedbackMatrix:
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    K = laplacian_gain(W, alpha)
    return FeedbackMatrix(K, "laplacian", {"alpha": float(alpha)}, verify_preservation(W, K))


def synth_rank1(W, x0, q_strategy="centered_x0") -> FeedbackMatrix:
    """Rank-one gain ``K = p q'`` that makes ``x0`` an eigenvector of ``W + K``.

    ``q_strategy`` is ``"centered_x0"`` (q = x0 - mean(x0) 1) or an explicit
    vector with ``q'1 = 0`` and ``q'x0 != 0``.  Because ``w'W = w'`` the
    target eigenvalue beta is 1, so the trajectory stays at ``x0`` forever:
    uniqueness of the fit is destroyed but consensus is not reached.  The
    certificate is attached as-is and normally fails.
    """
    Wm = as_matrix(W, "W")
    x = np.asarray(x0, dtype=float)
    n = Wm.shape[0]
    if x.shape != (n,):
        raise MalformedInputError(f"x0 has shape {x.shape}, expected ({n},)")
    scale = max(1.0, float(np.max(np.abs(x))))
    centered = x - x.mean()
    if np.max(np.abs(centered)) <= 1e-10 * scale:
        raise DegenerateInitialStateError("x0 is consensual; q'1 = 0 forces q'x0 = 0")

    if isinstance(q_strategy, str):
        if q_strategy != "centered_x0":
            raise InvalidParameterError(f"unknown q strategy {q_strategy!r}")
        q = centered
        strategy = "centered_x0"
    else:
        q = np.asarray(q_strategy, dtype=float)
        if q.shape != (n,):
            raise MalformedInputError("custom q has the wrong length")
        strategy = "custom"
    qx = float(q @ x)
    if abs(q.sum()) > 1e-10 * max(1.0, float(np.max(np.abs(q)))):
        raise InvalidParameterError("q must satisfy q'1 = 0")
    if abs(qx) <= 1e-12 * scale * max(1.0, float(np.max(np.abs(q)))):
        raise InvalidParameterError("q must satisfy q'x0 != 0")

    w = spectral_profile(W).left_perron
    consensus = float(w @ x)
    if abs(consensus) <= 1e-12 * scale:
        raise ConsensusValueZeroError("w'x0 = 0: the eigenvalue target is undefined")
    Wx = Wm @ x
    beta = float(w @ Wx) / consensus
    p = (beta * x - Wx) / qx
    K = np.outer(p, q)
    return FeedbackMatrix(
        K,
        "rank1",
        {"beta": beta, "q_strategy": strategy, "q": q.tolist()},
        verify_preservation(W, K),
        sparsity_violations(W, K),
    )


def free_support(W, strict_support: bool = False) -> SupportPattern:
    """Entries of K allowed to be nonzero.

    Off-diagonal entries follow the edges of ``W``.  Diagonal entries are
    always free unless ``strict_support`` restricts them to ``W_ii != 0``.
    """
    mask = as_matrix(W, "W") != 0
    if not strict_support:
        np.fill_diagonal(mask, True)
    rows, cols = np.nonzero(mask)
    return SupportPattern(mask.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))


def build_constraint_system(W, strict_support: bool = False) -> ConstraintSystem:
    """Stack ``K 1 = 0`` and ``w'K = 0`` on column-stacked vec(K), restricted to the support."""
    Wm = as_matrix(W, "W")
    n = Wm.shape[0]
    w = spectral_profile(W).left_perron
    M = np.vstack([
        np.kron(np.ones((1, n)), np.eye(n)),
        np.kron(np.eye(n), w[None, :]),
    ])
    support = free_support(W, strict_support)
    # column-stacking: vec(K)[j*n + i] = K[i, j]
    column_map = tuple(sorted(support.pairs, key=lambda ij: (ij[1], ij[0])))
    idx = [j * n + i for i, j in column_map]
    M_tilde = M[:, idx]

    _, s, Vt = np.linalg.svd(M_tilde, full_matrices=True)
    rank = int(np.sum(s > KERNEL_RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    return ConstraintSystem(M_tilde, support, column_map, rank, Vt[rank:].copy())


def _nnz(K: np.ndarray) -> int:
    return int(np.sum(np.abs(K) > NNZ_TOL))


def combine_kernel(system: ConstraintSystem, combine: str = "random", seed: int = 0) -> np.ndarray:
    """Form a base gain K0 from the kernel basis.

    ``random`` uses standard-normal coefficients.  ``max_support`` starts
    from the densest basis vector and keeps each further basis vector only if
    adding it increases the number of nonzero entries.
    """
    basis = system.kernel_basis
    if basis.shape[0] == 0:
        raise InfeasibleError("the constraint kernel is trivial (rank(M~) = z)")
    if combine == "random":
        coeffs = np.random.default_rng(seed).standard_normal(basis.shape[0])
        K0 = system.assemble(coeffs @ basis)
    elif combine == "max_support":
        mats = [system.assemble(v) for v in basis]
        order = sorted(range(len(mats)), key=lambda k: -_nnz(mats[k]))
        K0 = mats[order[0]]
        for k in order[1:]:
            candidate = K0 + mats[k]
            if _nnz(candidate) > _nnz(K0):
                K0 = candidate
    else:
        raise InvalidParameterError(f"unknown combine strategy {combine!r}")
    if np.max(np.abs(K0)) <= NNZ_TOL:
        raise CombinationDegenerateError("kernel combination vanished")
    return K0


def epsilon_scale(W, K0, safety: float = 0.9):
    """Largest stable multiple of ``K0`` (up to a 5% bracket), times ``safety``.

    The search starts at the Bauer-Fike safe value
    ``(1 - r_max) / (2 kappa(V) ||K0||_2)``, grows geometrically until the
    certificate fails, then bisects in log scale.  Returns
    ``(epsilon, certificate)``.
    """
    if not 0.0 < safety < 1.0:
        raise InvalidParameterError("safety must lie in (0, 1)")
    Km = as_matrix(K0, "K0")
    norm = float(np.linalg.norm(Km, 2))
    if norm == 0.0:
        raise DegenerateInputError("K0 must be nonzero")
    prof = spectral_profile(W)
    if (np.max(np.abs(Km.sum(axis=1))) > EQ_TOL
            or np.max(np.abs(prof.left_perron @ Km)) > EQ_TOL):
        raise InvalidK0Error("K0 must satisfy K0 1 = 0 and w'K0 = 0")

    def passes(eps):
        return verify_preservation(W, eps * Km).pass_

    if prof.kappa_V is not None:
        start = (1.0 - prof.r_max) / (2.0 * prof.kappa_V * norm)
    else:
        start = 1.0
    cap = _EPS_NORM_CAP / norm

    lo = start
    if passes(lo):
        hi = None
        while lo < cap:
            if not passes(2.0 * lo):
                hi = 2.0 * lo
                break
            lo *= 2.0
    else:
        hi = lo
        for _ in range(200):
            lo /= 2.0
            if passes(lo):
                break
        else:
            raise InvalidK0Error("no stable multiple of K0 was found")
    if hi is not None:
        while hi / lo > _EPS_RATIO:
            mid = math.sqrt(lo * hi)
            if passes(mid):
                lo = mid
            else:
                hi = mid

    eps = safety * lo
    cert = verify_preservation(W, eps * Km)
    while not cert.pass_:
        eps *= safety
        cert = verify_preservation(W, eps * Km)
    return eps, cert


def synth_sparse_kernel(W, combine: str = "random", seed: int = 0, safety: float = 0.9,
                        strict_support: bool = False) -> FeedbackMatrix:
    system = build_constraint_system(W, strict_support)
    if system.kernel_dimension == 0:
        raise InfeasibleError(
            f"rank(M~) = {system.rank} equals z = {system.z}; no nonzero gain fits the support"
        )
    K0 = combine_kernel(system, combine, seed)
    K0 = K0 / np.linalg.norm(K0, 2)
    eps, cert = epsilon_scale(W, K0, safety)
    params = {
        "epsilon": eps,
        "combine": combine,
        "seed": seed,
        "safety": safety,
        "strict_support": strict_support,
        "kernel_dimension": system.kernel_dimension,
    }
    K = eps * K0
    return FeedbackMatrix(K, "sparse_kernel", params, cert, sparsity_violations(W, K))
