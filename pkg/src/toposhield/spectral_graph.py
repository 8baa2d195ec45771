"""Consensus topology matrices: validation, spectra, generation, support.

A topology matrix ``W`` is row-stochastic and nonnegative.  Consensus needs
1 to be a simple eigenvalue with every other eigenvalue strictly inside the
unit circle; :func:`validate_assumption1` checks exactly that.

Index pairs are 0-based ``(row, col)`` tuples throughout the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import AssumptionViolation, GenerationFailure, MalformedInputError

TOL_ROW = 1e-10
TOL_EIG = 1e-8
MAX_DRAWS = 100

# Eigenvalues closer than this are treated as one cluster when testing for
# defective (non-diagonalizable) structure.
_CLUSTER_TOL = 1e-6
_KAPPA_CEILING = 1e12


def as_matrix(A, name="matrix") -> np.ndarray:
    """Return ``A`` as a finite, square float64 array (copies are not forced)."""
    if isinstance(A, TopologyMatrix):
        return A.entries
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise MalformedInputError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MalformedInputError(f"{name} contains NaN or infinite entries")
    return arr


@dataclass(frozen=True)
class SupportPattern:
    n: int
    pairs: frozenset

    @property
    def z(self) -> int:
        return len(self.pairs)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.pairs:
            m[i, j] = True
        return m


def support_pattern(A, threshold: float = 0.0) -> SupportPattern:
    """Index pairs whose entries exceed ``threshold`` in magnitude (strictly)."""
    arr = np.asarray(A.entries if isinstance(A, TopologyMatrix) else A, dtype=float)
    if arr.ndim != 2:
        raise MalformedInputError("support_pattern expects a 2-D array")
    rows, cols = np.nonzero(np.abs(arr) > threshold)
    return SupportPattern(arr.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))


@dataclass(frozen=True, eq=False)
class TopologyMatrix:
    """Row-stochastic nonnegative weight matrix.

    The entries are stored as a read-only copy, so instances can be shared
    freely between workers.
    """

    entries: np.ndarray
    tol_row: float = field(default=TOL_ROW, repr=False)

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise MalformedInputError(f"topology must be square, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MalformedInputError("topology contains NaN or infinite entries")
        if arr.shape[0] < 2:
            raise MalformedInputError("topology needs n >= 2")
        if np.any(arr < 0):
            raise MalformedInputError("topology has negative entries")
        dev = np.max(np.abs(arr.sum(axis=1) - 1.0))
        if dev > self.tol_row:
            raise MalformedInputError(f"rows do not sum to 1 (max deviation {dev:.3e})")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def support(self) -> SupportPattern:
        return support_pattern(self.entries, 0.0)

    def __eq__(self, other):
        return isinstance(other, TopologyMatrix) and np.array_equal(self.entries, other.entries)

    __hash__ = None

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "rows": self.entries.tolist()}, indent=2) + "\n"


@dataclass(frozen=True)
class ValidationReport:
    row_stochastic: bool
    perron_simple: bool
    spectrum_inside: bool
    r_max: float

    @property
    def ok(self) -> bool:
        return self.row_stochastic and self.perron_simple and self.spectrum_inside


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    eigenvalues: np.ndarray
    left_perron: np.ndarray
    r_max: float
    kappa_V: float | None
    diagonalizable: bool
    right_vectors: np.ndarray = field(repr=False)


def _perron_index(eigvals: np.ndarray) -> int:
    return int(np.argmin(np.abs(eigvals - 1.0)))


def _second_modulus(eigvals: np.ndarray, skip: int) -> float:
    rest = np.delete(np.abs(eigvals), skip)
    return float(rest.max()) if rest.size else 0.0


def validate_assumption1(W, tol: float = TOL_ROW, tol_eig: float = TOL_EIG) -> ValidationReport:
    """Check row-stochasticity, simplicity of eigenvalue 1 and the spectral gap.

    ``W`` may be a :class:`TopologyMatrix` or any square array; arrays that
    are not row-stochastic are reported, not rejected.
    """
    arr = as_matrix(W, "W")
    row_ok = bool(np.all(arr >= 0) and np.max(np.abs(arr.sum(axis=1) - 1.0)) <= tol)
    eigvals = np.linalg.eigvals(arr)
    near_one = np.abs(eigvals - 1.0) <= tol_eig
    perron_simple = int(near_one.sum()) == 1
    k = _perron_index(eigvals)
    r_max = _second_modulus(eigvals, k)
    inside = bool(np.all(np.delete(np.abs(eigvals), k) < 1.0 - tol_eig))
    return ValidationReport(row_ok, perron_simple, inside, r_max)


def require_assumption1(W) -> ValidationReport:
    report = validate_assumption1(W)
    if not report.ok:
        raise AssumptionViolation(f"topology violates the consensus assumption: {report}", report)
    return report


def _eigenbasis(arr: np.ndarray, eigvals: np.ndarray, V: np.ndarray):
    """Return ``(diagonalizable, V)`` with repeated eigenvalues re-based.

    LAPACK returns nearly parallel vectors for a repeated eigenvalue even when
    it is semisimple, so each cluster is replaced by an orthonormal basis of
    the null space of ``arr - lam I``.  A cluster whose null space is smaller
    than its multiplicity marks the matrix as defective.
    """
    n = arr.shape[0]
    V = V.astype(complex)
    seen = np.zeros(n, dtype=bool)
    scale = max(1.0, float(np.abs(eigvals).max()))
    for i in range(n):
        if seen[i]:
            continue
        cluster = np.abs(eigvals - eigvals[i]) <= _CLUSTER_TOL * scale
        seen |= cluster
        m = int(cluster.sum())
        if m == 1:
            continue
        lam = eigvals[cluster].mean()
        _, s, Vh = np.linalg.svd(arr - lam * np.eye(n))
        geometric = int(np.sum(s <= 1e-7 * max(1.0, s[0])))
        if geometric < m:
            return False, V
        V[:, np.nonzero(cluster)[0]] = Vh[-m:].conj().T
    return bool(np.linalg.cond(V) <= _KAPPA_CEILING), V


def spectral_profile(W) -> SpectralProfile:
    """Eigenvalues (descending modulus, Perron first), left Perron vector, r_max, kappa(V)."""
    require_assumption1(W)
    arr = as_matrix(W, "W")
    eigvals, vl, vr = scipy.linalg.eig(arr, left=True, right=True)
    k = _perron_index(eigvals)
    w = np.real(vl[:, k])
    w = w / w.sum()

    order = [k] + sorted((i for i in range(len(eigvals)) if i != k),
                         key=lambda i: -abs(eigvals[i]))
    eigvals = eigvals[order]
    vr = vr[:, order]
    diag, vr = _eigenbasis(arr, eigvals, vr)
    kappa = float(np.linalg.cond(vr)) if diag else None
    return SpectralProfile(
        eigenvalues=eigvals,
        left_perron=w,
        r_max=_second_modulus(eigvals, 0),
        kappa_V=kappa,
        diagonalizable=diag,
        right_vectors=vr,
    )


def random_topology(n: int, density: float, seed: int) -> TopologyMatrix:
    """Draw a self-loop-bearing topology that satisfies the consensus assumption.

    Each off-diagonal entry is in the support with probability ``density``;
    weights are uniform on (0, 1] before row normalisation.  Failed draws are
    retried with fresh randomness from the same generator, so the result is a
    deterministic function of ``(n, density, seed)``.
    """
    if n < 2:
        raise MalformedInputError("random_topology needs n >= 2")
    if not 0.0 < density <= 1.0:
        raise MalformedInputError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_DRAWS):
        mask = rng.random((n, n)) < density
        np.fill_diagonal(mask, True)
        weights = (1.0 - rng.random((n, n))) * mask
        weights /= weights.sum(axis=1, keepdims=True)
        if validate_assumption1(weights).ok:
            return TopologyMatrix(weights)
    raise GenerationFailure(
        f"no admissible topology in {MAX_DRAWS} draws (n={n}, density={density}); "
        "density is probably too low"
    )


def load_topology(path) -> TopologyMatrix:
    data = json.loads(Path(path).read_text())
    return topology_from_dict(data)


def topology_from_dict(data: dict) -> TopologyMatrix:
    try:
        n = int(data["n"])
        rows = data["rows"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"topology JSON needs 'n' and 'rows': {exc}") from exc
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (n, n):
        raise MalformedInputError(f"declared n={n} but rows have shape {arr.shape}")
    return TopologyMatrix(arr)


def save_topology(W: TopologyMatrix, path) -> None:
    Path(path).write_text(W.to_json())


def benchmark_topology() -> TopologyMatrix:
    """The bundled 6-node benchmark topology."""
    text = resources.files("toposhield").joinpath("data/benchmark_w6.json").read_text()
    return topology_from_dict(json.loads(text))
