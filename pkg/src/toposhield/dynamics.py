"""Nominal and feedback-augmented consensus iterations.

Iterates are produced literally, one matrix-vector product per step, because
they are exactly what an outside observer records.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedInputError
from .spectral_graph import as_matrix, spectral_profile


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x_0 .. x_T`` stacked row-wise, shape ``(T + 1, n)``."""

    states: np.ndarray

    def __post_init__(self):
        arr = np.array(self.states, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise MalformedInputError("trajectory states must be a (T+1, n) array")
        if np.isnan(arr).any():
            raise MalformedInputError("trajectory contains NaN")
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1


@dataclass(frozen=True, eq=False)
class SnapshotPair:
    X_a: np.ndarray
    X_b: np.ndarray

    @property
    def n(self) -> int:
        return self.X_a.shape[0]

    @property
    def T(self) -> int:
        return self.X_a.shape[1]


def simulate(W_eff, x0, T: int) -> Trajectory:
    A = as_matrix(W_eff, "W_eff")
    x = np.asarray(x0, dtype=float)
    if x.shape != (A.shape[0],):
        raise MalformedInputError(f"x0 has shape {x.shape}, expected ({A.shape[0]},)")
    if T < 1:
        raise MalformedInputError("T must be at least 1")
    states = np.empty((T + 1, x.size))
    states[0] = x
    for t in range(T):
        states[t + 1] = A @ states[t]
    return Trajectory(states)


def consensus_point(W, x0):
    """Return ``(value, vector)`` with value ``w'x0`` for the left Perron vector w."""
    w = spectral_profile(W).left_perron
    x = np.asarray(x0, dtype=float)
    if x.shape != w.shape:
        raise MalformedInputError(f"x0 has shape {x.shape}, expected {w.shape}")
    value = float(w @ x)
    return value, np.full(x.size, value)


def snapshot_split(traj: Trajectory) -> SnapshotPair:
    cols = traj.states.T
    return SnapshotPair(X_a=cols[:, :-1].copy(), X_b=cols[:, 1:].copy())


def state_error_series(traj: Trajectory, x_star) -> np.ndarray:
    target = np.asarray(x_star, dtype=float)
    if target.shape != (traj.n,):
        raise MalformedInputError("x_star length does not match the trajectory")
    return np.linalg.norm(traj.states - target, axis=1)


def default_x0(n: int, seed: int) -> np.ndarray:
    """Uniform draw on [0, 1]^n, redrawn while it is numerically consensual."""
    rng = np.random.default_rng(seed)
    while True:
        x = rng.uniform(0.0, 1.0, size=n)
        if np.linalg.norm(x - x.mean()) >= 1e-6:
            return x


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{i + 1}" for i in range(traj.n)])
    for t, x in enumerate(traj.states):
        writer.writerow([t] + [repr(float(v)) for v in x])
    return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedInputError("empty trajectory file") from None
    if not header or header[0] != "t":
        raise MalformedInputError("trajectory CSV header must start with 't'")
    n = len(header) - 1
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n + 1:
            raise MalformedInputError(f"line {line_no}: expected {n + 1} fields")
        rows.append([float(v) for v in row[1:]])
    if not rows:
        raise MalformedInputError("trajectory CSV has no states")
    return Trajectory(np.array(rows))


def save_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_to_csv(traj))


def load_trajectory(path) -> Trajectory:
    return trajectory_from_csv(Path(path).read_text())
