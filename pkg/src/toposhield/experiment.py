"""Deterministic sweep orchestration behind the ``sweep`` command.

Each sweep point runs the whole pipeline: build a gain, certify it,
simulate, let the observer fit the data, then score the fit.  Points only
share immutable inputs, so they may run on a thread pool; results are
collected and written in grid order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .adversary import RANK_TOL, ols_estimate
from .dynamics import consensus_point, default_x0, simulate, snapshot_split, state_error_series
from .metrics import (
    EPS0,
    SweepRecord,
    bauer_fike_audit,
    inference_deviation,
    inference_deviation_frobenius,
    jaccard_support,
)
from .shield import (
    alpha_critical,
    build_constraint_system,
    combine_kernel,
    laplacian_gain,
    synth_rank1,
    synth_sparse_kernel,
    verify_preservation,
)
from .spectral_graph import (
    TopologyMatrix,
    benchmark_topology,
    load_topology,
    random_topology,
    require_assumption1,
    spectral_profile,
)

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.14, 0.28, 0.42, 0.56, 0.7)
METHODS = ("laplacian", "sparse_kernel", "rank1")
SWEEP_HEADER = ["alpha", "E2_spectral", "E2_frobenius", "jaccard", "mu2_modulus", "e1_final", "unique"]


def env_seed(default: int = 0) -> int:
    value = os.environ.get("TOPOSHIELD_SEED")
    return int(value) if value not in (None, "") else default


@dataclass
class ExperimentConfig:
    """Sweep settings.

    ``topology_source`` is ``"benchmark"`` (the bundled 6-node matrix), a
    path to a topology JSON file, or ``("random", n, density, seed)``.
    """

    topology_source: object = "benchmark"
    x0_seed: int = field(default_factory=env_seed)
    T: int = 50
    alphas: tuple = DEFAULT_ALPHAS
    eps0: float = EPS0
    method: str = "laplacian"
    rank_tol: float = RANK_TOL
    output_dir: Path | None = None
    kernel_combine: str = "random"
    kernel_seed: int = field(default_factory=env_seed)
    long_horizon: int = 500
    svg: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method != "rank1" and not self.alphas:
            raise ValueError("alphas must be nonempty")
        self.alphas = tuple(float(a) for a in self.alphas)

    def load_topology(self) -> TopologyMatrix:
        src = self.topology_source
        if isinstance(src, (tuple, list)) and src and src[0] == "random":
            _, n, density, seed = src
            return random_topology(int(n), float(density), int(seed))
        if src == "benchmark":
            return benchmark_topology()
        return load_topology(src)

    def describe_source(self):
        src = self.topology_source
        if isinstance(src, (tuple, list)):
            return list(src)
        return str(src)


@dataclass
class PointResult:
    record: SweepRecord
    e1_series: np.ndarray
    detail: dict


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: list
    e1_series: list
    summary: dict


def _run_point(W, x0, x_star, K, value, cfg: ExperimentConfig, extra=None) -> PointResult:
    Wm = W.entries
    W_eff = Wm + K
    cert = verify_preservation(W, K)
    traj = simulate(W_eff, x0, cfg.T)
    inf = ols_estimate(snapshot_split(traj), cfg.rank_tol) if cfg.T >= W.n else None
    e1 = state_error_series(traj, x_star)
    long_e1 = None
    if cert.pass_:
        long_e1 = float(state_error_series(simulate(W_eff, x0, cfg.long_horizon), x_star)[-1])
    if inf is not None:
        E2 = inference_deviation(inf.W_hat, Wm)
        E2f = inference_deviation_frobenius(inf.W_hat, Wm)
        unique, rank = inf.unique, inf.rank_Xa
    else:
        E2 = E2f = float("nan")
        unique, rank = False, None
    record = SweepRecord(
        alpha_or_eps=value,
        E2=E2,
        E2_frobenius=E2f,
        jaccard=jaccard_support(Wm, W_eff, cfg.eps0),
        mu2_modulus=cert.mu2_modulus,
        e1_final=float(e1[-1]),
        unique=unique,
    )
    audit = bauer_fike_audit(W, K)
    detail = {
        "value": value,
        "certificate": cert.to_dict(),
        "certificate_explanation": cert.explain(),
        "rank_Xa": rank,
        "unique": unique,
        "K_spectral_norm": float(np.linalg.norm(K, 2)),
        "e1_long": long_e1,
        "bauer_fike": audit.to_dict(),
    }
    if not cert.pass_:
        detail["flag"] = "certificate_failed"
    if extra:
        detail.update(extra)
    return PointResult(record, e1, detail)


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    W = cfg.load_topology()
    require_assumption1(W)
    prof = spectral_profile(W)
    a_crit = alpha_critical(W)
    system = build_constraint_system(W)
    x0 = default_x0(W.n, cfg.x0_seed)
    value, x_star = consensus_point(W, x0)
    warnings_ = []

    static = {}
    if cfg.method == "laplacian":
        jobs = []
        for a in cfg.alphas:
            if a >= a_crit:
                msg = f"alpha={a} >= critical gain {a_crit:.6f}; preservation is not guaranteed"
                log.warning(msg)
                warnings_.append(msg)
            jobs.append((laplacian_gain(W, a), a, {"gain": "laplacian"}))
    elif cfg.method == "sparse_kernel":
        K0 = combine_kernel(system, cfg.kernel_combine, cfg.kernel_seed)
        K0 = K0 / np.linalg.norm(K0, 2)
        recommended = synth_sparse_kernel(W, cfg.kernel_combine, cfg.kernel_seed)
        static["epsilon_recommended"] = recommended.params["epsilon"]
        jobs = [(a * K0, a, {"gain": "sparse_kernel"}) for a in cfg.alphas]
    else:
        fb = synth_rank1(W, x0)
        beta = fb.params["beta"]
        static["beta"] = beta
        static["sparsity_violations"] = len(fb.sparsity_violations)
        jobs = [(fb.K, beta, {"gain": "rank1", "beta": beta})]

    def work(job):
        K, val, extra = job
        return _run_point(W, x0, x_star, K, val, cfg, extra)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            points = list(pool.map(work, jobs))
    else:
        points = [work(j) for j in jobs]

    summary = {
        "method": cfg.method,
        "topology_source": cfg.describe_source(),
        "n": W.n,
        "T": cfg.T,
        "eps0": cfg.eps0,
        "rank_tol": cfg.rank_tol,
        "x0_seed": cfg.x0_seed,
        "x0": x0.tolist(),
        "consensus_value": value,
        "r_max": prof.r_max,
        "alpha_critical": a_crit,
        "kappa_V": prof.kappa_V,
        "diagonalizable": prof.diagonalizable,
        "constraint_system": {
            "z": system.z,
            "rank_M": system.rank,
            "kernel_dimension": system.kernel_dimension,
        },
        "long_horizon": cfg.long_horizon,
        "warnings": warnings_,
        "points": [p.detail for p in points],
    }
    summary.update(static)
    return SweepResult(cfg, [p.record for p in points], [p.e1_series for p in points], summary)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return repr(float(v))


def sweep_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for rec in records:
        writer.writerow([_fmt(v) for v in rec.as_row()])
    return buf.getvalue()


def e1_csv(series) -> str:
    lines = ["t,E1"] + [f"{t},{_fmt(v)}" for t, v in enumerate(series)]
    return "\n".join(lines) + "\n"


def write_sweep(result: SweepResult, output_dir) -> list:
    """Write all sweep artefacts and return the written paths in order."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    put("sweep.csv", sweep_csv(result.records))
    for k, (rec, series) in enumerate(zip(result.records, result.e1_series)):
        put(f"e1_{k:02d}_alpha_{rec.alpha_or_eps:g}.csv", e1_csv(series))
    put("summary.json", json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    if result.config.svg:
        e1 = {f"alpha={r.alpha_or_eps:g}": (range(len(s)), s)
              for r, s in zip(result.records, result.e1_series)}
        put("e1.svg", svg.line_chart(e1, "State error E1(t)", "t", "E1", logy=True))
        xs = [r.alpha_or_eps for r in result.records]
        put("inference.svg", svg.line_chart(
            {"E2 (spectral)": (xs, [r.E2 for r in result.records]),
             "Jaccard": (xs, [r.jaccard for r in result.records])},
            "Inference deviation and support similarity", "alpha", "value"))
    return written


def cmd_sweep(cfg: ExperimentConfig) -> SweepResult:
    result = run_sweep(cfg)
    if cfg.output_dir is not None:
        write_sweep(result, cfg.output_dir)
    return result
