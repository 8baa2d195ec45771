"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 generation failure,
3 insufficient data, 4 assumption violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .adversary import RANK_TOL, ols_estimate
from .dynamics import default_x0, load_trajectory, simulate, snapshot_split, trajectory_to_csv
from .errors import (
    AssumptionViolation,
    GenerationFailure,
    InsufficientDataError,
    ToposhieldError,
)
from .experiment import DEFAULT_ALPHAS, METHODS, ExperimentConfig, cmd_sweep, env_seed
from .metrics import EPS0, inference_deviation, inference_deviation_frobenius, jaccard_support
from .shield import synth_laplacian, synth_rank1, synth_sparse_kernel
from .spectral_graph import benchmark_topology, load_topology, random_topology, save_topology

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_DATA, EXIT_ASSUMPTION = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _topology(arg):
    return benchmark_topology() if arg in (None, "benchmark") else load_topology(arg)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_generate(args) -> int:
    W = random_topology(args.n, args.density, args.seed)
    if args.out:
        save_topology(W, args.out)
    else:
        sys.stdout.write(W.to_json())
    return EXIT_OK


def cmd_synthesize(args) -> int:
    W = _topology(args.topology)
    if args.method == "laplacian":
        fb = synth_laplacian(W, args.alpha)
    elif args.method == "sparse_kernel":
        fb = synth_sparse_kernel(W, args.combine, args.seed, args.safety, args.strict_support)
    else:
        fb = synth_rank1(W, default_x0(W.n, args.x0_seed))
    _emit(_dump(fb.to_dict()), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    W = _topology(args.topology)
    W_eff = W.entries
    if args.feedback:
        W_eff = W_eff + np.asarray(json.loads(Path(args.feedback).read_text())["K"], dtype=float)
    traj = simulate(W_eff, default_x0(W.n, args.x0_seed), args.T)
    _emit(trajectory_to_csv(traj), args.out)
    return EXIT_OK


def cmd_attack(args) -> int:
    traj = load_trajectory(args.trajectory)
    W = _topology(args.topology)
    result = ols_estimate(snapshot_split(traj), args.rank_tol)
    report = result.to_report()
    report["E2"] = inference_deviation(result.W_hat, W)
    report["E2_frobenius"] = inference_deviation_frobenius(result.W_hat, W)
    report["jaccard"] = jaccard_support(W, result.W_hat, args.eps0)
    _emit(_dump(report), args.out)
    return EXIT_OK


def _sweep(args) -> int:
    if args.random:
        n, density, seed = args.random
        source = ("random", int(n), float(density), int(seed))
    else:
        source = args.topology or "benchmark"
    cfg = ExperimentConfig(
        topology_source=source,
        x0_seed=args.x0_seed,
        T=args.T,
        alphas=tuple(args.alphas),
        eps0=args.eps0,
        method=args.method,
        rank_tol=args.rank_tol,
        output_dir=Path(args.output_dir),
        kernel_combine=args.combine,
        kernel_seed=args.seed,
        svg=args.svg,
        workers=args.workers,
    )
    result = cmd_sweep(cfg)
    failed = sum(1 for p in result.summary["points"] if not p["certificate"]["pass"])
    print(f"wrote {len(result.records)} sweep points to {args.output_dir} "
          f"({failed} failed certificates)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    seed = env_seed()
    p = _Parser(prog="toposhield", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="draw a random admissible topology")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--density", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=seed)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("synthesize", help="build a feedback gain K")
    s.add_argument("--topology", help="topology JSON (default: bundled benchmark)")
    s.add_argument("--method", choices=METHODS, default="laplacian")
    s.add_argument("--alpha", type=float, default=0.14)
    s.add_argument("--combine", choices=("random", "max_support"), default="random")
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--safety", type=float, default=0.9)
    s.add_argument("--strict-support", action="store_true")
    s.add_argument("--x0-seed", type=int, default=seed)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", help="simulate x_{t+1} = (W + K) x_t")
    m.add_argument("--topology")
    m.add_argument("--feedback", help="feedback JSON from 'synthesize'")
    m.add_argument("--T", type=int, default=50)
    m.add_argument("--x0-seed", type=int, default=seed)
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="least-squares topology inference from a trajectory")
    a.add_argument("--trajectory", required=True)
    a.add_argument("--topology")
    a.add_argument("--rank-tol", type=float, default=RANK_TOL)
    a.add_argument("--eps0", type=float, default=EPS0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_attack)

    w = sub.add_parser("sweep", help="gain sweep with certificates, attack and metrics")
    w.add_argument("--topology")
    w.add_argument("--random", nargs=3, metavar=("N", "DENSITY", "SEED"))
    w.add_argument("--x0-seed", type=int, default=seed)
    w.add_argument("--T", type=int, default=50)
    w.add_argument("--alphas", type=float, nargs="+", default=list(DEFAULT_ALPHAS))
    w.add_argument("--eps0", type=float, default=EPS0)
    w.add_argument("--method", choices=METHODS, default="laplacian")
    w.add_argument("--rank-tol", type=float, default=RANK_TOL)
    w.add_argument("--combine", choices=("random", "max_support"), default="random")
    w.add_argument("--seed", type=int, default=seed)
    w.add_argument("--output-dir", required=True)
    w.add_argument("--svg", action="store_true")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GenerationFailure as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ToposhieldError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
