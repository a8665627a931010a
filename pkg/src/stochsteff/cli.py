"""``stochsteff`` command line."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .data import SyntheticSpec, generate_synthetic_ridge, write_trace_csv
from .deterministic import DivergenceError, reference_optimum
from .kaczmarz import LinearSystem, ssm_kaczmarz_equivalence
from .objective import ErmProblem, LossKind
from .prox import ProxSpec, composite_optimality_residual
from .rates import BBSign, RateKind
from .sampling import SplitMix64
from .stochastic import Algorithm, StochOptConfig, run
from .univariate import ScalarFn, estimate_order, steffensen_bb_solve, steffensen_solve


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--preset", choices=sorted(bench.PRESETS), help="problem preset")
    sp.add_argument("--seed", type=int, help="base seed")
    sp.add_argument("--outer-iters", type=int, help="outer iterations (default: fit the pass budget)")
    sp.add_argument("--passes", type=float, help="data-pass budget (default 30)")
    sp.add_argument("--data-dir", help=f"LIBSVM directory (or ${bench.DATA_DIR_ENV})")
    sp.add_argument("--n", type=int, help="synthetic sample size override")
    sp.add_argument("--d", type=int, help="synthetic dimension override")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochsteff", description="Stochastic Steffensen experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run an experiment from a config file or preset")
    sp.add_argument("config", nargs="?", help="INI experiment file")
    _common(sp)
    sp.add_argument("--reps", type=int, help="repetitions (default 10)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--workers", type=int, help="parallel worker processes")

    sp = sub.add_parser("grid", help="grid-search a fixed learning rate")
    _common(sp)
    sp.add_argument("--algorithm", default="SVRG", help="SGD or SVRG (default SVRG)")
    sp.add_argument("--grid", default="1e-4,3e-4,1e-3,3e-3,1e-2,3e-2,1e-1,3e-1,1",
                    help="comma-separated rates")

    sp = sub.add_parser("kaczmarz-check", help="compare Kaczmarz with single-sample Steffensen")
    sp.add_argument("--rows", type=int, default=50)
    sp.add_argument("--cols", type=int, default=20)
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("order", help="estimate univariate convergence orders")
    sp.add_argument("--x0", type=float, default=0.5)
    sp.add_argument("--x1", type=float, default=0.4)

    sp = sub.add_parser("prox-run", help="prox-SSBB on l1-regularized ridge")
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--d", type=int, default=50)
    sp.add_argument("--lam", type=float, default=1e-3)
    sp.add_argument("--l1", type=float, default=1e-3)
    sp.add_argument("--b", type=int, default=4)
    sp.add_argument("--outer-iters", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write the trace CSV here")
    return ap


def _cmd_run(args) -> int:
    overrides = dict(base_seed=args.seed, repetitions=args.reps, outer_iters=args.outer_iters,
                     passes=args.passes, output_dir=args.out, data_dir=args.data_dir, workers=args.workers,
                     n=args.n, d=args.d)
    if args.preset:
        overrides["problem"] = args.preset
    if args.config:
        cfg = bench.load_config(args.config, **overrides)
    else:
        cfg = bench.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    summary = bench.run_experiment(cfg)
    ref = summary.f_star
    print(f"n={summary.n} d={summary.d} f*={ref.f_star:.17g} certified={ref.certified}")
    print(summary.table())
    print(f"outputs in {summary.output_dir}")
    return 0


def _cmd_grid(args) -> int:
    cfg = bench.ExperimentConfig(problem=args.preset or "SyntheticRidge", data_dir=args.data_dir,
                                 n=args.n, d=args.d)
    p = bench.load_problem(cfg)
    algo = Algorithm.parse(args.algorithm)
    grid = [float(t) for t in args.grid.split(",") if t.strip()]
    template = StochOptConfig(algo, m=cfg.m_for(p.n), b=cfg.resolved()["b"], seed=args.seed or 0,
                              fixed_eta=grid[0])
    iters = args.outer_iters or bench.outer_iters_for(template, p.n, args.passes or bench.DEFAULT_PASSES)
    outcomes = bench.grid_search_outcomes(p, template, grid, iters)
    for eta, val in outcomes.items():
        print(f"eta={eta:<10g} " + ("diverged" if val is None else f"f={val:.17g}"))
    try:
        best = bench.grid_search_rate(p, template, grid, iters)
    except bench.AllDivergedError as exc:
        print(exc, file=sys.stderr)
        return 1
    print(f"best eta={best:g}")
    return 0


def _cmd_kaczmarz(args) -> int:
    rng = SplitMix64(args.seed)
    a = rng.standard_normal(args.rows * args.cols).reshape(args.rows, args.cols)
    x_true = rng.standard_normal(args.cols)
    system = LinearSystem.from_dense(a, a @ x_true)
    worst = 0.0
    for kind in (RateKind.STEFFENSEN, RateKind.STEFFENSEN_BB):
        for sign in BBSign:
            rep = ssm_kaczmarz_equivalence(system, np.zeros(args.cols), args.seed, args.iters, kind, sign)
            worst = max(worst, rep.max_rel_deviation)
            print(f"{kind.value:<4} {sign.value:<9} max_rel_deviation={rep.max_rel_deviation:.3e} "
                  f"max_eta_error={rep.max_eta_error:.3e} skipped={rep.skipped_steps}")
    return 0 if worst <= 1e-12 else 1


def _cmd_order(args) -> int:
    g = ScalarFn(lambda x: math.exp(x) - x, lambda x: math.exp(x) - 1.0)
    s = steffensen_solve(g, args.x0, alpha=1.0)
    bb = steffensen_bb_solve(g, args.x0, args.x1)
    print(f"f(x) = exp(x) - x, x* = 0")
    print(f"Steffensen     order estimate {estimate_order(s, 0.0):.4f}  ({len(s.iterates) - 1} steps)")
    print(f"Steffensen-BB  order estimate {estimate_order(bb, 0.0):.4f}  ({len(bb.iterates) - 1} steps)")
    print(f"reference: 2 and 1+sqrt(2) = {1 + math.sqrt(2):.4f}")
    return 0


def _cmd_prox(args) -> int:
    data, _ = generate_synthetic_ridge(SyntheticSpec(args.n, args.d, args.seed))
    p = ErmProblem(data, LossKind.SQUARED, args.lam).with_constants()
    spec = ProxSpec.lasso(args.l1)
    cfg = StochOptConfig(Algorithm.PROX_SSBB, m=2 * p.n, b=args.b, outer_iters=args.outer_iters,
                         seed=args.seed, prox=spec)
    try:
        tr = run(p, cfg, np.zeros(p.d))
    except DivergenceError as exc:
        print(exc, file=sys.stderr)
        return 1
    print(f"final F = {tr.f_values[-1]:.17g} after {len(tr) - 1} outer iterations")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_trace_csv(tr, fh)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"run": _cmd_run, "grid": _cmd_grid, "kaczmarz-check": _cmd_kaczmarz,
                "order": _cmd_order, "prox-run": _cmd_prox}
    try:
        return handlers[args.command](args)
    except bench.DatasetMissingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
