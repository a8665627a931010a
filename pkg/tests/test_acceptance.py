"""One test per acceptance criterion; each prints a PASS/FAIL line before asserting."""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import frozen
from oracles import (dense_value, exact_vr_variance, exhaustive_subset_variance,
                     numerical_prox, ridge_hessian)
from stochsteff.bench import grid_search_rate, outer_iters_for
from stochsteff.cli import main as cli_main
from stochsteff.data import SyntheticSpec, generate_synthetic_ridge, parse_libsvm
from stochsteff.kaczmarz import LinearSystem, ssm_kaczmarz_equivalence
from stochsteff.linalg import DesignMatrix
from stochsteff.objective import ErmProblem, LossKind, minibatch_variance_identity_check
from stochsteff.prox import ProxSpec, composite_optimality_residual, prox_map
from stochsteff.rates import BBSign, RateKind
from stochsteff.sampling import SplitMix64
from stochsteff.stochastic import Algorithm, StochOptConfig, run
from stochsteff.univariate import ScalarFn, error_constant_check, estimate_order, steffensen_bb_solve, \
    steffensen_solve

pytestmark = pytest.mark.acceptance

EXP = ScalarFn(lambda x: math.exp(x) - x, lambda x: math.exp(x) - 1.0)
FIXTURE = Path(__file__).parent / "fixtures" / "tiny.libsvm"

DESK_N, DESK_D, DESK_LAM, DESK_B = 500, 50, 1e-4, 4
DESK_SEEDS = range(10)
PASS_BUDGET = 30.0
RATE_GRID = [10.0 ** (k / 2) for k in range(-8, 1)]  # 1e-4 .. 1 in half decades


@pytest.fixture(scope="module")
def desk():
    """Scaled synthetic ridge with mu and L certified by a dense eigensolve."""
    data, _ = generate_synthetic_ridge(SyntheticSpec(DESK_N, DESK_D, seed=0))
    a = data.to_dense()
    ev = np.linalg.eigvalsh(ridge_hessian(a, DESK_LAM))
    p = ErmProblem(data, LossKind.SQUARED, DESK_LAM, mu=float(ev[0]), L=float(ev[-1]))
    x_star = np.linalg.solve(ridge_hessian(a, DESK_LAM), a.T @ data.labels / DESK_N)
    f_star = dense_value(a, data.labels, "squared", DESK_LAM, x_star)
    return p, f_star


def _ssbb(m, seed, iters, **kw):
    return StochOptConfig(Algorithm.SSBB, m=m, b=DESK_B, outer_iters=iters, seed=seed, **kw)


def test_criterion_01_convergence_orders(report):
    t0 = time.perf_counter()
    q_s = estimate_order(steffensen_solve(EXP, 0.5, alpha=1.0), frozen.EXP_X_STAR)
    q_bb = estimate_order(steffensen_bb_solve(EXP, 0.5, 0.4), frozen.EXP_X_STAR)
    elapsed = time.perf_counter() - t0
    lo, hi = frozen.STEFFENSEN_ORDER_BAND
    lo_bb, hi_bb = frozen.STEFFENSEN_BB_ORDER_BAND
    ok = lo <= q_s <= hi and lo_bb <= q_bb <= hi_bb and elapsed < 1.0
    report(1, ok, f"Steffensen q={q_s:.4f} in [{lo}, {hi}], BB q={q_bb:.4f} in [{lo_bb}, {hi_bb}], "
                  f"{elapsed * 1e3:.1f} ms")
    assert ok


def test_criterion_02_error_constant(report):
    t0 = time.perf_counter()
    x0 = 0.5
    ratio, predicted = error_constant_check(EXP, frozen.EXP_X_STAR, frozen.EXP_D2, frozen.EXP_D3, 1.0,
                                            steffensen_solve(EXP, x0, alpha=1.0))
    cubic, _ = error_constant_check(EXP, frozen.EXP_X_STAR, frozen.EXP_D2, frozen.EXP_D3, frozen.EXP_CUBIC_ALPHA,
                                    steffensen_solve(EXP, x0, alpha=frozen.EXP_CUBIC_ALPHA))
    elapsed = time.perf_counter() - t0
    ok = (predicted == frozen.EXP_PREDICTED_CONSTANT_ALPHA1 and abs(ratio - predicted) <= 0.25 * predicted
          and cubic * 10 <= ratio and elapsed < 1.0)
    report(2, ok, f"alpha=1 ratio={ratio:.5f} (predicted {predicted:g}), alpha=-1 ratio={cubic:.3e}, "
                  f"{elapsed * 1e3:.1f} ms")
    assert ok


def test_criterion_03_kaczmarz_equivalence(report):
    t0 = time.perf_counter()
    rng = SplitMix64(0)
    a = rng.standard_normal(50 * 20).reshape(50, 20)
    system = LinearSystem.from_dense(a, a @ rng.standard_normal(20))
    reps = [ssm_kaczmarz_equivalence(system, np.zeros(20), 0, 200, kind, sign)
            for kind in (RateKind.STEFFENSEN, RateKind.STEFFENSEN_BB) for sign in BBSign]
    elapsed = time.perf_counter() - t0
    dev = max(r.max_rel_deviation for r in reps)
    eta_err = max(r.max_eta_error for r in reps)
    skipped = max(r.skipped_steps for r in reps)
    ok = dev <= 1e-12 and eta_err <= 1e-12 and elapsed < 1.0
    report(3, ok, f"max deviation {dev:.2e}, max |eta*|a_i|^2-1| {eta_err:.2e} "
                  f"(up to {skipped} rounding-level steps skipped), {elapsed * 1e3:.0f} ms")
    assert ok


def test_criterion_04_minibatch_identity(report, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(1, 9):
        for b in range(1, n + 1):
            for _ in range(20):
                xi = rng.standard_normal((n, 3)) * rng.uniform(0.1, 10)
                lhs, rhs = minibatch_variance_identity_check(xi, b)
                brute = exhaustive_subset_variance(xi, b) if n > 1 else 0.0
                worst = max(worst, abs(lhs - rhs), abs(lhs - brute))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    report(4, ok, f"max |lhs-rhs| {worst:.2e} over n<=8, b<=n, 20 families, {elapsed:.2f} s")
    assert ok


def test_criterion_05_variance_bound(report, rng):
    t0 = time.perf_counter()
    n, d, lam = 6, 3, 0.5
    a = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    p = ErmProblem(DesignMatrix.from_dense(a, y), LossKind.SQUARED, lam)
    L = p.component_lipschitz()
    x_star = np.linalg.solve(ridge_hessian(a, lam), a.T @ y / n)
    f_star = dense_value(a, y, "squared", lam, x_star)
    worst = -math.inf
    for b in (1, 2, 3):
        for _ in range(50):
            x, xk = rng.standard_normal(d) * 2, rng.standard_normal(d) * 2
            var = exact_vr_variance(a, y, lam, x, xk, b)
            bound = 4 * L / b * (dense_value(a, y, "squared", lam, x) - f_star
                                 + dense_value(a, y, "squared", lam, xk) - f_star)
            worst = max(worst, var / bound)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 5.0
    report(5, ok, f"max variance/bound {worst:.3f} over 150 pairs, b in {{1,2,3}}, {elapsed:.2f} s")
    assert ok


def test_criterion_06_learning_rate_bounds(report, desk):
    p, _ = desk
    m, b = 2 * p.n, DESK_B
    ssm = run(p, StochOptConfig(Algorithm.SSM, m=m, b=b, outer_iters=20, seed=0), np.zeros(p.d))
    ssbb = {s: run(p, _ssbb(m, 0, 20, bb_sign=s), np.zeros(p.d)) for s in BBSign}
    slack = 1 + 1e-12

    def within(etas, lo, hi):
        return all(lo <= e * slack and e <= hi * slack for e in etas[1:])

    ss_ok = within(ssm.etas, 1 / (math.sqrt(m) * p.L), 1 / (math.sqrt(m) * p.mu))
    bb_ok = {s: within(tr.etas, b / (m * p.L), b / (m * p.mu)) for s, tr in ssbb.items()}
    ok = ss_ok and bb_ok[BBSign.POSITIVE] and len(ssm) == 21 and len(ssbb[BBSign.POSITIVE]) == 21
    report(6, ok, f"SSM in bounds: {ss_ok}; SSBB positive: {bb_ok[BBSign.POSITIVE]} "
                  f"(negative, logged only: {bb_ok[BBSign.NEGATIVE]}); kappa={p.L / p.mu:.2f}")
    assert ok


def test_criterion_07_linear_convergence(report, desk):
    p, f_star = desk
    t0 = time.perf_counter()
    m = 2 * p.n
    f0 = p.value(np.zeros(p.d)) - f_star
    traces = [run(p, _ssbb(m, s, 15), np.zeros(p.d)) for s in DESK_SEEDS]
    mean = np.mean([tr.suboptimality(f_star) for tr in traces], axis=0) / f0
    k = np.arange(2, 16)
    logs = np.log(np.maximum(mean[k], np.finfo(float).tiny))
    slope, icept = np.polyfit(k, logs, 1)
    r2 = 1 - np.sum((logs - (slope * k + icept)) ** 2) / np.sum((logs - logs.mean()) ** 2)
    at_budget = float(np.mean([tr.value_at_passes(PASS_BUDGET) - f_star for tr in traces])) / f0
    elapsed = time.perf_counter() - t0
    fit_ok = slope < 0 and r2 >= 0.9
    ok = fit_ok and at_budget <= 1e-8 and elapsed < 30.0
    report(7, ok, f"slope {slope:.3f}/outer iter, R^2={r2:.4f}; relative suboptimality at {PASS_BUDGET:g} passes "
                  f"{at_budget:.3e} (target 1e-8; {traces[0].passes[1]:g} passes per outer iter); "
                  f"{elapsed:.1f} s")
    assert ok


def test_criterion_08_relative_ordering(report, desk):
    p, f_star = desk
    m = 2 * p.n
    x0 = np.zeros(p.d)

    def mean_at_budget(cfg_for_seed):
        vals = []
        for s in DESK_SEEDS:
            cfg = cfg_for_seed(s)
            cfg = cfg.with_(outer_iters=outer_iters_for(cfg, p.n, PASS_BUDGET))
            vals.append(run(p, cfg, x0).value_at_passes(PASS_BUDGET) - f_star)
        return float(np.mean(vals))

    tuned = {}
    for algo in (Algorithm.SGD, Algorithm.SVRG):
        tpl = StochOptConfig(algo, m=m, b=DESK_B, seed=0, fixed_eta=RATE_GRID[0])
        tuned[algo] = grid_search_rate(p, tpl, RATE_GRID, outer_iters_for(tpl, p.n, PASS_BUDGET))
    ssbb = mean_at_budget(lambda s: _ssbb(m, s, 1))
    sgd = mean_at_budget(lambda s: StochOptConfig(Algorithm.SGD, m=m, b=DESK_B, seed=s,
                                                  fixed_eta=tuned[Algorithm.SGD]))
    svrg = mean_at_budget(lambda s: StochOptConfig(Algorithm.SVRG, m=m, b=DESK_B, seed=s,
                                                   fixed_eta=tuned[Algorithm.SVRG]))
    ok = ssbb <= sgd and ssbb <= svrg
    f0 = p.value(x0) - f_star
    report(8, ok, f"mean relative suboptimality at {PASS_BUDGET:g} passes: SSBB {ssbb / f0:.3e}, "
                  f"SGD {sgd / f0:.3e} (eta={tuned[Algorithm.SGD]:.3g}), "
                  f"SVRG {svrg / f0:.3e} (eta={tuned[Algorithm.SVRG]:.3g})")
    assert ok


def test_criterion_09_prox(report, rng):
    t0 = time.perf_counter()
    spec = ProxSpec.lasso(0.8)
    prox_err = 0.0
    for _ in range(50):
        v = rng.standard_normal(10) * 3
        eta = float(rng.uniform(0.05, 2.0))
        prox_err = max(prox_err, float(np.abs(prox_map(spec, eta, v) - numerical_prox(v, eta, spec.l1, 0.0)).max()))
    expansion = 0.0
    for _ in range(1000):
        u, v = rng.standard_normal(8) * 4, rng.standard_normal(8) * 4
        eta = float(rng.uniform(0.01, 3.0))
        expansion = max(expansion, np.linalg.norm(prox_map(spec, eta, u) - prox_map(spec, eta, v))
                        - np.linalg.norm(u - v))

    data, _ = generate_synthetic_ridge(SyntheticSpec(DESK_N, DESK_D, seed=0))
    p = ErmProblem(data, LossKind.SQUARED, 1e-3).with_constants()
    m = 2 * p.n
    plain = run(p, _ssbb(m, 3, 4), np.zeros(p.d))
    zero = run(p, StochOptConfig(Algorithm.PROX_SSBB, m=m, b=DESK_B, outer_iters=4, seed=3, prox=ProxSpec.zero()),
               np.zeros(p.d))
    identical = (plain.f_values == zero.f_values and plain.etas[1:] == zero.etas[1:]
                 and np.array_equal(plain.x_final, zero.x_final))

    l1 = ProxSpec.lasso(1e-3)
    tr = run(p, StochOptConfig(Algorithm.PROX_SSBB, m=m, b=DESK_B, outer_iters=30, seed=0, prox=l1), np.zeros(p.d))
    resid = composite_optimality_residual(p.full_grad(tr.x_final), tr.x_final, l1)
    elapsed = time.perf_counter() - t0
    ok = prox_err <= 1e-8 and expansion <= 1e-12 and identical and resid <= 1e-6 and elapsed < 30.0
    report(9, ok, f"prox vs argmin {prox_err:.1e}, max expansion {expansion:.1e}, R=0 bit-identical: {identical}, "
                  f"l1-ridge residual {resid:.2e} after {len(tr) - 1} outer iters, {elapsed:.1f} s")
    assert ok


def test_criterion_10_parser_and_accounting(report):
    m_ = parse_libsvm(FIXTURE)
    dense = np.zeros(frozen.TINY_LIBSVM_SHAPE)
    for i, j, v in frozen.TINY_LIBSVM_ENTRIES:
        dense[i, j] = v
    fixture_ok = (m_.n, m_.d) == frozen.TINY_LIBSVM_SHAPE and np.array_equal(m_.to_dense(), dense) \
        and tuple(m_.labels) == frozen.TINY_LIBSVM_LABELS

    real = []
    base = os.environ.get("STOCHSTEFF_DATA_DIR")
    for name, preset in (("w6a", "LogisticW6a"), ("a6a", "SquaredHingeA6a")):
        path = Path(base) / name if base else None
        if path is None or not path.is_file():
            real.append(f"{name} absent")
            continue
        n, d = frozen.PRESET_TABLE[preset][:2]
        got = parse_libsvm(path, n_features=d)
        real.append(f"{name} {(got.n, got.d)}")
        fixture_ok &= (got.n, got.d) == (n, d)

    data, _ = generate_synthetic_ridge(SyntheticSpec(40, 5, seed=1))
    p = ErmProblem(data, LossKind.SQUARED, 1e-3)
    n, b, m = p.n, 3, 25
    tr = run(p, StochOptConfig(Algorithm.SSBB, m=m, b=b, outer_iters=2, seed=0), np.zeros(p.d))
    count_ok = tr.grad_evals[-1] == 2 * (2 * n + 2 * b * m)
    ok = fixture_ok and count_ok
    report(10, ok, f"fixture exact: {fixture_ok}; {', '.join(real)}; "
                   f"2-iteration SSBB count {tr.grad_evals[-1]} == {2 * (2 * n + 2 * b * m)}")
    assert ok


def _csv_without_timing(path: Path) -> list:
    rows = [r.split(",") for r in path.read_text().splitlines()]
    keep = [i for i, h in enumerate(rows[0]) if h not in ("wall_seconds", "mean_wall_seconds")]
    return [[r[i] for i in keep] for r in rows]


@pytest.mark.slow
def test_criterion_11_determinism(report, tmp_path, capsys):
    t0 = time.perf_counter()
    outs = [tmp_path / "first", tmp_path / "second"]
    for out in outs:
        assert cli_main(["run", "--preset", "SyntheticRidge", "--seed", "7", "--reps", "2", "--out", str(out)]) == 0
    capsys.readouterr()
    files = sorted(f.relative_to(outs[0]) for f in (outs[0] / "runs").glob("*.csv"))
    same = bool(files) and all(_csv_without_timing(outs[0] / f) == _csv_without_timing(outs[1] / f) for f in files)
    same &= sorted(f.name for f in (outs[1] / "runs").glob("*.csv")) == [f.name for f in files]
    elapsed = time.perf_counter() - t0
    report(11, same, f"{len(files)} per-run CSVs identical across two SyntheticRidge preset runs "
                     f"(n=5000, d=100, seed 7, 2 repetitions), {elapsed:.1f} s")
    assert same
