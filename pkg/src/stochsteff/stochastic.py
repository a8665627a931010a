"""Stochastic optimizers sharing one outer/inner loop engine.

Snapshot methods (SVRG, SVRG-BB, SSM, SSBB, prox-SSBB) compute a full
gradient at the outer iterate ``x_k``, run ``m`` inner steps along the
variance-reduced direction ``grad_S(x) - grad_S(x_k) + grad f(x_k)`` and
then move to an inner iterate. SGD and SGD-BB take ``m`` plain minibatch
steps per outer iteration.

Cost accounting, in component-gradient evaluations: a full gradient is
``n``, the Steffensen probe is another ``n``, an inner snapshot step is
``2b`` and an SGD step is ``b``.

RNG consumption per outer iteration (snapshot methods): the inner-iterate
index is drawn first (only when it is chosen at random), then one
minibatch per inner step.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .deterministic import DIVERGENCE_NORM, DivergenceError, fallback_eta
from .linalg import as_vector
from .objective import ErmProblem, Snapshot
from .prox import ProxSpec, prox_map
from .rates import (
    BBSign,
    CoefficientKind,
    DegenerateCurvatureError,
    DegenerateDenominatorError,
    RateContext,
    RateKind,
    ZeroGradientError,
    bb_step_size,
    learning_rate,
    stochastic_coefficient,
)
from .sampling import SamplerState, sample_index, sample_minibatch


class Algorithm(enum.Enum):
    SGD = "SGD"
    SGD_BB = "SGD-BB"
    SVRG = "SVRG"
    SVRG_BB = "SVRG-BB"
    SSM = "SSM"
    SSBB = "SSBB"
    PROX_SSBB = "prox-SSBB"

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        key = name.strip().upper().replace("_", "-")
        for a in cls:
            if a.value.upper() == key:
                return a
        raise ValueError(f"unknown algorithm {name!r}")

    @property
    def uses_snapshots(self) -> bool:
        return self not in (Algorithm.SGD, Algorithm.SGD_BB)

    @property
    def is_steffensen(self) -> bool:
        return self in (Algorithm.SSM, Algorithm.SSBB, Algorithm.PROX_SSBB)


class IterateChoice(enum.Enum):
    RANDOM = "random"  # x_{k+1} = x_{k,i}, i uniform in {0, ..., m-1}
    LAST = "last"      # x_{k+1} = x_{k,m}


# SGD-BB and SVRG-BB keep the last inner iterate, as in their original description.
_DEFAULT_CHOICE = {
    Algorithm.SGD_BB: IterateChoice.LAST,
    Algorithm.SVRG_BB: IterateChoice.LAST,
    Algorithm.SGD: IterateChoice.LAST,
}

# Default first-epoch rate of the BB baselines, as a fraction of 1/L.
BASELINE_ETA0_FRACTION = 0.1


def _baseline_eta0(p: ErmProblem, cfg: "StochOptConfig") -> float:
    return cfg.fixed_eta if cfg.fixed_eta is not None else BASELINE_ETA0_FRACTION * fallback_eta(p)


@dataclass(frozen=True)
class StochOptConfig:
    algorithm: Algorithm
    m: int
    b: int = 1
    outer_iters: int = 20
    seed: int = 0
    fixed_eta: Optional[float] = None
    prox: Optional[ProxSpec] = None
    quasi: bool = False
    bb_sign: BBSign = BBSign.NEGATIVE
    iterate: Optional[IterateChoice] = None
    sgd_bb_weight: Optional[float] = None

    def __post_init__(self):
        if self.m < 1 or self.b < 1:
            raise ValueError("m and b must be >= 1")
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be >= 0")
        if self.algorithm in (Algorithm.SGD, Algorithm.SVRG) and self.fixed_eta is None:
            raise ValueError(f"{self.algorithm.value} needs fixed_eta")
        if self.fixed_eta is not None and not self.fixed_eta > 0:
            raise ValueError("fixed_eta must be positive")
        if self.algorithm is Algorithm.PROX_SSBB and self.prox is None:
            raise ValueError("prox-SSBB needs a ProxSpec")
        if self.prox is not None and self.algorithm is not Algorithm.PROX_SSBB:
            raise ValueError("only prox-SSBB takes a ProxSpec")

    @property
    def iterate_choice(self) -> IterateChoice:
        if self.algorithm is Algorithm.SGD:
            return IterateChoice.LAST
        return self.iterate or _DEFAULT_CHOICE.get(self.algorithm, IterateChoice.RANDOM)

    @property
    def rate_kind(self) -> Optional[RateKind]:
        if self.algorithm is Algorithm.SSM:
            return RateKind.QUASI_STEFFENSEN if self.quasi else RateKind.STEFFENSEN
        if self.algorithm in (Algorithm.SSBB, Algorithm.PROX_SSBB):
            return RateKind.QUASI_STEFFENSEN_BB if self.quasi else RateKind.STEFFENSEN_BB
        return None

    def evals_per_outer(self, n: int) -> int:
        if self.algorithm.is_steffensen:
            return 2 * n + 2 * self.b * self.m
        if self.algorithm.uses_snapshots:
            return n + 2 * self.b * self.m
        return self.b * self.m

    def with_(self, **changes) -> "StochOptConfig":
        return replace(self, **changes)


@dataclass
class StochTrace:
    """One row per outer iterate; row 0 is the starting point.

    ``etas[k]`` is the learning rate used to get from ``x_{k-1}`` to ``x_k``
    (nan for row 0).
    """

    n: int
    algorithm: str = ""
    seed: int = 0
    f_values: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    grad_evals: list = field(default_factory=list)
    wall_seconds: list = field(default_factory=list)
    fallbacks: list = field(default_factory=list)  # (outer iteration, reason)
    stopped_early: bool = False
    x_final: Optional[np.ndarray] = None  # last recorded iterate

    def record(self, fx: float, eta: float, evals: int, wall: float) -> None:
        self.f_values.append(fx)
        self.etas.append(eta)
        self.grad_evals.append(evals)
        self.wall_seconds.append(wall)

    def __len__(self):
        return len(self.f_values)

    @property
    def passes(self) -> np.ndarray:
        return np.asarray(self.grad_evals, dtype=np.float64) / self.n

    def suboptimality(self, f_star: float) -> np.ndarray:
        return np.asarray(self.f_values) - f_star

    def value_at_passes(self, passes: float) -> float:
        """f at the last outer iterate reached within ``passes`` data passes."""
        ok = np.flatnonzero(self.passes <= passes + 1e-12)
        return float(self.f_values[ok[-1]])


class _Clock:
    def __init__(self):
        self.total = 0.0
        self._t = None

    def start(self):
        self._t = time.perf_counter()

    def stop(self) -> float:
        self.total += time.perf_counter() - self._t
        return self.total


def _diverged(x: np.ndarray, fx: float) -> bool:
    return not math.isfinite(fx) or not np.isfinite(x).all() or float(np.linalg.norm(x)) > DIVERGENCE_NORM


def run(p: ErmProblem, cfg: StochOptConfig, x0) -> StochTrace:
    if cfg.b > p.n:
        raise ValueError(f"minibatch size {cfg.b} exceeds n={p.n}")
    x = as_vector(x0).astype(np.float64, copy=True)
    if x.shape[0] != p.d:
        raise ValueError(f"x0 has dimension {x.shape[0]}, problem has {p.d}")
    trace = StochTrace(n=p.n, algorithm=cfg.algorithm.value, seed=cfg.seed)
    if cfg.prox is not None:
        spec = cfg.prox
        objective = lambda z: p.value(z) + spec.value(z)  # noqa: E731
    else:
        objective = p.value
    trace.record(objective(x), math.nan, 0, 0.0)
    trace.x_final = x
    sampler = SamplerState(cfg.seed)
    # divergence is detected from the iterates, not from floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        if cfg.algorithm.uses_snapshots:
            _run_snapshot(p, cfg, x, sampler, trace, objective)
        else:
            _run_sgd(p, cfg, x, sampler, trace, objective)
    return trace


def _steffensen_eta(p, cfg, k, x, g, hist, state, trace):
    """Outer-iteration learning rate for SSM / SSBB / prox-SSBB.

    ``state`` carries beta and the previous eta across iterations.
    Returns (eta, extra_evals) or raises ZeroGradientError.
    """
    kind = cfg.rate_kind
    if kind.uses_beta and hist is not None:
        try:
            state["beta"] = bb_step_size(RateContext(x, g, *hist), cfg.bb_sign)
        except DegenerateCurvatureError:
            trace.fallbacks.append((k, "bb_curvature"))
    coef_kind = CoefficientKind.SSM if cfg.algorithm is Algorithm.SSM else CoefficientKind.SSBB
    coef = stochastic_coefficient(coef_kind, cfg.m, cfg.b)
    try:
        core, _ = learning_rate(kind, RateContext(x, g), p.full_grad, state["beta"])
        eta = coef * core
    except DegenerateDenominatorError:
        trace.fallbacks.append((k, "rate_denominator"))
        eta = state["eta"] if state["eta"] is not None else coef * fallback_eta(p)
    state["eta"] = eta
    return eta, p.n


def _run_snapshot(p, cfg, x, sampler, trace, objective):
    n, m, b = p.n, cfg.m, cfg.b
    algo = cfg.algorithm
    choose_random = cfg.iterate_choice is IterateChoice.RANDOM
    spec = cfg.prox
    clock = _Clock()
    evals = 0
    hist = None  # (x_prev, g_prev)
    state = {"beta": cfg.bb_sign.initial_beta, "eta": None}
    eta = None
    for k in range(cfg.outer_iters):
        clock.start()
        g = p.full_grad(x)
        evals += n
        try:
            if algo.is_steffensen:
                eta, extra = _steffensen_eta(p, cfg, k, x, g, hist, state, trace)
                evals += extra
            elif float(g @ g) == 0.0:
                raise ZeroGradientError("zero gradient")
            elif algo is Algorithm.SVRG:
                eta = cfg.fixed_eta
            elif hist is None:
                eta = _baseline_eta0(p, cfg)
            else:
                try:
                    eta = bb_step_size(RateContext(x, g, *hist), BBSign.POSITIVE) / m
                except DegenerateCurvatureError:
                    trace.fallbacks.append((k, "bb_curvature"))
        except ZeroGradientError:
            clock.stop()
            trace.stopped_early = True
            return
        snap = Snapshot(x, g)
        pick = sample_index(sampler, m) if choose_random else m
        chosen = x
        xt = x
        for t in range(m):
            batch = sample_minibatch(sampler, n, b)
            v = p._vr_grad(batch, xt, snap)
            xt = xt - eta * v
            if spec is not None:
                xt = prox_map(spec, eta, xt)
            if t + 1 == pick:
                chosen = xt
        evals += 2 * b * m
        hist = (x, g)
        x = chosen if choose_random else xt
        wall = clock.stop()
        fx = objective(x)
        trace.record(fx, eta, evals, wall)
        trace.x_final = x
        if _diverged(x, fx):
            raise DivergenceError(f"{algo.value} diverged at outer iteration {k + 1}", trace)


def _run_sgd(p, cfg, x, sampler, trace, objective):
    n, m, b = p.n, cfg.m, cfg.b
    bb = cfg.algorithm is Algorithm.SGD_BB
    weight = cfg.sgd_bb_weight if cfg.sgd_bb_weight is not None else min(1.0, 10.0 / m)
    eta = _baseline_eta0(p, cfg)
    clock = _Clock()
    evals = 0
    x_hist = [x]
    ghat_hist = []
    for k in range(cfg.outer_iters):
        clock.start()
        if bb and k >= 2:
            s = x_hist[-1] - x_hist[-2]
            y = ghat_hist[-1] - ghat_hist[-2]
            sy = abs(float(s @ y))
            ss = float(s @ s)
            if ss > 0 and sy >= 1e-300 * ss:
                eta = ss / sy / m
            else:
                trace.fallbacks.append((k, "bb_curvature"))
        ghat = np.zeros(p.d)
        for _ in range(m):
            batch = sample_minibatch(sampler, n, b)
            gs = p._minibatch_grad(batch, x)
            if bb:
                ghat = weight * gs + (1.0 - weight) * ghat
            x = x - eta * gs
        evals += b * m
        if bb:
            x_hist = [x_hist[-1], x]
            ghat_hist = (ghat_hist + [ghat])[-2:]
        wall = clock.stop()
        fx = objective(x)
        trace.record(fx, eta, evals, wall)
        trace.x_final = x
        if _diverged(x, fx):
            raise DivergenceError(f"{cfg.algorithm.value} diverged at outer iteration {k + 1}", trace)


def run_single_sample(p: ErmProblem, x0, indices: Iterable[int],
                      kind: RateKind = RateKind.STEFFENSEN,
                      bb_sign: BBSign = BBSign.NEGATIVE) -> tuple[list, list]:
    """Plain stochastic Steffensen: one sampled component per step.

    Step k uses only ``f_i`` with ``i = indices[k]``: both the gradient and
    the learning rate (probe, and for the BB rules the secant pair
    ``grad f_i(x_k) - grad f_i(x_{k-1})``) come from that component. There
    is no control variate. Returns ``(iterates, etas)``; ``etas[k]`` is
    nan when the sampled component was already stationary (zero gradient
    or a vanishing rate denominator), in which case x is left unchanged.
    """
    x = as_vector(x0).astype(np.float64, copy=True)
    iterates = [x]
    etas = []
    x_prev = None
    beta = bb_sign.initial_beta
    for i in indices:
        g = p.component_grad(i, x)
        if kind.uses_beta and x_prev is not None:
            try:
                ctx = RateContext(x, g, x_prev, p.component_grad(i, x_prev))
                beta = bb_step_size(ctx, bb_sign)
            except DegenerateCurvatureError:
                pass
        try:
            eta, _ = learning_rate(kind, RateContext(x, g), lambda z, i=i: p.component_grad(i, z), beta)
        except (ZeroGradientError, DegenerateDenominatorError):
            # f_i is stationary at x up to rounding
            etas.append(math.nan)
            iterates.append(x)
            continue
        x_prev = x
        x = x - eta * g
        etas.append(eta)
        iterates.append(x)
    return iterates, etas
