"""Full-gradient Steffensen-type loops and the reference optimum solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .linalg import as_vector
from .objective import ErmProblem, LossKind
from .rates import (
    BBSign,
    DegenerateCurvatureError,
    DegenerateDenominatorError,
    RateContext,
    RateKind,
    ZeroGradientError,
    bb_step_size,
    learning_rate,
)

DIVERGENCE_NORM = 1e12
FALLBACK_ETA = 1e-3


class DivergenceError(RuntimeError):
    """Iterates blew up; ``trace`` holds everything up to the failure."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DetOptConfig:
    rate_kind: Optional[RateKind] = None
    fixed_eta: Optional[float] = None
    grad_tol: float = 1e-10
    max_iter: int = 1000
    bb_sign: BBSign = BBSign.NEGATIVE

    def __post_init__(self):
        if (self.rate_kind is None) == (self.fixed_eta is None):
            raise ValueError("give exactly one of rate_kind and fixed_eta")
        if self.fixed_eta is not None and not self.fixed_eta > 0:
            raise ValueError("fixed_eta must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")


@dataclass
class DetTrace:
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    etas: list = field(default_factory=list)  # eta used to leave points[k]; nan for the last
    converged: bool = False

    def append(self, x, fx, gnorm, keep_points=True):
        if not keep_points:
            self.points.clear()
        self.points.append(x)
        self.values.append(fx)
        self.grad_norms.append(gnorm)
        self.etas.append(math.nan)


def fallback_eta(p: ErmProblem) -> float:
    return 1.0 / p.L if p.L else FALLBACK_ETA


def minimize(p: ErmProblem, cfg: DetOptConfig, x0, keep_points: bool = True) -> DetTrace:
    """Iterate ``x <- x - eta_k grad f(x)`` until ``||grad f|| <= grad_tol``.

    With ``keep_points=False`` only the latest iterate is retained in
    ``trace.points``.
    """
    x = as_vector(x0).copy()
    if x.shape[0] != p.d:
        raise ValueError(f"x0 has dimension {x.shape[0]}, problem has {p.d}")
    trace = DetTrace()
    g = p.full_grad(x)
    trace.append(x, p.value(x), float(np.linalg.norm(g)))
    x_prev = g_prev = None
    beta = cfg.bb_sign.initial_beta
    eta = None
    for _ in range(cfg.max_iter):
        if trace.grad_norms[-1] <= cfg.grad_tol:
            trace.converged = True
            return trace
        if cfg.fixed_eta is not None:
            eta = cfg.fixed_eta
        else:
            if cfg.rate_kind.uses_beta and x_prev is not None:
                try:
                    beta = bb_step_size(RateContext(x, g, x_prev, g_prev), cfg.bb_sign)
                except DegenerateCurvatureError:
                    pass
            try:
                eta, _ = learning_rate(cfg.rate_kind, RateContext(x, g), p.full_grad, beta)
            except ZeroGradientError:
                trace.converged = True
                return trace
            except DegenerateDenominatorError:
                eta = eta if eta is not None else fallback_eta(p)
        trace.etas[-1] = eta
        x_prev, g_prev = x, g
        x = x - eta * g
        fx = p.value(x) if np.all(np.isfinite(x)) else math.nan
        if not math.isfinite(fx) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(f"diverged after {len(trace.points)} iterations", trace)
        g = p.full_grad(x)
        trace.append(x, fx, float(np.linalg.norm(g)), keep_points)
    trace.converged = trace.grad_norms[-1] <= cfg.grad_tol
    return trace


class ReferenceOptimum(NamedTuple):
    x_star: np.ndarray
    f_star: float
    certified: bool
    gap_bound: float  # f_star - f* <= gap_bound when certified and mu known
    grad_norm: float


def _conjugate_gradient(matvec, rhs, tol, max_iter):
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = float(r @ r)
    target = (tol * np.linalg.norm(rhs)) ** 2
    for _ in range(max_iter):
        if rr <= target:
            return x, True
        ap = matvec(p)
        alpha = rr / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, rr <= target


def reference_optimum(p: ErmProblem, tol: float = 1e-12, max_iter: int = 100_000) -> ReferenceOptimum:
    """Minimizer estimate used as f* for suboptimality curves.

    Squared loss solves the normal equations by conjugate gradients; the
    other losses run full-gradient Steffensen-BB, then plain gradient
    descent at 1/L if that stalls.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if p.loss is LossKind.SQUARED:
        rhs = p.data.rmatvec(p.data.labels) / p.n
        x, ok = _conjugate_gradient(p.hessian_matvec, rhs, tol, max_iter=max(max_iter, 10 * p.d))
        # iterative refinement
        for _ in range(3):
            res = rhs - p.hessian_matvec(x)
            dx, _ = _conjugate_gradient(p.hessian_matvec, res, tol, max_iter=10 * p.d)
            x = x + dx
        gnorm = float(np.linalg.norm(p.full_grad(x)))
        ok = ok or gnorm <= tol * max(1.0, np.linalg.norm(rhs))
    else:
        x = np.zeros(p.d)
        try:
            cfg = DetOptConfig(RateKind.STEFFENSEN_BB, grad_tol=tol, max_iter=max_iter)
            tr = minimize(p, cfg, x, keep_points=False)
            x, ok = tr.points[-1], tr.converged
        except DivergenceError:
            ok = False
        if not ok:
            L = p.L or p.component_lipschitz()
            tr = minimize(p, DetOptConfig(fixed_eta=1.0 / L, grad_tol=tol, max_iter=max_iter), x,
                          keep_points=False)
            x = tr.points[-1]
            ok = tr.converged
        gnorm = float(np.linalg.norm(p.full_grad(x)))
    gap = math.inf
    if ok and p.mu and p.L:
        gap = p.L * gnorm ** 2 / (2.0 * p.mu ** 2)
    return ReferenceOptimum(x, p.value(x), bool(ok), gap, gnorm)
