"""Univariate Steffensen iterations and empirical convergence orders.

All functions minimize a scalar ``f`` through its derivative ``df``; the
second derivative is never evaluated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

DENOM_FLOOR = 1e-300
ORDER_WINDOW = (1e-14, 1e-1)
MIN_ADMISSIBLE = 3


class StopReason(enum.Enum):
    GRAD_TOLERANCE = "grad_tolerance"
    MAX_ITER = "max_iter"
    DENOMINATOR_UNDERFLOW = "denominator_underflow"


class InsufficientDataError(ValueError):
    """Too few iterates fall inside the asymptotic error window."""


@dataclass(frozen=True)
class ScalarFn:
    f: Callable[[float], float]
    df: Callable[[float], float]


@dataclass
class UnivariateTrace:
    iterates: list = field(default_factory=list)  # (x_k, df(x_k)) pairs
    converged: bool = False
    reason: StopReason = StopReason.MAX_ITER

    @property
    def points(self) -> list:
        return [x for x, _ in self.iterates]


def _step(df_x: float, df_probe: float, x: float, alpha: float):
    """Return (x_next, underflow) for one Steffensen update."""
    if df_x == 0.0:
        return x, False
    denom = df_probe - df_x
    if abs(denom) < DENOM_FLOOR:
        return x, True
    return x - alpha * df_x * df_x / denom, False


def steffensen_step(g: ScalarFn, x: float, alpha: float) -> float:
    """``x - alpha f'(x)^2 / (f'(x + alpha f'(x)) - f'(x))``.

    Returns ``x`` unchanged when ``f'(x) == 0`` or the denominator
    underflows; use :func:`steffensen_solve` to see which happened.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    d = g.df(x)
    if d == 0.0:
        return x
    return _step(d, g.df(x + alpha * d), x, alpha)[0]


def steffensen_solve(g: ScalarFn, x0: float, alpha: float = 1.0, grad_tol: float = 1e-12,
                     max_iter: int = 100) -> UnivariateTrace:
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    if grad_tol <= 0:
        raise ValueError("grad_tol must be positive")
    x = float(x0)
    d = g.df(x)
    trace = UnivariateTrace([(x, d)])
    for _ in range(max_iter):
        if abs(d) <= grad_tol:
            trace.converged, trace.reason = True, StopReason.GRAD_TOLERANCE
            return trace
        x, underflow = _step(d, g.df(x + alpha * d), x, alpha)
        if underflow:
            trace.reason = StopReason.DENOMINATOR_UNDERFLOW
            return trace
        d = g.df(x)
        trace.iterates.append((x, d))
    if abs(d) <= grad_tol:
        trace.converged, trace.reason = True, StopReason.GRAD_TOLERANCE
    return trace


def steffensen_bb_solve(g: ScalarFn, x0: float, x1: float, grad_tol: float = 1e-13,
                        max_iter: int = 100) -> UnivariateTrace:
    """Steffensen iteration with the Barzilai-Borwein parameter.

    ``beta_k = -(x_k - x_{k-1}) / (f'(x_k) - f'(x_{k-1}))`` replaces alpha.
    If consecutive derivatives coincide the previous beta is reused; if
    that happens on the very first step there is nothing to reuse and the
    trace stops with ``DENOMINATOR_UNDERFLOW``.
    """
    if x0 == x1:
        raise ValueError("x0 and x1 must differ")
    if grad_tol <= 0:
        raise ValueError("grad_tol must be positive")
    x_prev, x = float(x0), float(x1)
    d_prev, d = g.df(x_prev), g.df(x)
    trace = UnivariateTrace([(x_prev, d_prev)])
    if abs(d_prev) <= grad_tol:
        trace.converged, trace.reason = True, StopReason.GRAD_TOLERANCE
        return trace
    trace.iterates.append((x, d))
    beta = None
    for _ in range(max_iter):
        if abs(d) <= grad_tol:
            trace.converged, trace.reason = True, StopReason.GRAD_TOLERANCE
            return trace
        dd = d - d_prev
        if dd != 0.0 and x != x_prev:
            beta = -(x - x_prev) / dd
        if beta is None or beta == 0.0:
            trace.reason = StopReason.DENOMINATOR_UNDERFLOW
            return trace
        x_next, underflow = _step(d, g.df(x + beta * d), x, beta)
        if underflow:
            trace.reason = StopReason.DENOMINATOR_UNDERFLOW
            return trace
        x_prev, d_prev = x, d
        x = x_next
        d = g.df(x)
        trace.iterates.append((x, d))
    if abs(d) <= grad_tol:
        trace.converged, trace.reason = True, StopReason.GRAD_TOLERANCE
    return trace


def _admissible_pairs(trace: UnivariateTrace, x_star: float, need: int) -> list:
    lo, hi = ORDER_WINDOW
    errs = [abs(x - x_star) for x in trace.points]
    ok = [lo < e < hi for e in errs]
    if sum(ok) < need:
        raise InsufficientDataError(
            f"only {sum(ok)} iterates with error in {ORDER_WINDOW}; need {need}"
        )
    pairs = [(errs[k], errs[k + 1]) for k in range(len(errs) - 1) if ok[k] and ok[k + 1]]
    if not pairs:
        raise InsufficientDataError("no consecutive admissible iterates")
    return pairs


def estimate_order(trace: UnivariateTrace, x_star: float) -> float:
    """Empirical order ``log|e_{k+1}| / log|e_k|`` at the last admissible k."""
    e_k, e_next = _admissible_pairs(trace, x_star, MIN_ADMISSIBLE)[-1]
    return math.log(e_next) / math.log(e_k)


def error_constant_check(g: ScalarFn, x_star: float, d2: float, d3: float, alpha: float,
                         trace: UnivariateTrace) -> tuple[float, float]:
    """Measured ``|e_{k+1}| / e_k^2`` against ``0.5 |d3/d2| |1 + alpha d2|``.

    ``d2`` and ``d3`` are f''(x*) and f'''(x*), supplied by the caller.
    """
    if d2 == 0:
        raise ValueError("f''(x*) must be nonzero")
    # one consecutive pair inside the window is enough here
    e_k, e_next = _admissible_pairs(trace, x_star, 2)[-1]
    predicted = 0.5 * abs(d3 / d2) * abs(1.0 + alpha * d2)
    return e_next / (e_k * e_k), predicted


def bisect_root(df: Callable[[float], float], lo: float, hi: float, tol: float = 1e-15,
                max_iter: int = 2000) -> float:
    """Root of ``df`` on a sign-changing bracket, by bisection."""
    flo, fhi = df(lo), df(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError("bracket does not change sign")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = df(mid)
        if fm == 0.0 or hi - lo <= tol * max(1.0, abs(mid)):
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
