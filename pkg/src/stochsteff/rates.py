"""Barzilai-Borwein step size and the four Steffensen learning rates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .linalg import DimensionError

TINY = 1e-300


class RateKind(enum.Enum):
    STEFFENSEN = "S"
    QUASI_STEFFENSEN = "qS"
    STEFFENSEN_BB = "SBB"
    QUASI_STEFFENSEN_BB = "qSBB"

    @property
    def uses_beta(self) -> bool:
        return self in (RateKind.STEFFENSEN_BB, RateKind.QUASI_STEFFENSEN_BB)


class BBSign(enum.Enum):
    """``POSITIVE``: ||s||^2 / s^T y.  ``NEGATIVE``: its negation, beta_0 = -1."""

    POSITIVE = "positive"
    NEGATIVE = "negative"

    @property
    def initial_beta(self) -> float:
        return -1.0 if self is BBSign.NEGATIVE else 1.0


class CoefficientKind(enum.Enum):
    SSM = "SSM"
    SSBB = "SSBB"


class RateError(ArithmeticError):
    pass


class NeedsHistoryError(RateError):
    pass


class DegenerateCurvatureError(RateError):
    pass


class DegenerateDenominatorError(RateError):
    pass


class ZeroGradientError(RateError):
    """The gradient vanished; the iterate is stationary."""


ProbeOracle = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RateContext:
    x_curr: np.ndarray
    grad_curr: np.ndarray
    x_prev: Optional[np.ndarray] = None
    grad_prev: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.x_prev is None) != (self.grad_prev is None):
            raise ValueError("x_prev and grad_prev must be given together")
        shape = self.x_curr.shape
        for v in (self.grad_curr, self.x_prev, self.grad_prev):
            if v is not None and v.shape != shape:
                raise DimensionError("rate context vectors differ in dimension")

    @property
    def has_history(self) -> bool:
        return self.x_prev is not None


def bb_step_size(ctx: RateContext, sign: BBSign = BBSign.POSITIVE) -> float:
    if not ctx.has_history:
        raise NeedsHistoryError("BB step size needs the previous iterate and gradient")
    s = ctx.x_curr - ctx.x_prev
    y = ctx.grad_curr - ctx.grad_prev
    ss = float(s @ s)
    sy = float(s @ y)
    beta = ss / sy if sy != 0.0 else math.inf
    if ss == 0.0 or not abs(sy) >= TINY * ss or not math.isfinite(beta):
        raise DegenerateCurvatureError(f"degenerate curvature: s^T y = {sy!r}, ||s||^2 = {ss!r}")
    return -beta if sign is BBSign.NEGATIVE else beta


def learning_rate(kind: RateKind, ctx: RateContext, probe: ProbeOracle,
                  beta: float = 1.0) -> tuple[float, np.ndarray]:
    """Return ``(eta, probe_gradient)`` for one of the four rules.

    With ``g`` the current gradient, the probe is evaluated at ``x + c g``
    (``c = 1`` for the plain rules, ``c = beta`` for the BB rules) and
    ``D = probe - g``:

    * Steffensen:       ||g||^2 / (D^T g)
    * Steffensen-BB:    beta ||g||^2 / (D^T g)
    * quasi-Steffensen: (D^T g) / ||D||^2
    * quasi-Steffensen-BB: beta (D^T g) / ||D||^2
    """
    g = ctx.grad_curr
    gg = float(g @ g)
    if gg == 0.0:
        raise ZeroGradientError("zero gradient")
    c = 1.0
    if kind.uses_beta:
        if beta == 0.0 or not math.isfinite(beta):
            raise ValueError(f"invalid beta {beta!r}")
        c = beta
    p = probe(ctx.x_curr + c * g)
    delta = p - g
    dg = float(delta @ g)
    if kind in (RateKind.STEFFENSEN, RateKind.STEFFENSEN_BB):
        if not abs(dg) >= TINY:
            raise DegenerateDenominatorError(f"D^T g = {dg!r}")
        eta = c * gg / dg
    else:
        dd = float(delta @ delta)
        if not dd >= TINY:
            raise DegenerateDenominatorError(f"||D||^2 = {dd!r}")
        eta = c * dg / dd
    return eta, p


def stochastic_coefficient(kind: CoefficientKind, m: int, b: int) -> float:
    """1/sqrt(m) for SSM, b/m for SSBB."""
    if m < 1 or b < 1:
        raise ValueError("m and b must be >= 1")
    if CoefficientKind(kind) is CoefficientKind.SSM:
        return 1.0 / math.sqrt(m)
    return b / m
