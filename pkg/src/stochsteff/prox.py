"""Closed-form proximal maps of separable regularizers."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import as_vector


class ProxKind(enum.Enum):
    ZERO = "zero"
    L1 = "l1"
    SQUARED_L2 = "squared_l2"
    ELASTIC_NET = "elastic_net"


@dataclass(frozen=True)
class ProxSpec:
    """Regularizer ``R(x) = l1 ||x||_1 + (l2/2) ||x||^2``.

    ``kind`` records which family the spec came from; the weights that do
    not belong to the family are zero.
    """

    kind: ProxKind = ProxKind.ZERO
    l1: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("regularizer weights must be nonnegative")
        if self.kind is ProxKind.ZERO and (self.l1 or self.l2):
            raise ValueError("zero regularizer cannot carry weights")
        if self.kind is ProxKind.L1 and self.l2:
            raise ValueError("L1 regularizer has no l2 weight")
        if self.kind is ProxKind.SQUARED_L2 and self.l1:
            raise ValueError("squared-L2 regularizer has no l1 weight")

    @classmethod
    def zero(cls) -> "ProxSpec":
        return cls()

    @classmethod
    def lasso(cls, weight: float) -> "ProxSpec":
        return cls(ProxKind.L1, l1=weight)

    @classmethod
    def squared_l2(cls, weight: float) -> "ProxSpec":
        return cls(ProxKind.SQUARED_L2, l2=weight)

    @classmethod
    def elastic_net(cls, l1: float, l2: float) -> "ProxSpec":
        return cls(ProxKind.ELASTIC_NET, l1=l1, l2=l2)

    @property
    def mu(self) -> float:
        """Strong-convexity modulus of R (zero for the pure L1 term)."""
        return self.l2

    def value(self, x) -> float:
        x = as_vector(x)
        return float(self.l1 * np.abs(x).sum() + 0.5 * self.l2 * (x @ x))

    def subgradient_bounds(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate interval [lo, hi] of the subdifferential at x."""
        x = as_vector(x)
        base = self.l2 * x
        sgn = np.sign(x)
        lo = np.where(x == 0, -self.l1, self.l1 * sgn) + base
        hi = np.where(x == 0, self.l1, self.l1 * sgn) + base
        return lo, hi


def soft_threshold(y: np.ndarray, t: float) -> np.ndarray:
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def prox_map(spec: ProxSpec, eta: float, y) -> np.ndarray:
    """``argmin_x 0.5||x - y||^2 + eta R(x)``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if spec.kind is ProxKind.ZERO:
        return y
    y = as_vector(y)
    x = soft_threshold(y, eta * spec.l1) if spec.l1 else y
    if spec.l2:
        x = x / (1.0 + eta * spec.l2)
    return x


def composite_optimality_residual(grad_f, x, spec: ProxSpec) -> float:
    """Distance from ``-grad f(x)`` to ``dR(x)`` in the max norm.

    Zero exactly at minimizers of ``f + R``.
    """
    lo, hi = spec.subgradient_bounds(x)
    target = -as_vector(grad_f)
    below = np.maximum(lo - target, 0.0)
    above = np.maximum(target - hi, 0.0)
    return float(np.max(below + above)) if target.size else 0.0
