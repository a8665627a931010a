"""Finite-sum ERM objectives and their gradient oracles.

Every component carries the ridge term, ``f_i(x) = loss(a_i^T x; y_i) +
(lam/2)||x||^2``, so ``f = mean(f_i)`` exactly and component gradients
include ``lam * x``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import DesignMatrix, DimensionError, as_vector


class LossKind(enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"
    SQUARED_HINGE = "squared_hinge"


def _dloss_squared(z: float, y: float) -> float:
    return z - y


def _dloss_logistic(z: float, y: float) -> float:
    t = y * z
    if t > 0:
        e = math.exp(-t)
        return -y * e / (1.0 + e)
    return -y / (1.0 + math.exp(t))


def _dloss_hinge(z: float, y: float) -> float:
    gap = 1.0 - y * z
    return -2.0 * y * gap if gap > 0 else 0.0


_SCALAR_DLOSS = {
    LossKind.SQUARED: _dloss_squared,
    LossKind.LOGISTIC: _dloss_logistic,
    LossKind.SQUARED_HINGE: _dloss_hinge,
}


def loss_values(kind: LossKind, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind is LossKind.SQUARED:
        return 0.5 * (z - y) ** 2
    if kind is LossKind.LOGISTIC:
        return np.logaddexp(0.0, -y * z)
    return np.maximum(0.0, 1.0 - y * z) ** 2


def loss_derivs(kind: LossKind, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind is LossKind.SQUARED:
        return z - y
    if kind is LossKind.LOGISTIC:
        # -y * sigmoid(-y z), written to avoid overflow
        t = y * z
        e = np.exp(-np.abs(t))
        return np.where(t > 0, -y * e / (1.0 + e), -y / (1.0 + e))
    return -2.0 * y * np.maximum(0.0, 1.0 - y * z)


# Curvature bound of the scalar loss, used for the component Lipschitz constant.
_LOSS_CURVATURE = {LossKind.SQUARED: 1.0, LossKind.LOGISTIC: 0.25, LossKind.SQUARED_HINGE: 2.0}


@dataclass(frozen=True)
class Snapshot:
    """Outer-loop anchor point and the full gradient there."""

    point: np.ndarray
    full_grad: np.ndarray

    def __post_init__(self):
        if self.point.shape != self.full_grad.shape:
            raise DimensionError("snapshot point and gradient dimensions differ")


class ErmProblem:
    """``f(x) = (1/n) sum_i [loss(a_i^T x; y_i) + (lam/2)||x||^2]``.

    ``mu`` and ``L`` are optional strong-convexity / smoothness constants;
    see :func:`with_constants` to compute them.
    """

    def __init__(
        self,
        data: DesignMatrix,
        loss: LossKind,
        lam: float = 0.0,
        mu: float | None = None,
        L: float | None = None,
    ):
        if data.n < 1 or data.d < 1:
            raise ValueError("problem needs n >= 1 and d >= 1")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if mu is not None and mu <= 0:
            raise ValueError("mu must be positive")
        if L is not None and L <= 0:
            raise ValueError("L must be positive")
        if mu is not None and L is not None and mu > L * (1 + 1e-12):
            raise ValueError(f"mu={mu} exceeds L={L}")
        self.data = data
        self.loss = LossKind(loss)
        self.lam = float(lam)
        self.mu = mu
        self.L = L
        self._dloss = _SCALAR_DLOSS[self.loss]
        self._rows = [(r.indices, r.values) for r in data.rows]
        self._labels = data.labels.tolist()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_dloss"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._dloss = _SCALAR_DLOSS[self.loss]

    def __repr__(self):
        return f"ErmProblem(n={self.n}, d={self.d}, loss={self.loss.value}, lam={self.lam})"

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def d(self) -> int:
        return self.data.d

    def _vec(self, x) -> np.ndarray:
        x = as_vector(x)
        if x.shape[0] != self.d:
            raise DimensionError(f"expected dimension {self.d}, got {x.shape[0]}")
        return x

    def _index(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range [0, {self.n})")
        return int(i)

    def _batch(self, s: Sequence[int]) -> list:
        batch = [int(j) for j in s]
        if not batch:
            raise ValueError("empty minibatch")
        if len(set(batch)) != len(batch):
            raise ValueError("minibatch indices must be distinct")
        for j in batch:
            self._index(j)
        return batch

    # --- oracles -------------------------------------------------------

    def value(self, x) -> float:
        x = self._vec(x)
        z = self.data.matvec(x)
        return float(np.mean(loss_values(self.loss, z, self.data.labels)) + 0.5 * self.lam * (x @ x))

    def component_value(self, i: int, x) -> float:
        x = self._vec(x)
        idx, val = self._rows[self._index(i)]
        z = np.array([val @ x[idx]])
        y = np.array([self._labels[i]])
        return float(loss_values(self.loss, z, y)[0] + 0.5 * self.lam * (x @ x))

    def component_grad(self, i: int, x) -> np.ndarray:
        x = self._vec(x)
        idx, val = self._rows[self._index(i)]
        g = self.lam * x
        g[idx] += self._dloss(float(val @ x[idx]), self._labels[i]) * val
        return g

    def full_grad(self, x) -> np.ndarray:
        x = self._vec(x)
        z = self.data.matvec(x)
        c = loss_derivs(self.loss, z, self.data.labels)
        return self.data.rmatvec(c) / self.n + self.lam * x

    def minibatch_grad(self, s: Sequence[int], x) -> np.ndarray:
        x = self._vec(x)
        return self._minibatch_grad(self._batch(s), x)

    def variance_reduced_grad(self, s: Sequence[int], x, snap: Snapshot) -> np.ndarray:
        """``grad_S(x) - grad_S(snap.point) + snap.full_grad``."""
        x = self._vec(x)
        if snap.point.shape != x.shape:
            raise DimensionError("snapshot dimension does not match x")
        return self._vr_grad(self._batch(s), x, snap)

    # Unchecked fast paths used by the optimizer loops.

    def _minibatch_grad(self, batch, x: np.ndarray) -> np.ndarray:
        g = self.lam * x
        scale = 1.0 / len(batch)
        dloss, rows, labels = self._dloss, self._rows, self._labels
        for j in batch:
            idx, val = rows[j]
            g[idx] += (scale * dloss(float(val @ x[idx]), labels[j])) * val
        return g

    def _vr_grad(self, batch, x: np.ndarray, snap: Snapshot) -> np.ndarray:
        # The lam terms of the two minibatch gradients combine to lam*(x - x_k).
        anchor = snap.point
        v = snap.full_grad + self.lam * (x - anchor)
        scale = 1.0 / len(batch)
        dloss, rows, labels = self._dloss, self._rows, self._labels
        for j in batch:
            idx, val = rows[j]
            y = labels[j]
            c = dloss(float(val @ x[idx]), y) - dloss(float(val @ anchor[idx]), y)
            if c:
                v[idx] += (scale * c) * val
        return v

    # --- constants -----------------------------------------------------

    def component_lipschitz(self) -> float:
        """max_i Lipschitz constant of grad f_i: curvature * ||a_i||^2 + lam."""
        return _LOSS_CURVATURE[self.loss] * float(self.data.row_norms_sq().max()) + self.lam

    def hessian_matvec(self, v) -> np.ndarray:
        """``((1/n) A^T A + lam I) v``; the ridge Hessian."""
        v = self._vec(v)
        return self.data.rmatvec(self.data.matvec(v)) / self.n + self.lam * v

    def with_constants(self, tol: float = 1e-10, max_iter: int = 200_000) -> "ErmProblem":
        """Copy of this problem with ``mu`` and ``L`` filled in.

        Squared loss: extreme eigenvalues of the ridge Hessian by power
        iteration. Logistic / squared hinge: ``L`` is the component bound and
        ``mu = lam`` (``None`` when ``lam == 0``).
        """
        if self.loss is LossKind.SQUARED:
            lo, hi = extreme_eigenvalues(self.hessian_matvec, self.d, tol=tol, max_iter=max_iter)
            mu = lo if lo > 0 else None
            return ErmProblem(self.data, self.loss, self.lam, mu=mu, L=hi)
        L = self.component_lipschitz()
        return ErmProblem(self.data, self.loss, self.lam, mu=self.lam or None, L=L)


def _power_iteration(matvec, d: int, tol: float, max_iter: int, seed: int) -> float:
    v = np.random.default_rng(seed).standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def extreme_eigenvalues(matvec, d: int, tol: float = 1e-10, max_iter: int = 200_000) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric PSD operator.

    The largest comes from plain power iteration; the smallest from power
    iteration on the shifted operator ``hi*I - H``.
    """
    hi = _power_iteration(matvec, d, tol, max_iter, seed=0)
    if d == 1:
        return hi, hi
    shift = hi
    gap = _power_iteration(lambda v: shift * v - matvec(v), d, tol * 1e-2, max_iter, seed=1)
    lo = shift - gap
    return max(lo, 0.0), hi


def minibatch_variance_identity_check(xi: Sequence, b: int) -> tuple[float, float]:
    """Both sides of the uniform-subset minibatch variance identity.

    ``lhs = E_S ||mean_{i in S} xi_i - xibar||^2`` by enumerating every
    b-subset; ``rhs = (n-b)/(b(n-1)) * E_i ||xi_i - xibar||^2`` with
    ``xibar`` the mean of the vectors.
    """
    xs = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    n = xs.shape[0]
    if not 1 <= b <= n:
        raise ValueError(f"need 1 <= b <= n, got b={b}, n={n}")
    if n == 1:
        return 0.0, 0.0
    mean = xs.mean(axis=0)
    total = 0.0
    count = 0
    for subset in itertools.combinations(range(n), b):
        diff = xs[list(subset)].mean(axis=0) - mean
        total += float(diff @ diff)
        count += 1
    lhs = total / count
    spread = float(np.mean(np.sum((xs - mean) ** 2, axis=1)))
    rhs = (n - b) / (b * (n - 1)) * spread
    return lhs, rhs
