"""Kaczmarz row projections and their match with single-sample Steffensen."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .linalg import DesignMatrix, as_vector
from .objective import ErmProblem, LossKind
from .rates import BBSign, RateKind
from .sampling import SamplerState, Scheme, _weighted_from_cumsum
from .stochastic import run_single_sample


@dataclass(frozen=True)
class LinearSystem:
    """Rows ``a_i`` and right-hand side ``b`` of ``A x = b``.

    ``consistent`` is a caller's promise that a solution exists; it is not
    checked.
    """

    matrix: DesignMatrix
    consistent: bool = True

    def __post_init__(self):
        norms = self.matrix.row_norms_sq()
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms == 0.0)[0])
            raise ValueError(f"row {bad} is all zero")

    @classmethod
    def from_dense(cls, a, rhs, consistent: bool = True) -> "LinearSystem":
        return cls(DesignMatrix.from_dense(np.asarray(a, dtype=np.float64), rhs), consistent)

    @property
    def rhs(self) -> np.ndarray:
        return self.matrix.labels

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.n, self.matrix.d

    def as_problem(self) -> ErmProblem:
        """Components ``f_i(x) = 0.5 (a_i^T x - b_i)^2`` without regularization."""
        return ErmProblem(self.matrix, LossKind.SQUARED, 0.0)


def kaczmarz_step(sys: LinearSystem, i: int, x) -> np.ndarray:
    """Orthogonal projection of ``x`` onto ``{z : a_i^T z = b_i}``."""
    n = sys.matrix.n
    if not 0 <= i < n:
        raise IndexError(f"row {i} out of range for {n} rows")
    row = sys.matrix.rows[i]
    x = as_vector(x)
    r = float(sys.rhs[i]) - float(row.values @ x[row.indices])
    out = x.copy()
    out[row.indices] += (r / row.norm_sq()) * row.values
    return out


def kaczmarz_indices(sys: LinearSystem, seed: int, iters: int) -> list[int]:
    """Row indices drawn with probability ``||a_i||^2 / ||A||_F^2``."""
    state = SamplerState(seed, Scheme.ROW_NORM_WEIGHTED)
    cum = np.cumsum(sys.matrix.row_norms_sq())
    return [_weighted_from_cumsum(state, cum) for _ in range(iters)]


def randomized_kaczmarz(sys: LinearSystem, x0, seed: int, iters: int,
                        indices: Optional[Sequence[int]] = None) -> list[np.ndarray]:
    """Iterates ``x_0, ..., x_iters``; ``indices`` overrides the sampler."""
    if indices is None:
        indices = kaczmarz_indices(sys, seed, iters)
    elif len(indices) != iters:
        raise ValueError("need exactly iters indices")
    x = as_vector(x0).astype(np.float64, copy=True)
    out = [x]
    for i in indices:
        x = kaczmarz_step(sys, int(i), x)
        out.append(x)
    return out


def cyclic_kaczmarz(sys: LinearSystem, x0, sweeps: int) -> np.ndarray:
    x = as_vector(x0).astype(np.float64, copy=True)
    for _ in range(sweeps):
        for i in range(sys.matrix.n):
            x = kaczmarz_step(sys, i, x)
    return x


class EquivalenceReport(NamedTuple):
    kind: RateKind
    bb_sign: BBSign
    max_rel_deviation: float
    max_eta_error: float  # max |eta_k ||a_i||^2 - 1| over informative steps
    skipped_steps: int    # steps whose row residual was at rounding level


# Below this multiple of eps * (|b_i| + ||a_i|| ||x||) the residual is noise.
RESIDUAL_NOISE_FACTOR = 64.0


def ssm_kaczmarz_equivalence(sys: LinearSystem, x0, seed: int, iters: int,
                             kind: RateKind = RateKind.STEFFENSEN,
                             bb_sign: BBSign = BBSign.NEGATIVE) -> EquivalenceReport:
    """Run Kaczmarz and single-sample Steffensen on one shared index stream.

    Deviation at step k is ``||x_k^S - x_k^K|| / ||x_k^K||`` (absolute when
    the Kaczmarz iterate is zero), over every step. The learning-rate check
    ``eta_k ||a_i||^2 = 1`` skips steps where row i is already satisfied to
    rounding (e.g. the same row drawn twice in a row): there the probe
    difference carries no signal and both methods move by O(eps).
    """
    idx = kaczmarz_indices(sys, seed, iters)
    kac = randomized_kaczmarz(sys, x0, seed, iters, indices=idx)
    stf, etas = run_single_sample(sys.as_problem(), x0, idx, kind=kind, bb_sign=bb_sign)
    dev = 0.0
    for a, b in zip(kac, stf):
        scale = float(np.linalg.norm(a))
        diff = float(np.linalg.norm(a - b))
        dev = max(dev, diff / scale if scale > 0 else diff)
    norms = sys.matrix.row_norms_sq()
    eps = np.finfo(np.float64).eps
    eta_err = 0.0
    skipped = 0
    for k, (i, eta) in enumerate(zip(idx, etas)):
        row, x = sys.matrix.rows[i], stf[k]
        r = float(sys.rhs[i]) - float(row.values @ x[row.indices])
        noise = RESIDUAL_NOISE_FACTOR * eps * (abs(float(sys.rhs[i])) + np.sqrt(norms[i]) * np.linalg.norm(x))
        if np.isnan(eta) or abs(r) <= noise:
            skipped += 1
            continue
        eta_err = max(eta_err, abs(float(eta) * float(norms[i]) - 1.0))
    return EquivalenceReport(kind, bb_sign, dev, eta_err, skipped)
