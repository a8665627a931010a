"""Stochastic Steffensen optimizers, their baselines and an ERM benchmark harness."""

from .deterministic import DetOptConfig, DivergenceError, minimize, reference_optimum
from .linalg import DesignMatrix, SparseRow
from .objective import ErmProblem, LossKind
from .prox import ProxSpec, prox_map
from .rates import BBSign, RateKind, learning_rate
from .stochastic import Algorithm, IterateChoice, StochOptConfig, StochTrace, run

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "BBSign",
    "DesignMatrix",
    "DetOptConfig",
    "DivergenceError",
    "ErmProblem",
    "IterateChoice",
    "LossKind",
    "ProxSpec",
    "RateKind",
    "SparseRow",
    "StochOptConfig",
    "StochTrace",
    "learning_rate",
    "minimize",
    "prox_map",
    "reference_optimum",
    "run",
]
