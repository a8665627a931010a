import numpy as np
import pytest

from stochsteff.linalg import DesignMatrix
from stochsteff.objective import ErmProblem, LossKind

_ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    """Collects one acceptance line per criterion for the terminal summary."""

    def emit(criterion: int, ok: bool, detail: str):
        line = f"CRITERION {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def make_problem(n=12, d=5, loss=LossKind.SQUARED, lam=0.1, seed=0, density=1.0):
    r = np.random.default_rng(seed)
    a = r.standard_normal((n, d))
    if density < 1.0:
        a *= r.random((n, d)) < density
    if loss is LossKind.SQUARED:
        y = r.standard_normal(n)
    else:
        y = np.where(r.random(n) < 0.5, -1.0, 1.0)
    return ErmProblem(DesignMatrix.from_dense(a, y), loss, lam), a, y


@pytest.fixture
def small_ridge():
    return make_problem()
