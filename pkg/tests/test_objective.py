import itertools
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem
from oracles import (central_difference_grad, dense_grad, dense_value, exhaustive_subset_variance,
                     ridge_hessian)
from stochsteff.linalg import DimensionError
from stochsteff.objective import (LossKind, Snapshot, extreme_eigenvalues,
                                  minibatch_variance_identity_check)

LOSSES = list(LossKind)


@pytest.mark.parametrize("loss", LOSSES)
def test_value_and_gradient_match_dense_oracle(loss, rng):
    p, a, y = make_problem(loss=loss, density=0.7, seed=3)
    for _ in range(5):
        x = rng.standard_normal(p.d)
        assert p.value(x) == pytest.approx(dense_value(a, y, loss.value, p.lam, x), rel=1e-12)
        np.testing.assert_allclose(p.full_grad(x), dense_grad(a, y, loss.value, p.lam, x), atol=1e-12)


@pytest.mark.parametrize("loss", LOSSES)
def test_gradient_by_finite_differences(loss, rng):
    p, _, _ = make_problem(loss=loss, seed=4)
    x = rng.standard_normal(p.d) * 0.3
    np.testing.assert_allclose(p.full_grad(x), central_difference_grad(p.value, x), atol=1e-6)
    for i in (0, 5):
        fd = central_difference_grad(lambda z: p.component_value(i, z), x)
        np.testing.assert_allclose(p.component_grad(i, x), fd, atol=1e-6)


@pytest.mark.parametrize("loss", LOSSES)
def test_component_average_is_full_gradient(loss, rng):
    p, _, _ = make_problem(loss=loss, seed=5)
    x = rng.standard_normal(p.d)
    mean = np.mean([p.component_grad(i, x) for i in range(p.n)], axis=0)
    np.testing.assert_allclose(mean, p.full_grad(x), atol=1e-13)
    np.testing.assert_allclose(p.minibatch_grad(range(p.n), x), p.full_grad(x), atol=1e-13)


def test_logistic_is_stable_for_large_margins():
    p, _, _ = make_problem(loss=LossKind.LOGISTIC, seed=1)
    x = np.full(p.d, 1e4)
    assert np.isfinite(p.value(x))
    assert np.all(np.isfinite(p.full_grad(x)))


@pytest.mark.parametrize("loss", LOSSES)
def test_variance_reduced_gradient_at_snapshot_is_exact(loss, rng):
    p, _, _ = make_problem(loss=loss, seed=6)
    xk = rng.standard_normal(p.d)
    snap = Snapshot(xk, p.full_grad(xk))
    for batch in ([0], [1, 4, 7], list(range(p.n))):
        np.testing.assert_allclose(p.variance_reduced_grad(batch, xk, snap), snap.full_grad, atol=1e-14)


def test_variance_reduced_gradient_is_unbiased(rng):
    p, a, y = make_problem(n=6, seed=7)
    x, xk = rng.standard_normal(p.d), rng.standard_normal(p.d)
    snap = Snapshot(xk, p.full_grad(xk))
    for b in (1, 2, 3):
        vs = [p.variance_reduced_grad(s, x, snap) for s in itertools.combinations(range(p.n), b)]
        np.testing.assert_allclose(np.mean(vs, axis=0), p.full_grad(x), atol=1e-13)


def test_batch_validation(small_ridge):
    p, _, _ = small_ridge
    x = np.zeros(p.d)
    with pytest.raises(ValueError):
        p.minibatch_grad([], x)
    with pytest.raises(ValueError):
        p.minibatch_grad([1, 1], x)
    with pytest.raises(IndexError):
        p.minibatch_grad([p.n], x)
    with pytest.raises(DimensionError):
        p.full_grad(np.zeros(p.d + 1))


def test_constants_match_eigendecomposition():
    p, a, _ = make_problem(n=40, d=6, seed=8, lam=1e-2)
    ev = np.linalg.eigvalsh(ridge_hessian(a, p.lam))
    q = p.with_constants()
    assert q.L == pytest.approx(ev[-1], rel=1e-8)
    assert q.mu == pytest.approx(ev[0], rel=1e-6)
    lo, hi = extreme_eigenvalues(lambda v: ridge_hessian(a, p.lam) @ v, 6)
    assert (lo, hi) == pytest.approx((ev[0], ev[-1]), rel=1e-6)


@pytest.mark.parametrize("loss", [LossKind.LOGISTIC, LossKind.SQUARED_HINGE])
def test_component_lipschitz_bounds_curvature(loss, rng):
    p, _, _ = make_problem(loss=loss, seed=9)
    L = p.component_lipschitz()
    for _ in range(20):
        i = int(rng.integers(p.n))
        x, z = rng.standard_normal(p.d), rng.standard_normal(p.d)
        diff = np.linalg.norm(p.component_grad(i, x) - p.component_grad(i, z))
        assert diff <= L * np.linalg.norm(x - z) * (1 + 1e-12)


def test_pickle_round_trip(small_ridge, rng):
    p, _, _ = small_ridge
    q = pickle.loads(pickle.dumps(p))
    x = rng.standard_normal(p.d)
    np.testing.assert_array_equal(q.minibatch_grad([0, 2], x), p.minibatch_grad([0, 2], x))


def test_invalid_constants(small_ridge):
    p, _, _ = small_ridge
    with pytest.raises(ValueError):
        type(p)(p.data, p.loss, -1.0)
    with pytest.raises(ValueError):
        type(p)(p.data, p.loss, 0.1, mu=2.0, L=1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.data())
def test_minibatch_variance_identity(n, data):
    b = data.draw(st.integers(1, n))
    seed = data.draw(st.integers(0, 2**32 - 1))
    xi = np.random.default_rng(seed).standard_normal((n, 3))
    lhs, rhs = minibatch_variance_identity_check(xi, b)
    assert lhs == pytest.approx(exhaustive_subset_variance(xi, b), abs=1e-12)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_minibatch_variance_identity_edge_cases():
    xi = np.arange(12.0).reshape(4, 3)
    assert minibatch_variance_identity_check(xi, 4) == pytest.approx((0.0, 0.0), abs=1e-14)
    assert minibatch_variance_identity_check(xi[:1], 1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        minibatch_variance_identity_check(xi, 5)
