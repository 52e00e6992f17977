import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fpdiff.errors import NoConvergenceError, NonFiniteIterateError
from fpdiff.fixed_point import (
    CostCounters,
    compose_k,
    estimate_contraction,
    iterate,
    reference_fixed_point,
)

from maps import AffineMap, ConstantMap, contracting_affine


def test_constant_map_converges_in_one_application():
    cmap = ConstantMap(3)
    theta = np.array([1.0, -2.0, 0.5])
    trace = iterate(cmap, np.zeros(3), theta, max_iter=10, tol=1e-12)
    assert trace.converged
    assert_allclose(trace.iterates[1], theta, rtol=0, atol=0)
    assert trace.k <= 2  # one step to land, one to observe a zero residual


def test_scalar_geometric_recursion_closed_form():
    gmap = AffineMap(np.array([[0.5]]), np.array([[1.0]]))
    theta = np.array([1.0])
    trace = iterate(gmap, np.zeros(1), theta, max_iter=20, tol=0.0)
    for k in (1, 3, 7, 20):
        assert trace.iterates[k][0] == pytest.approx(2.0 * (1.0 - 0.5**k), abs=1e-14)


def test_iteration_count_within_contraction_bound():
    amap = contracting_affine(seed=0, rho=0.9)
    theta = np.ones(3)
    x0 = np.zeros(5)
    tol = 1e-10
    trace = iterate(amap, x0, theta, max_iter=10_000, tol=tol)
    assert trace.converged
    r0 = float(np.linalg.norm(x0 - amap.apply(x0, theta)))
    cap = math.ceil(math.log(tol * (1 - 0.9) / r0) / math.log(0.9))
    assert trace.k <= cap


def test_geometric_distance_bound_to_reference():
    amap = contracting_affine(seed=1, rho=0.7)
    theta = np.array([0.3, -1.0, 2.0])
    x0 = np.zeros(5)
    ref = reference_fixed_point(amap, x0, theta)
    trace = iterate(amap, x0, theta, max_iter=60, tol=0.0)
    rho = estimate_contraction(amap, trace)
    assert rho == pytest.approx(0.7, rel=1e-8)
    r0 = float(np.linalg.norm(x0 - amap.apply(x0, theta)))
    for k in range(trace.k + 1):
        dist = float(np.linalg.norm(trace.iterates[k] - ref))
        assert dist <= rho**k * r0 / (1 - rho) + 1e-9


def test_iterate_is_deterministic():
    amap = contracting_affine(seed=2)
    theta = np.array([1.0, 2.0, 3.0])
    t1 = iterate(amap, np.zeros(5), theta, max_iter=40, tol=1e-12)
    t2 = iterate(amap, np.zeros(5), theta, max_iter=40, tol=1e-12)
    assert t1.k == t2.k and t1.converged == t2.converged
    for a, b in zip(t1.iterates, t2.iterates):
        assert np.array_equal(a, b)


def test_iterate_counts_map_evaluations():
    counters = CostCounters()
    amap = contracting_affine(seed=3)
    trace = iterate(amap, np.zeros(5), np.ones(3), max_iter=25, tol=0.0,
                    counters=counters)
    assert counters.map_evals == trace.k == 25
    assert counters.wall_time > 0.0


def test_windowed_storage_keeps_tail_only():
    amap = contracting_affine(seed=4)
    trace = iterate(amap, np.zeros(5), np.ones(3), max_iter=30, tol=0.0, window=4)
    assert trace.k == 30
    assert len(trace.step_residuals) == 30
    assert len(trace.iterates) == 5
    assert trace.start_index == 26
    full = iterate(amap, np.zeros(5), np.ones(3), max_iter=30, tol=0.0)
    assert np.array_equal(trace.last(), full.last())


def test_divergent_map_raises_non_finite():
    amap = AffineMap(1e200 * np.eye(2), np.eye(2))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteIterateError):
        iterate(amap, np.ones(2), np.zeros(2), max_iter=10, tol=1e-12)


def test_reference_fixed_point_requires_convergence():
    amap = contracting_affine(seed=5, rho=0.999)
    with pytest.raises(NoConvergenceError):
        reference_fixed_point(amap, np.zeros(5), np.ones(3), tol=1e-13, max_iter=5)


def test_estimate_contraction_constant_jacobian():
    amap = contracting_affine(seed=6, rho=0.35)
    trace = iterate(amap, np.zeros(5), np.ones(3), max_iter=10, tol=0.0)
    assert estimate_contraction(amap, trace) == pytest.approx(0.35, rel=1e-8)
    assert trace.local_contractions is not None
    assert len(trace.local_contractions) == len(trace.iterates)


def test_compose_k_identity_for_one_step():
    amap = contracting_affine(seed=7)
    assert compose_k(amap, 1) is amap


def test_compose_k_affine_closed_form():
    a = np.array([[0.5, 0.1], [0.0, 0.4]])
    b = np.array([[1.0], [2.0]])
    composed = compose_k(AffineMap(a, b), 2)
    x = np.array([0.3, -0.7])
    theta = np.array([1.5])
    assert_allclose(composed.jac_x(x, theta), a @ a, atol=1e-15)
    assert_allclose(composed.jac_theta(x, theta), a @ b + b, atol=1e-15)
    assert_allclose(composed.apply(x, theta), a @ (a @ x + b @ theta) + b @ theta,
                    atol=1e-15)


def test_compose_k_contraction_is_power():
    amap = contracting_affine(seed=8, rho=0.6)
    composed = compose_k(amap, 3)
    trace = iterate(composed, np.zeros(5), np.ones(3), max_iter=5, tol=0.0)
    assert estimate_contraction(composed, trace) <= 0.6**3 + 1e-8


def test_compose_k_iterates_match_plain_iteration():
    amap = contracting_affine(seed=9)
    theta = np.array([0.1, 0.2, 0.3])
    composed = compose_k(amap, 4)
    tc = iterate(composed, np.zeros(5), theta, max_iter=6, tol=0.0)
    tp = iterate(amap, np.zeros(5), theta, max_iter=24, tol=0.0)
    for j in range(7):
        assert_allclose(tc.iterates[j], tp.iterates[4 * j], atol=1e-12)
