import math

import numpy as np
import pytest

from fpdiff.estimators import (
    finite_difference_map_jacobians,
    jac_finite_difference,
    jac_implicit,
    jac_onestep,
)
from fpdiff.fixed_point import estimate_contraction, iterate, reference_fixed_point
from fpdiff.problems import LogisticNewton, newton_map

INSTANCE = dict(n_samples=40, n_features=4, lam=0.1, seed=0)


@pytest.fixture(scope="module")
def solved():
    prob = LogisticNewton.synthetic(**INSTANCE)
    nmap = newton_map(prob)
    theta = np.ones(40)
    trace = iterate(nmap, np.zeros(5), theta, max_iter=50, tol=1e-13)
    return prob, nmap, theta, trace


def test_construction_validation():
    with pytest.raises(ValueError):
        LogisticNewton(design=np.ones((3, 2)), labels=np.array([1.0, 0.0, -1.0]),
                       lam=0.1)
    design = np.hstack([np.zeros((3, 1)), np.ones((3, 1))])
    with pytest.raises(ValueError):
        LogisticNewton(design=design, labels=np.array([1.0, -1.0, 1.0]), lam=0.1)


def test_squared_loss_mode_is_exact_in_one_step():
    prob = LogisticNewton.synthetic(**INSTANCE)
    quad = LogisticNewton(design=prob.design, labels=prob.labels, lam=prob.lam,
                          loss="squared")
    nmap = newton_map(quad)
    theta = np.ones(40)
    trace = iterate(nmap, np.zeros(5), theta, max_iter=10, tol=1e-14)
    assert trace.converged and trace.k <= 2
    grad = nmap.gradient(trace.last(), theta)
    assert np.linalg.norm(grad) <= 1e-10
    one = jac_onestep(nmap, trace)
    implicit = jac_implicit(nmap, trace.last(), theta)
    assert np.abs(one.matrix - implicit.matrix).max() <= 1e-12


def test_objective_decreases_monotonically(solved):
    _, nmap, theta, trace = solved
    values = [nmap.objective(x, theta) for x in trace.iterates]
    for before, after in zip(values, values[1:]):
        assert after <= before + 1e-12


def test_quadratic_tail_slope(solved):
    _, nmap, theta, trace = solved
    ref = reference_fixed_point(nmap, np.zeros(5), theta, tol=1e-15, max_iter=200)
    dists = [float(np.linalg.norm(x - ref)) for x in trace.iterates]
    pairs = [
        (dists[i], dists[i + 1])
        for i in range(len(dists) - 1)
        if 1e-12 < dists[i] < 0.5 and dists[i + 1] > 1e-14
    ]
    assert len(pairs) >= 3
    xs = [math.log(a) for a, _ in pairs]
    ys = [math.log(b) for _, b in pairs]
    n = len(xs)
    slope = (n * sum(x * y for x, y in zip(xs, ys)) - sum(xs) * sum(ys)) / (
        n * sum(x * x for x in xs) - sum(xs) ** 2
    )
    assert slope >= 1.9


def test_onestep_matches_implicit_at_convergence(solved):
    _, nmap, theta, trace = solved
    one = jac_onestep(nmap, trace)
    implicit = jac_implicit(nmap, trace.last(), theta)
    assert np.abs(one.matrix - implicit.matrix).max() <= 1e-10


def test_estimators_match_finite_differences(solved):
    _, nmap, theta, trace = solved
    fd = jac_finite_difference(nmap, theta, solver_tol=1e-12, max_iter=500).matrix
    implicit = jac_implicit(nmap, trace.last(), theta).matrix
    assert np.abs(implicit - fd).max() <= 1e-5


def test_map_jacobians_consistent_in_unit_step_region(solved):
    _, nmap, theta, trace = solved
    # a point a few Newton steps in, safely inside the unit-step region
    x = trace.iterates[3]
    assert nmap.in_unit_step_region(x, theta)
    jx, jt = finite_difference_map_jacobians(nmap, x, theta)
    assert np.abs(jx - nmap.jac_x(x, theta)).max() <= 1e-5
    assert np.abs(jt - nmap.jac_theta(x, theta)).max() <= 1e-5


def test_state_jacobian_vanishes_at_solution(solved):
    _, nmap, theta, trace = solved
    estimate_contraction(nmap, trace)
    assert trace.local_contractions[-1] <= 1e-6


def test_damped_phase_is_flagged():
    prob = LogisticNewton.synthetic(**INSTANCE)
    nmap = newton_map(prob)
    theta = np.ones(40)
    far = 50.0 * np.ones(5)
    if nmap.in_unit_step_region(far, theta):
        pytest.skip("start point unexpectedly inside the unit-step region")
    # the damped step must still decrease the objective
    after = nmap.apply(far, theta)
    assert nmap.objective(after, theta) < nmap.objective(far, theta)
