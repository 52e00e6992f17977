import numpy as np
import pytest

from fpdiff.bounds import (
    BoundKind,
    ConstantsEstimate,
    Provenance,
    bound_bilevel,
    bound_implicit,
    bound_onestep,
    bound_onestep_quadratic,
    estimate_constants,
    make_report,
    report_csv_row,
    reports_to_csv,
    CSV_HEADER,
)
from fpdiff.errors import (
    InsufficientTraceError,
    NotSuperlinearError,
    RhoNotContractiveError,
)
from fpdiff.estimators import jac_onestep
from fpdiff.fixed_point import iterate, reference_fixed_point
from fpdiff.linalg import operator_norm
from fpdiff.problems import (
    QuadraticInner,
    WeightedRidge,
    quadratic_map,
    ridge_map,
    ridge_truth_jacobian,
)

from maps import ConstantMap


def const(rho, l_f=1.0, l_j=0.0, joint=None, prov=Provenance.ANALYTIC):
    return ConstantsEstimate(rho=rho, l_f=l_f, l_j_theta=l_j,
                             l_j_joint=l_j if joint is None else joint,
                             provenance=prov)


def test_bound_onestep_formula_values():
    assert bound_onestep(const(0.0, l_f=1.0), 0.0) == 0.0
    alpha = 0.37
    assert bound_onestep(const(0.5, l_f=alpha), 123.0) == pytest.approx(alpha)


def test_bound_onestep_rejects_non_contraction():
    with pytest.raises(RhoNotContractiveError):
        bound_onestep(const(1.0), 0.0)


def test_bound_onestep_monotone_in_every_input():
    rng = np.random.default_rng(0)
    for _ in range(50):
        rho = rng.uniform(0.0, 0.95)
        l_f = rng.uniform(0.0, 3.0)
        l_j = rng.uniform(0.0, 3.0)
        dist = rng.uniform(0.0, 2.0)
        base = bound_onestep(const(rho, l_f, l_j), dist)
        bump = rng.uniform(1e-6, 0.04)
        assert bound_onestep(const(min(rho + bump, 0.99), l_f, l_j), dist) >= base
        assert bound_onestep(const(rho, l_f + bump, l_j), dist) >= base
        assert bound_onestep(const(rho, l_f, l_j + bump), dist) >= base
        assert bound_onestep(const(rho, l_f, l_j), dist + bump) >= base


def test_bound_implicit_vanishes_with_distance_or_modulus():
    assert bound_implicit(const(0.6, l_f=2.0, l_j=1.5), 0.0) == 0.0
    assert bound_implicit(const(0.6, l_f=2.0, l_j=0.0), 10.0) == 0.0


def test_bound_onestep_quadratic_guard():
    assert bound_onestep_quadratic(const(0.0, joint=2.0), 0.0) == 0.0
    assert bound_onestep_quadratic(const(0.0, joint=2.0), 0.5,
                                   final_jac_norm=1e-6) == 1.0
    with pytest.raises(NotSuperlinearError):
        bound_onestep_quadratic(const(0.0, joint=2.0), 0.5, final_jac_norm=1e-2)


def test_bound_bilevel_term_isolation():
    assert bound_bilevel(const(0.0), 0.0, 0.0, 0.0, 0.0) == 0.0
    value = bound_bilevel(const(0.5, l_f=0.3, l_j=0.0), 2.0, 0.0, 7.0, 9.0)
    assert value == pytest.approx(0.5 * 0.3 * 2.0 / 0.5)


def test_quadratic_onestep_reports_always_satisfied():
    for seed in range(10):
        prob = QuadraticInner.random(5, seed=seed)
        qmap = quadratic_map(prob)
        rng = np.random.default_rng(seed)
        theta = rng.standard_normal(5)
        trace = iterate(qmap, np.zeros(5), theta, max_iter=8, tol=0.0)
        constants = estimate_constants(qmap, trace, Provenance.ANALYTIC)
        ref = prob.fixed_point(theta)
        dist_prev = float(np.linalg.norm(trace.second_last() - ref))
        measured = operator_norm(jac_onestep(qmap, trace).matrix - prob.truth_jacobian())
        report = make_report(
            BoundKind.ONE_STEP_LINEAR, trace.k, measured,
            bound_onestep(constants, dist_prev), constants, dist_prev=dist_prev,
        )
        assert report.satisfied


def test_ridge_implicit_report_with_sampled_safety():
    prob = WeightedRidge.synthetic(20, 5, cond=10.0, seed=1)
    theta = np.ones(20)
    rmap = ridge_map(prob)
    trace = iterate(rmap, np.zeros(5), theta, max_iter=40, tol=0.0)
    constants = estimate_constants(rmap, trace)
    assert constants.provenance is Provenance.TRACE_SAMPLED
    ref = reference_fixed_point(rmap, np.zeros(5), theta)
    dist_k = float(np.linalg.norm(trace.last() - ref))
    from fpdiff.estimators import jac_implicit

    measured = operator_norm(
        jac_implicit(rmap, trace.last(), theta).matrix
        - ridge_truth_jacobian(prob, theta)
    )
    assert measured <= 2.0 * bound_implicit(constants, dist_k) + 1e-9


def test_estimate_constants_analytic_quadratic():
    prob = QuadraticInner.random(4, seed=2)
    qmap = quadratic_map(prob)
    trace = iterate(qmap, np.zeros(4), np.ones(4), max_iter=5, tol=0.0)
    constants = estimate_constants(qmap, trace, Provenance.ANALYTIC)
    assert constants.rho == pytest.approx(prob.contraction(), abs=1e-15)
    assert constants.l_f == prob.step
    assert constants.l_j_theta == 0.0


def test_estimate_constants_constant_map():
    cmap = ConstantMap(3)
    trace = iterate(cmap, np.zeros(3), np.ones(3), max_iter=4, tol=0.0)
    constants = estimate_constants(cmap, trace)
    assert constants.rho == 0.0
    assert constants.l_j_theta == 0.0
    assert constants.l_j_joint == 0.0


def test_estimate_constants_ridge_sampled_close_to_analytic():
    prob = WeightedRidge.synthetic(15, 4, cond=8.0, seed=3)
    theta = np.ones(15)
    rmap = ridge_map(prob)
    trace = iterate(rmap, np.zeros(4), theta, max_iter=30, tol=0.0)
    sampled = estimate_constants(rmap, trace)
    analytic = rmap.analytic_constants(theta)
    assert sampled.rho == pytest.approx(analytic.rho, rel=0.05)


def test_estimate_constants_needs_three_iterates():
    cmap = ConstantMap(2)
    trace = iterate(cmap, np.zeros(2), np.ones(2), max_iter=1, tol=0.0)
    with pytest.raises(InsufficientTraceError):
        estimate_constants(cmap, trace)


def test_report_satisfaction_definition_and_csv():
    constants = const(0.5)
    good = make_report(BoundKind.ONE_STEP_LINEAR, 3, 1.0, 1.0, constants)
    assert good.satisfied
    bad = make_report(BoundKind.ONE_STEP_LINEAR, 3, 1.0 + 2e-8, 1.0, constants)
    assert not bad.satisfied
    implicit = make_report(BoundKind.IMPLICIT_LINEAR, 3, 0.1, 1.0, constants)
    row = report_csv_row(implicit)
    assert len(row) == len(CSV_HEADER)
    assert row[-1] == "analytic+approx-model"
    text = reports_to_csv([good, implicit])
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert len(text.splitlines()) == 3
