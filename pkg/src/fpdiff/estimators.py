"""The three derivative estimators, their K-step variant, and the
finite-difference ground-truth oracle.

All estimators return the n-by-m Jacobian of the solver output with respect
to the parameters, tagged with the method used and with cost counters that
mirror the complexity model (how many map evaluations, Jacobian evaluations
and linear solves the estimate consumed).
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyTraceError,
    NoConvergenceError,
    NonFiniteIterateError,
)
from .fixed_point import AlgorithmMap, CostCounters, IterationTrace, iterate
from .linalg import lu_solve


class Method(enum.Enum):
    AUTODIFF = "autodiff"
    IMPLICIT = "implicit"
    ONE_STEP = "onestep"
    K_STEP = "kstep"
    FINITE_DIFFERENCE = "fd"


@dataclass(frozen=True)
class JacobianEstimate:
    """An n-by-m parameter Jacobian with its provenance and cost."""

    matrix: np.ndarray
    method: Method
    at_iteration: int
    costs: CostCounters = field(default_factory=CostCounters)
    window: int | None = None


def _check_finite(matrix: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteIterateError(f"non-finite entries in {what}")
    return matrix


def _warn_if_damped(algorithm: AlgorithmMap, x: np.ndarray, theta: np.ndarray) -> None:
    # maps whose smooth Jacobian model only holds on part of the state space
    # (damped Newton) expose this predicate; estimators evaluated outside
    # that region are still computed, but the user is told
    probe = getattr(algorithm, "in_unit_step_region", None)
    if callable(probe) and not probe(x, theta):
        warnings.warn(
            "estimator evaluated where the map is still damping its steps; "
            "the analytic Jacobians assume the undamped regime",
            stacklevel=3,
        )


def jac_autodiff(
    algorithm: AlgorithmMap,
    trace: IterationTrace,
    j0: np.ndarray | None = None,
) -> JacobianEstimate:
    """Unrolled (piggyback) propagation through every recorded iteration.

    Runs J_{i+1} = jac_x(x_i) J_i + jac_theta(x_i) over the whole trace,
    starting from j0 (the Jacobian of x_0 with respect to theta, zero when
    the start point does not depend on the parameters).
    """
    if trace.start_index != 0:
        raise ValueError("unrolled propagation needs a trace with full storage")
    n, m = algorithm.dims()
    if j0 is None:
        jac = np.zeros((n, m))
    else:
        jac = np.asarray(j0, dtype=np.float64)
        if jac.shape != (n, m):
            raise DimensionMismatchError(
                f"j0 has shape {jac.shape}, expected {(n, m)}"
            )
    costs = CostCounters()
    started = time.perf_counter()
    theta = trace.theta
    for x in trace.iterates[:-1]:
        jac = algorithm.jac_x(x, theta) @ jac + algorithm.jac_theta(x, theta)
        costs.jac_x_evals += 1
        costs.jac_theta_evals += 1
    costs.wall_time = time.perf_counter() - started
    _check_finite(jac, "unrolled Jacobian")
    return JacobianEstimate(matrix=jac, method=Method.AUTODIFF, at_iteration=trace.k, costs=costs)


def jac_implicit(algorithm: AlgorithmMap, x, theta) -> JacobianEstimate:
    """Implicit differentiation at x: solve (I - jac_x) J = jac_theta.

    x should be a (near-)fixed point; the solve raises SingularMatrixError
    when I - jac_x is numerically singular, which signals a contraction
    factor at or above 1.
    """
    x = np.asarray(x, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    n, _ = algorithm.dims()
    _warn_if_damped(algorithm, x, theta)
    costs = CostCounters()
    started = time.perf_counter()
    a = algorithm.jac_x(x, theta)
    b = algorithm.jac_theta(x, theta)
    costs.jac_x_evals += 1
    costs.jac_theta_evals += 1
    jac = lu_solve(np.eye(n) - a, b)
    costs.linear_solves += 1
    costs.wall_time = time.perf_counter() - started
    _check_finite(jac, "implicit Jacobian")
    return JacobianEstimate(matrix=jac, method=Method.IMPLICIT, at_iteration=0, costs=costs)


def jac_onestep(algorithm: AlgorithmMap, trace: IterationTrace) -> JacobianEstimate:
    """Parameter Jacobian of the last iteration only: jac_theta(x_{k-1}).

    One jac_theta evaluation, no state Jacobians, no linear solves.
    """
    if trace.k < 1 or len(trace.iterates) < 2:
        raise EmptyTraceError("one-step estimator needs at least one executed step")
    x_prev = trace.second_last()
    _warn_if_damped(algorithm, x_prev, trace.theta)
    costs = CostCounters()
    started = time.perf_counter()
    jac = algorithm.jac_theta(x_prev, trace.theta)
    costs.jac_theta_evals += 1
    costs.wall_time = time.perf_counter() - started
    _check_finite(jac, "one-step Jacobian")
    return JacobianEstimate(matrix=jac, method=Method.ONE_STEP, at_iteration=trace.k, costs=costs)


def jac_onestep_k(
    algorithm: AlgorithmMap, trace: IterationTrace, window: int
) -> JacobianEstimate:
    """Truncated propagation through only the last `window` trace steps.

    Equivalent to the one-step estimator applied to the `window`-fold
    composition of the map, but reuses the recorded iterates instead of
    re-running the forward pass.  window = 1 reduces to jac_onestep; window
    equal to the trace length (with a parameter-independent start) recovers
    the fully unrolled estimate.
    """
    if trace.k < 1 or len(trace.iterates) < 2:
        raise EmptyTraceError("K-step estimator needs at least one executed step")
    if window < 1:
        raise ValueError("window must be at least 1")
    stored = len(trace.iterates) - 1
    if window > stored:
        raise ValueError(f"window {window} exceeds the {stored} stored steps")
    n, m = algorithm.dims()
    theta = trace.theta
    costs = CostCounters()
    started = time.perf_counter()
    jac = np.zeros((n, m))
    for x in trace.iterates[-window - 1 : -1]:
        jac = algorithm.jac_x(x, theta) @ jac + algorithm.jac_theta(x, theta)
        costs.jac_x_evals += 1
        costs.jac_theta_evals += 1
    costs.wall_time = time.perf_counter() - started
    _check_finite(jac, "K-step Jacobian")
    return JacobianEstimate(
        matrix=jac,
        method=Method.K_STEP,
        at_iteration=trace.k,
        costs=costs,
        window=window,
    )


def jac_finite_difference(
    algorithm: AlgorithmMap,
    theta,
    solver_tol: float = 1e-12,
    step: float = 1e-6,
    x0=None,
    max_iter: int = 100_000,
) -> JacobianEstimate:
    """Ground-truth oracle: central differences of the fixed point in theta.

    For each parameter coordinate, solves the recursion at theta +/- step to
    solver_tol and forms the difference quotient.  Raises NoConvergenceError
    if any perturbed solve fails to reach tolerance.  Independent of every
    analytic estimator: it only ever calls apply.
    """
    theta = np.asarray(theta, dtype=np.float64)
    n, m = algorithm.dims()
    if theta.shape != (m,):
        raise DimensionMismatchError(f"theta has shape {theta.shape}, expected ({m},)")
    start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64)
    costs = CostCounters()
    started = time.perf_counter()
    jac = np.zeros((n, m))
    for j in range(m):
        shift = np.zeros(m)
        shift[j] = step
        solutions = []
        for signed in (theta + shift, theta - shift):
            trace = iterate(
                algorithm, start, signed, max_iter=max_iter, tol=solver_tol,
                window=1, counters=costs,
            )
            if not trace.converged:
                raise NoConvergenceError(
                    f"perturbed solve for coordinate {j} did not reach {solver_tol:g}"
                )
            solutions.append(trace.last())
        jac[:, j] = (solutions[0] - solutions[1]) / (2.0 * step)
    costs.wall_time = time.perf_counter() - started
    _check_finite(jac, "finite-difference Jacobian")
    return JacobianEstimate(
        matrix=jac, method=Method.FINITE_DIFFERENCE, at_iteration=0, costs=costs
    )


def finite_difference_map_jacobians(
    algorithm: AlgorithmMap, x, theta, step: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians of apply at one point.

    Used to check that a map's analytic jac_x / jac_theta agree with its
    apply; the consistency tolerance used by the self-test suite is 1e-5.
    """
    x = np.asarray(x, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    n, m = algorithm.dims()
    jx = np.zeros((n, n))
    for j in range(n):
        shift = np.zeros(n)
        shift[j] = step
        jx[:, j] = (
            algorithm.apply(x + shift, theta) - algorithm.apply(x - shift, theta)
        ) / (2.0 * step)
    jt = np.zeros((n, m))
    for j in range(m):
        shift = np.zeros(m)
        shift[j] = step
        jt[:, j] = (
            algorithm.apply(x, theta + shift) - algorithm.apply(x, theta - shift)
        ) / (2.0 * step)
    return jx, jt
