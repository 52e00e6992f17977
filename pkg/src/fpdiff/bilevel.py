"""Hypergradient descent on an outer objective of an inner fixed point.

The outer problem minimizes g(x(theta)) where x(theta) is the fixed point
of an inner algorithm map.  Each outer step runs the inner recursion for a
budget of iterations, forms the parameter Jacobian with any of the
estimators, and moves theta along the estimated gradient
J(theta)^T grad_g(x_k).  With the one-step estimator this is exactly what
reverse differentiation of the last inner iteration would produce.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteIterateError, StepSizeMismatchError
from .estimators import (
    Method,
    jac_autodiff,
    jac_finite_difference,
    jac_implicit,
    jac_onestep,
    jac_onestep_k,
)
from .fixed_point import AlgorithmMap, IterationTrace, iterate


@dataclass
class BilevelProblem:
    """Inner fixed-point map plus the outer objective and its gradient.

    l_g and l_grad, when known, are the Lipschitz constants of g and of its
    gradient over the region the iterates visit; they feed the hypergradient
    bound.  inner_x0 is the (theta-independent) inner start, zeros by
    default.
    """

    inner: AlgorithmMap
    outer_value: Callable[[np.ndarray], float]
    outer_grad: Callable[[np.ndarray], np.ndarray]
    l_g: float | None = None
    l_grad: float | None = None
    inner_x0: np.ndarray | None = None

    def start_point(self) -> np.ndarray:
        if self.inner_x0 is not None:
            return np.asarray(self.inner_x0, dtype=np.float64)
        return np.zeros(self.inner.dims()[0])


def check_outer_gradient(
    problem: BilevelProblem, points, step: float = 1e-6
) -> float:
    """Largest deviation of outer_grad from central differences of
    outer_value over the probe points; callers assert against 1e-5."""
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=np.float64)
        grad = np.asarray(problem.outer_grad(x), dtype=np.float64)
        for j in range(x.size):
            shift = np.zeros_like(x)
            shift[j] = step
            fd = (problem.outer_value(x + shift) - problem.outer_value(x - shift)) / (
                2.0 * step
            )
            worst = max(worst, abs(fd - grad[j]))
    return worst


def _estimate_jacobian(
    algorithm: AlgorithmMap,
    trace: IterationTrace,
    estimator: Method,
    window: int | None,
):
    if estimator is Method.AUTODIFF:
        return jac_autodiff(algorithm, trace)
    if estimator is Method.IMPLICIT:
        return jac_implicit(algorithm, trace.last(), trace.theta)
    if estimator is Method.ONE_STEP:
        return jac_onestep(algorithm, trace)
    if estimator is Method.K_STEP:
        if window is None:
            raise ValueError("K-step estimator needs a window")
        return jac_onestep_k(algorithm, trace, window)
    if estimator is Method.FINITE_DIFFERENCE:
        return jac_finite_difference(algorithm, trace.theta)
    raise ValueError(f"unsupported estimator {estimator}")


def hypergradient(
    problem: BilevelProblem,
    theta,
    inner_steps: int,
    estimator: Method = Method.ONE_STEP,
    window: int | None = None,
    inner_tol: float = 0.0,
) -> np.ndarray:
    """Estimated gradient of theta -> g(x(theta)) after a fixed inner budget.

    Runs the inner recursion for inner_steps iterations (or until the step
    residual hits inner_tol when that is positive), estimates the parameter
    Jacobian with the requested method, and returns J^T grad_g(x_k).
    """
    vec, _, _ = hypergradient_detailed(
        problem, theta, inner_steps, estimator, window, inner_tol
    )
    return vec


def hypergradient_detailed(
    problem: BilevelProblem,
    theta,
    inner_steps: int,
    estimator: Method = Method.ONE_STEP,
    window: int | None = None,
    inner_tol: float = 0.0,
):
    """hypergradient plus the inner trace and Jacobian estimate it used."""
    theta = np.asarray(theta, dtype=np.float64)
    trace = iterate(
        problem.inner, problem.start_point(), theta,
        max_iter=inner_steps, tol=inner_tol,
    )
    estimate = _estimate_jacobian(problem.inner, trace, estimator, window)
    vec = estimate.matrix.T @ np.asarray(
        problem.outer_grad(trace.last()), dtype=np.float64
    )
    return vec, trace, estimate


@dataclass
class HypergradientRun:
    """Trajectory of an outer descent; lists are indexed by outer step."""

    thetas: list[np.ndarray]
    hypergrads: list[np.ndarray]
    g_values: list[float]
    grad_norms: list[float]
    alpha_outer: float
    inner_steps: int
    estimator: Method
    inner_last: list[np.ndarray] = field(default_factory=list)
    inner_prev: list[np.ndarray] = field(default_factory=list)
    true_grad_norms: list[float] | None = None


def hypergradient_descent(
    problem: BilevelProblem,
    theta0,
    alpha_outer: float,
    outer_steps: int,
    inner_steps: int,
    estimator: Method = Method.ONE_STEP,
    window: int | None = None,
    inner_tol: float = 0.0,
    true_grad: Callable[[np.ndarray], np.ndarray] | None = None,
) -> HypergradientRun:
    """Outer gradient descent theta <- theta - alpha * hypergradient.

    Each outer evaluation restarts the inner recursion from the problem's
    fixed start point (no warm starting), so the per-step error analysis
    applies to every step identically.  true_grad, when supplied, is an
    oracle for the exact composed gradient and is only recorded.
    """
    if outer_steps < 1:
        raise ValueError("outer_steps must be at least 1")
    if alpha_outer <= 0.0:
        raise ValueError("alpha_outer must be positive")
    theta = np.asarray(theta0, dtype=np.float64).copy()
    run = HypergradientRun(
        thetas=[theta.copy()],
        hypergrads=[],
        g_values=[],
        grad_norms=[],
        alpha_outer=alpha_outer,
        inner_steps=inner_steps,
        estimator=estimator,
        true_grad_norms=[] if true_grad is not None else None,
    )
    for _ in range(outer_steps):
        vec, trace, _ = hypergradient_detailed(
            problem, theta, inner_steps, estimator, window, inner_tol
        )
        run.hypergrads.append(vec)
        run.g_values.append(float(problem.outer_value(trace.last())))
        run.grad_norms.append(float(np.linalg.norm(vec)))
        run.inner_last.append(trace.last())
        run.inner_prev.append(trace.second_last())
        if true_grad is not None:
            run.true_grad_norms.append(float(np.linalg.norm(true_grad(theta))))
        theta = theta - alpha_outer * vec
        if not np.all(np.isfinite(theta)):
            raise NonFiniteIterateError("outer iterate diverged")
        run.thetas.append(theta.copy())
    return run


RUN_CSV_HEADER = [
    "outer_step",
    "estimator",
    "g_value",
    "hypergrad_norm",
    "true_grad_norm",
    "per_step_bound",
]


def run_to_csv(run: HypergradientRun, per_step_bounds=None) -> str:
    """CSV serialization of a run, one row per outer step."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_CSV_HEADER)
    for i in range(len(run.hypergrads)):
        true_norm = "" if run.true_grad_norms is None else repr(run.true_grad_norms[i])
        bound = "" if per_step_bounds is None else repr(per_step_bounds[i])
        writer.writerow(
            [
                str(i),
                run.estimator.value,
                repr(run.g_values[i]),
                repr(run.grad_norms[i]),
                true_norm,
                bound,
            ]
        )
    return buf.getvalue()


def criticality_certificate(
    run: HypergradientRun,
    eps: float,
    smoothness: float,
    f_star_lower: float,
) -> float:
    """Certified cap on the smallest squared composed-gradient norm.

    Valid when the run used the step size 1/smoothness and eps bounds, for
    every outer step, the deviation between the step actually taken and an
    exact gradient step.  The certificate is
    eps^2 + 2*(g_0 - f_star_lower) / (smoothness * steps).
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    steps = len(run.hypergrads)
    if steps < 1:
        raise ValueError("run has no outer steps")
    if abs(run.alpha_outer * smoothness - 1.0) > 1e-9:
        raise StepSizeMismatchError(
            f"run used alpha={run.alpha_outer!r}, certificate needs 1/smoothness"
        )
    return eps**2 + 2.0 * (run.g_values[0] - f_star_lower) / (smoothness * steps)
