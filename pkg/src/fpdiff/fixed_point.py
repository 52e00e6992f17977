"""Parametric algorithm maps, the forward recursion, and trace bookkeeping.

An iterative algorithm is modeled as a map F taking a state x and a
parameter vector theta to the next state.  Running the recursion
x_{i+1} = F(x_i, theta) to (approximate) convergence produces the solver
output; everything downstream (estimators, bounds, bilevel descent) only
ever sees the map interface and the recorded trace.
"""

from __future__ import annotations

import abc
import time
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergenceError, NonFiniteIterateError
from .linalg import operator_norm


class AlgorithmMap(abc.ABC):
    """One step of a parametric iterative algorithm.

    Implementations must be immutable and deterministic: apply, jac_x and
    jac_theta are pure functions of (x, theta), so identical inputs give
    bitwise-identical outputs and instances can be shared across threads.
    jac_x and jac_theta are the analytic Jacobians of apply with respect to
    the state and the parameters; their consistency with apply is checked
    against central finite differences by the estimator-side oracle.
    """

    @abc.abstractmethod
    def apply(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Next state F(x, theta)."""

    @abc.abstractmethod
    def jac_x(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """n-by-n Jacobian of apply with respect to x."""

    @abc.abstractmethod
    def jac_theta(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """n-by-m Jacobian of apply with respect to theta."""

    @abc.abstractmethod
    def dims(self) -> tuple[int, int]:
        """(state dimension n, parameter dimension m)."""


@dataclass
class CostCounters:
    """Work counters for one operation; all fields only ever increase."""

    map_evals: int = 0
    jac_x_evals: int = 0
    jac_theta_evals: int = 0
    linear_solves: int = 0
    wall_time: float = 0.0


@dataclass
class IterationTrace:
    """Record of a forward run x_0 ... x_k.

    iterates holds the stored window of the sequence (all of it unless the
    run used windowed storage, in which case start_index gives the global
    index of iterates[0]).  step_residuals[i] is the 2-norm of
    x_{i+1} - x_i for every executed step; residuals are always kept in
    full.  local_contractions caches per-iterate values of
    ||jac_x(x_i, theta)||_op once estimate_contraction has run.
    """

    iterates: list[np.ndarray]
    step_residuals: list[float]
    theta: np.ndarray
    converged: bool
    k: int
    tol: float
    start_index: int = 0
    local_contractions: list[float] | None = None

    def last(self) -> np.ndarray:
        return self.iterates[-1]

    def second_last(self) -> np.ndarray:
        if len(self.iterates) < 2:
            raise ValueError("trace holds fewer than two iterates")
        return self.iterates[-2]

    def prefix(self, k: int) -> "IterationTrace":
        """Sub-trace covering x_0 ... x_k; requires full storage."""
        if self.start_index != 0:
            raise ValueError("prefix needs a trace with full storage")
        if not 0 <= k <= self.k:
            raise ValueError(f"prefix length {k} outside 0..{self.k}")
        return IterationTrace(
            iterates=self.iterates[: k + 1],
            step_residuals=self.step_residuals[:k],
            theta=self.theta,
            converged=self.converged and k == self.k,
            k=k,
            tol=self.tol,
        )


def _check_dims(algorithm: AlgorithmMap, x0: np.ndarray, theta: np.ndarray) -> None:
    n, m = algorithm.dims()
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, map expects ({n},)")
    if theta.shape != (m,):
        raise ValueError(f"theta has shape {theta.shape}, map expects ({m},)")


def iterate(
    algorithm: AlgorithmMap,
    x0,
    theta,
    max_iter: int,
    tol: float,
    window: int | None = None,
    counters: CostCounters | None = None,
) -> IterationTrace:
    """Run x_{i+1} = F(x_i, theta) until the step norm drops to tol.

    Stops after max_iter steps regardless; the converged flag records which
    exit was taken.  window, when set, keeps only the last window+1 iterates
    in the trace (step residuals are always complete).  Raises
    NonFiniteIterateError as soon as an iterate picks up NaN/Inf.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    theta = np.asarray(theta, dtype=np.float64)
    _check_dims(algorithm, x, theta)
    if tol < 0.0:
        raise ValueError("tol must be nonnegative")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    started = time.perf_counter()
    iterates = [x]
    residuals: list[float] = []
    converged = False
    dropped = 0
    for i in range(max_iter):
        x_next = algorithm.apply(iterates[-1], theta)
        if counters is not None:
            counters.map_evals += 1
        if not np.all(np.isfinite(x_next)):
            raise NonFiniteIterateError(f"non-finite state at iteration {i + 1}")
        residual = float(np.linalg.norm(x_next - iterates[-1]))
        iterates.append(x_next)
        residuals.append(residual)
        if window is not None and len(iterates) > window + 1:
            iterates.pop(0)
            dropped += 1
        if residual <= tol:
            converged = True
            break
    if counters is not None:
        counters.wall_time += time.perf_counter() - started
    return IterationTrace(
        iterates=iterates,
        step_residuals=residuals,
        theta=theta,
        converged=converged,
        k=len(residuals),
        tol=tol,
        start_index=dropped,
    )


def reference_fixed_point(
    algorithm: AlgorithmMap,
    x0,
    theta,
    tol: float = 1e-13,
    max_iter: int = 100_000,
) -> np.ndarray:
    """High-accuracy fixed point used as ground truth by tests and oracles.

    Raises NoConvergenceError if the step norm never reaches tol.
    """
    trace = iterate(algorithm, x0, theta, max_iter=max_iter, tol=tol, window=1)
    if not trace.converged:
        raise NoConvergenceError(
            f"no fixed point to tol {tol:g} within {max_iter} iterations"
        )
    return trace.last()


def estimate_contraction(algorithm: AlgorithmMap, trace: IterationTrace) -> float:
    """Empirical contraction factor: max of ||jac_x||_op over the trace.

    Also fills trace.local_contractions.  This observes the Jacobian only
    along the visited iterates, so for maps without a known global
    contraction constant it is a heuristic lower estimate of the true one.
    """
    if not trace.iterates:
        raise ValueError("empty trace")
    values = [
        operator_norm(algorithm.jac_x(x, trace.theta)) for x in trace.iterates
    ]
    trace.local_contractions = values
    return max(values)


@dataclass(frozen=True)
class _ComposedMap(AlgorithmMap):
    """K-fold composition of a map, with chain-rule Jacobians.

    Differentiating the composition through its K inner applications gives
    jac_x as the product of the per-step state Jacobians and jac_theta as
    the propagated sum; if the inner map contracts with factor rho, the
    composition contracts with rho**K.
    """

    inner: AlgorithmMap
    steps: int

    def dims(self) -> tuple[int, int]:
        return self.inner.dims()

    def apply(self, x, theta):
        for _ in range(self.steps):
            x = self.inner.apply(x, theta)
        return x

    def jac_x(self, x, theta):
        n, _ = self.inner.dims()
        product = np.eye(n)
        for _ in range(self.steps):
            product = self.inner.jac_x(x, theta) @ product
            x = self.inner.apply(x, theta)
        return product

    def jac_theta(self, x, theta):
        n, m = self.inner.dims()
        jac = np.zeros((n, m))
        for _ in range(self.steps):
            jac = self.inner.jac_x(x, theta) @ jac + self.inner.jac_theta(x, theta)
            x = self.inner.apply(x, theta)
        return jac


def compose_k(algorithm: AlgorithmMap, steps: int) -> AlgorithmMap:
    """Map performing `steps` inner iterations per application."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if steps == 1:
        return algorithm
    return _ComposedMap(inner=algorithm, steps=steps)
