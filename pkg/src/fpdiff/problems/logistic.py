"""Sample-weighted regularized logistic regression solved by Newton's
method with backtracking.

The objective in the regression vector x, for per-sample weights theta > 0,
margins t_i = y_i <a_i, x> and loss(t) = log(1 + exp(-t)), is

    f(x, theta) = sum_i theta_i * loss(t_i) + lam * ||x_without_intercept||^2

The design matrix carries an all-ones first column for the intercept, which
is not penalized.  One algorithm step is a damped Newton step; close to the
solution the backtracking accepts the unit step and the map becomes the
smooth pure-Newton map

    F(x, theta) = x - H(x, theta)^{-1} g(x, theta)

whose analytic Jacobians below are derived for that unit-step regime by
differentiating the linear solve: with u = H^{-1} g,

    jac_x     = H^{-1} * A^T Diag(theta * loss'''(t) * y * (A u)) A
    jac_theta = -H^{-1} * [column_i  a_i * (loss'(t_i) y_i - loss''(t_i) (a_i^T u))]

At the solution g = 0, so u = 0 and the state Jacobian vanishes, which is
what makes the one-step estimator asymptotically exact here.

A squared loss 0.5*(1-t)^2 can be substituted for testing: Newton then
solves the problem in a single step and the one-step estimator is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LineSearchFailedError
from ..fixed_point import AlgorithmMap
from ..linalg import (
    as_matrix,
    as_vector,
    cholesky_factor,
    cholesky_solve,
    cholesky_solve_factored,
)


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    exp_t = np.exp(t[~pos])
    out[~pos] = exp_t / (1.0 + exp_t)
    return out


def _logistic_derivatives(t: np.ndarray):
    """loss, loss', loss'', loss''' of t -> log(1 + exp(-t))."""
    sig = _sigmoid(t)
    value = np.logaddexp(0.0, -t)
    first = sig - 1.0
    second = sig * (1.0 - sig)
    third = second * (1.0 - 2.0 * sig)
    return value, first, second, third


def _squared_derivatives(t: np.ndarray):
    """Test-mode quadratic loss 0.5*(1-t)^2; Newton solves it in one step."""
    value = 0.5 * (1.0 - t) ** 2
    first = t - 1.0
    second = np.ones_like(t)
    third = np.zeros_like(t)
    return value, first, second, third


_LOSSES = {"logistic": _logistic_derivatives, "squared": _squared_derivatives}


@dataclass(frozen=True)
class LogisticNewton:
    design: np.ndarray
    labels: np.ndarray
    lam: float
    ls_shrink: float = 0.5
    ls_slope: float = 1e-4
    ls_max_halvings: int = 50
    loss: str = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "design", as_matrix(self.design))
        object.__setattr__(self, "labels", as_vector(self.labels))
        if self.design.shape[0] != self.labels.shape[0]:
            raise ValueError("design and labels disagree on the sample count")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be -1 or +1")
        if not np.all(self.design[:, 0] == 1.0):
            raise ValueError("first design column must be the all-ones intercept")
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.loss not in _LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @classmethod
    def synthetic(
        cls, n_samples: int, n_features: int, lam: float, seed: int
    ) -> "LogisticNewton":
        """Two Gaussian class-conditional clouds with an intercept column."""
        rng = np.random.default_rng(seed)
        labels = np.where(np.arange(n_samples) % 2 == 0, 1.0, -1.0)
        centers = rng.standard_normal(n_features)
        points = labels[:, None] * centers[None, :] + rng.standard_normal(
            (n_samples, n_features)
        )
        design = np.hstack([np.ones((n_samples, 1)), points])
        return cls(design=design, labels=labels, lam=lam)


class NewtonMap(AlgorithmMap):
    """Damped Newton step; Jacobians are those of the unit-step map."""

    def __init__(self, prob: LogisticNewton):
        self.prob = prob
        self._loss = _LOSSES[prob.loss]
        n = prob.design.shape[1]
        penalty = np.ones(n)
        penalty[0] = 0.0  # intercept is not regularized
        self._penalty = penalty

    def dims(self):
        return self.prob.design.shape[1], self.prob.design.shape[0]

    def _margins(self, x):
        return self.prob.labels * (self.prob.design @ x)

    def objective(self, x, theta) -> float:
        value = self._loss(self._margins(x))[0]
        reg = self.prob.lam * float(np.sum(self._penalty * x * x))
        return float(theta @ value) + reg

    def gradient(self, x, theta) -> np.ndarray:
        _, first, _, _ = self._loss(self._margins(x))
        data = self.prob.design.T @ (theta * first * self.prob.labels)
        return data + 2.0 * self.prob.lam * self._penalty * x

    def hessian(self, x, theta) -> np.ndarray:
        _, _, second, _ = self._loss(self._margins(x))
        weights = theta * second
        data = self.prob.design.T @ (weights[:, None] * self.prob.design)
        return data + 2.0 * self.prob.lam * np.diag(self._penalty)

    def _direction(self, x, theta):
        grad = self.gradient(x, theta)
        return -cholesky_solve(self.hessian(x, theta), grad), grad

    def _negligible(self, x, direction) -> bool:
        # at the fixed point the Armijo comparison degenerates to rounding
        # noise; accept the (vanishing) unit step outright
        return float(np.linalg.norm(direction)) <= 1e-14 * (
            1.0 + float(np.linalg.norm(x))
        )

    @staticmethod
    def _rounding_slack(value: float) -> float:
        # once the achievable decrease drops below the rounding noise of the
        # objective, a strict Armijo comparison rejects perfectly good unit
        # steps; allow that much slack so the endgame stays quadratic
        return 16.0 * np.finfo(np.float64).eps * (1.0 + abs(value))

    def in_unit_step_region(self, x, theta) -> bool:
        """Whether backtracking at x would accept the full Newton step."""
        direction, grad = self._direction(x, theta)
        if self._negligible(x, direction):
            return True
        value = self.objective(x, theta)
        slope = self.prob.ls_slope * float(grad @ direction)
        cap = value + slope + self._rounding_slack(value)
        return self.objective(x + direction, theta) <= cap

    def apply(self, x, theta):
        direction, grad = self._direction(x, theta)
        if self._negligible(x, direction):
            return x + direction
        value = self.objective(x, theta)
        slope = self.prob.ls_slope * float(grad @ direction)
        slack = self._rounding_slack(value)
        step = 1.0
        for _ in range(self.prob.ls_max_halvings + 1):
            if self.objective(x + step * direction, theta) <= value + step * slope + slack:
                return x + step * direction
            step *= self.prob.ls_shrink
        raise LineSearchFailedError(
            f"no sufficient decrease after {self.prob.ls_max_halvings} halvings"
        )

    def jac_x(self, x, theta):
        a = self.prob.design
        hess = self.hessian(x, theta)
        factor = cholesky_factor(hess)
        u = cholesky_solve_factored(factor, self.gradient(x, theta))
        _, _, _, third = self._loss(self._margins(x))
        w3 = theta * third * self.prob.labels * (a @ u)
        curvature_shift = a.T @ (w3[:, None] * a)
        return cholesky_solve_factored(factor, curvature_shift)

    def jac_theta(self, x, theta):
        a = self.prob.design
        hess = self.hessian(x, theta)
        factor = cholesky_factor(hess)
        u = cholesky_solve_factored(factor, self.gradient(x, theta))
        _, first, second, _ = self._loss(self._margins(x))
        col_scale = first * self.prob.labels - second * (a @ u)
        return -cholesky_solve_factored(factor, a.T * col_scale)


def newton_map(prob: LogisticNewton) -> NewtonMap:
    return NewtonMap(prob)
