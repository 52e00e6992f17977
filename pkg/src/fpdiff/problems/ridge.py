"""Weighted ridge regression solved by gradient descent.

Objective in x for sample weights theta >= 0:

    0.5 * sum_i theta_i * (y_i - <a_i, x>)^2 + 0.5 * lam * ||x||^2

One gradient step is F(x, theta) = x - step * (A^T(theta * (A x - y)) + lam x),
whose state Jacobian is I - step * H(theta) with the Hessian
H(theta) = A^T Diag(theta) A + lam*I  and whose parameter Jacobian has
column i equal to -step * (<a_i, x> - y_i) * a_i.  Differentiating the
normal equations H(theta) xbar = A^T Diag(theta) y gives the closed-form
ground truth: column i of the fixed-point Jacobian is
H(theta)^{-1} a_i (y_i - <a_i, xbar>).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bounds import ConstantsEstimate, Provenance
from ..fixed_point import AlgorithmMap
from ..linalg import as_matrix, as_vector, cholesky_solve, operator_norm
from .quadratic import gradient_step_size


@dataclass(frozen=True)
class WeightedRidge:
    design: np.ndarray
    targets: np.ndarray
    lam: float
    step: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "design", as_matrix(self.design))
        object.__setattr__(self, "targets", as_vector(self.targets))
        if self.design.shape[0] != self.targets.shape[0]:
            raise ValueError("design and targets disagree on the sample count")
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")

    @classmethod
    def synthetic(
        cls,
        n_samples: int,
        n_features: int,
        cond: float,
        seed: int,
        lam: float = 0.1,
    ) -> "WeightedRidge":
        """Gaussian-basis design shaped so that the Hessian at all-ones
        weights has the requested condition number.

        The singular values of the design are spread so the Hessian spectrum
        runs from 2*lam to cond*2*lam.
        """
        if cond <= 1.0:
            raise ValueError("cond must exceed 1")
        rng = np.random.default_rng(seed)
        left, _ = np.linalg.qr(rng.standard_normal((n_samples, n_features)))
        right, _ = np.linalg.qr(rng.standard_normal((n_features, n_features)))
        low = lam  # smallest squared singular value, gives min eig 2*lam
        high = cond * 2.0 * lam - lam
        svals = np.sqrt(np.geomspace(low, high, n_features))
        design = (left * svals) @ right.T
        coeffs = rng.standard_normal(n_features)
        targets = design @ coeffs + 0.1 * rng.standard_normal(n_samples)
        return cls(design=design, targets=targets, lam=lam)

    def hessian(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        n = self.design.shape[1]
        return self.design.T @ (theta[:, None] * self.design) + self.lam * np.eye(n)

    def hessian_extremes(self, theta) -> tuple[float, float]:
        eigs = np.linalg.eigvalsh(self.hessian(theta))
        return float(eigs[0]), float(eigs[-1])

    def fixed_point(self, theta) -> np.ndarray:
        """Direct solve of the normal equations at the given weights."""
        theta = np.asarray(theta, dtype=np.float64)
        rhs = self.design.T @ (theta * self.targets)
        return cholesky_solve(self.hessian(theta), rhs)


def ridge_truth_jacobian(prob: WeightedRidge, theta) -> np.ndarray:
    """Closed-form parameter Jacobian of the ridge solution."""
    theta = np.asarray(theta, dtype=np.float64)
    xbar = prob.fixed_point(theta)
    residual = prob.targets - prob.design @ xbar
    rhs = prob.design.T * residual  # column i = a_i * (y_i - <a_i, xbar>)
    return cholesky_solve(prob.hessian(theta), rhs)


class RidgeMap(AlgorithmMap):
    def __init__(self, prob: WeightedRidge, step: float):
        if step <= 0.0:
            raise ValueError("step must be positive")
        self.prob = prob
        self.step = step

    def dims(self):
        return self.prob.design.shape[1], self.prob.design.shape[0]

    def apply(self, x, theta):
        a = self.prob.design
        grad = a.T @ (theta * (a @ x - self.prob.targets)) + self.prob.lam * x
        return x - self.step * grad

    def jac_x(self, x, theta):
        n = self.prob.design.shape[1]
        return np.eye(n) - self.step * self.prob.hessian(theta)

    def jac_theta(self, x, theta):
        residual = self.prob.design @ x - self.prob.targets
        return -self.step * (self.prob.design.T * residual)

    def analytic_constants(self, theta) -> ConstantsEstimate:
        """Closed-form bound constants at the evaluation weights.

        The contraction factor comes from the exact Hessian spectrum; the
        parameter-Jacobian norm is evaluated at the exact fixed point (the
        bounds only ever need it there); the Lipschitz modulus uses the
        global estimate step * ||A||_op * max_i ||a_i||, an upper bound on
        ||jac_theta(x) - jac_theta(x')||_op / ||x - x'||.
        """
        theta = np.asarray(theta, dtype=np.float64)
        eig_min, eig_max = self.prob.hessian_extremes(theta)
        rho = max(abs(1.0 - self.step * eig_min), abs(1.0 - self.step * eig_max))
        l_f = operator_norm(self.jac_theta(self.prob.fixed_point(theta), theta))
        row_norms = np.linalg.norm(self.prob.design, axis=1)
        l_j = self.step * operator_norm(self.prob.design) * float(row_norms.max())
        return ConstantsEstimate(
            rho=rho,
            l_f=l_f,
            l_j_theta=l_j,
            l_j_joint=l_j,  # jac_x is constant in x, so the joint modulus matches
            provenance=Provenance.ANALYTIC,
        )


def ridge_map(
    prob: WeightedRidge,
    theta_ref=None,
    step_choice: str = "two_over_muL",
) -> RidgeMap:
    """Gradient-descent map for a ridge problem.

    The step size is prob.step when set; otherwise it is derived from the
    Hessian spectrum at theta_ref (all-ones weights by default) via the
    requested classic rule.
    """
    if prob.step is not None:
        return RidgeMap(prob, prob.step)
    if theta_ref is None:
        theta_ref = np.ones(prob.design.shape[0])
    eig_min, eig_max = prob.hessian_extremes(theta_ref)
    return RidgeMap(prob, gradient_step_size(eig_min, eig_max, step_choice))
