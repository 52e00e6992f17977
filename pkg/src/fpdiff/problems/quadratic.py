"""Strongly convex quadratic inner problem driven by gradient descent.

The objective is 0.5 x^T Q x - theta^T x with SPD Q, so one gradient step
is F(x, theta) = x - step * (Q x - theta).  The fixed point is Q^{-1} theta,
the exact parameter Jacobian is Q^{-1}, the state Jacobian I - step * Q is
constant, and every bound constant is available in closed form.  This is
the workhorse problem for bound verification with exact constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bounds import ConstantsEstimate, Provenance
from ..fixed_point import AlgorithmMap
from ..linalg import as_matrix, cholesky_solve


def gradient_step_size(eig_min: float, eig_max: float, choice: str) -> float:
    """Classic gradient-descent step sizes for a [eig_min, eig_max] spectrum."""
    if choice == "inv_L":
        return 1.0 / eig_max
    if choice == "two_over_muL":
        return 2.0 / (eig_min + eig_max)
    raise ValueError(f"unknown step choice {choice!r}")


@dataclass(frozen=True)
class QuadraticInner:
    """SPD quadratic with linear parameter coupling x - step*(Q x - theta)."""

    quad: np.ndarray
    step: float
    eig_min: float
    eig_max: float

    def __post_init__(self):
        object.__setattr__(self, "quad", as_matrix(self.quad))
        n, m = self.quad.shape
        if n != m:
            raise ValueError("quad must be square")
        if not 0.0 < self.eig_min <= self.eig_max:
            raise ValueError("need 0 < eig_min <= eig_max")
        if not 0.0 < self.step < 2.0 / self.eig_max:
            raise ValueError("step must lie in (0, 2/eig_max) to contract")

    @classmethod
    def random(
        cls,
        n: int,
        seed: int,
        eig_min: float = 0.5,
        eig_max: float = 5.0,
        step_choice: str = "two_over_muL",
    ) -> "QuadraticInner":
        """SPD matrix with a log-spaced spectrum and random eigenbasis."""
        rng = np.random.default_rng(seed)
        eigs = np.geomspace(eig_min, eig_max, n)
        basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
        quad = (basis * eigs) @ basis.T
        quad = 0.5 * (quad + quad.T)
        return cls(
            quad=quad,
            step=gradient_step_size(eig_min, eig_max, step_choice),
            eig_min=eig_min,
            eig_max=eig_max,
        )

    def contraction(self) -> float:
        """Exact contraction factor max(|1 - step*eig|) over the spectrum."""
        return max(abs(1.0 - self.step * self.eig_min),
                   abs(1.0 - self.step * self.eig_max))

    def truth_jacobian(self) -> np.ndarray:
        """Exact parameter Jacobian of the fixed point: Q^{-1}."""
        return cholesky_solve(self.quad, np.eye(self.quad.shape[0]))

    def fixed_point(self, theta) -> np.ndarray:
        return cholesky_solve(self.quad, np.asarray(theta, dtype=np.float64))


class QuadraticMap(AlgorithmMap):
    def __init__(self, prob: QuadraticInner):
        self.prob = prob
        self._n = prob.quad.shape[0]

    def dims(self):
        return self._n, self._n

    def apply(self, x, theta):
        return x - self.prob.step * (self.prob.quad @ x - theta)

    def jac_x(self, x, theta):
        return np.eye(self._n) - self.prob.step * self.prob.quad

    def jac_theta(self, x, theta):
        return self.prob.step * np.eye(self._n)

    def analytic_constants(self, theta=None) -> ConstantsEstimate:
        # jac_theta is the constant step*I and jac_x does not move with x,
        # so both Lipschitz moduli vanish
        return ConstantsEstimate(
            rho=self.prob.contraction(),
            l_f=self.prob.step,
            l_j_theta=0.0,
            l_j_joint=0.0,
            provenance=Provenance.ANALYTIC,
        )


def quadratic_map(prob: QuadraticInner) -> QuadraticMap:
    return QuadraticMap(prob)
