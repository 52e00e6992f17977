"""Convex quadratic programs solved by a primal-dual interior-point method.

The problem, parametrized by the equality right-hand side theta, is

    min_x  0.5 x^T Q x + q^T x   s.t.  A x = theta,  G x <= h

The fixed-point state concatenates u = (x, s, nu, z): primal variables,
inequality slacks, equality multipliers, inequality multipliers, so its
dimension is n + p + m + p.  One application solves the Newton system of
the perturbed optimality conditions

    Q x + q + A^T nu + G^T z = 0
    A x - theta              = 0
    G x + s - h              = 0
    s * z - sigma * gap      = 0,   gap = s^T z / p

for a direction d and moves u + alpha*d, with alpha chosen by the
fraction-to-boundary rule so s and z stay strictly positive.  The duality
measure shrinks geometrically, so step residuals do too and the generic
iteration driver applies unchanged.

Jacobians of one step differentiate the linear solve: with K the Newton
matrix (which depends on u through its complementarity rows) and r the
residual vector,

    d(u, theta)   = -K(u)^{-1} r(u, theta)
    d_u d         = -K^{-1} (d_u r + (d_u K)[d])
    d_theta d     =  K^{-1} [0; I; 0; 0]

alpha is treated as locally constant, which is exact whenever the step is
untruncated (alpha = 1); near the solution that is always the case, and the
estimators are only ever evaluated there.  The differentiated quantity of
interest is the primal block of the state Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InfeasibleError, SingularMatrixError, StepTooSmallError
from ..fixed_point import AlgorithmMap, IterationTrace
from ..linalg import as_matrix, as_vector, lu_factor, lu_solve, lu_solve_factored

_MIN_STEP = 1e-13


@dataclass(frozen=True)
class QpInstance:
    quad: np.ndarray
    lin: np.ndarray
    eq: np.ndarray
    ineq: np.ndarray
    ineq_rhs: np.ndarray
    sigma: float = 0.1
    boundary: float = 0.99
    stop_gap: float = 1e-10
    max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, "quad", as_matrix(self.quad))
        object.__setattr__(self, "lin", as_vector(self.lin))
        object.__setattr__(self, "eq", as_matrix(self.eq))
        ineq = np.asarray(self.ineq, dtype=np.float64).reshape(-1, self.quad.shape[0])
        object.__setattr__(self, "ineq", ineq)
        rhs = np.asarray(self.ineq_rhs, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "ineq_rhs", rhs)
        n = self.quad.shape[0]
        if self.quad.shape != (n, n) or self.lin.shape != (n,):
            raise ValueError("inconsistent objective dimensions")
        if self.eq.shape[1] != n or self.ineq.shape[1] != n:
            raise ValueError("constraint matrices disagree with the variable count")
        if self.ineq.shape[0] != self.ineq_rhs.shape[0]:
            raise ValueError("inequality rows and right-hand side disagree")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0.0 < self.boundary < 1.0:
            raise ValueError("boundary must lie in (0, 1)")

    @property
    def n(self) -> int:
        return self.quad.shape[0]

    @property
    def m_eq(self) -> int:
        return self.eq.shape[0]

    @property
    def p(self) -> int:
        return self.ineq.shape[0]

    @property
    def state_dim(self) -> int:
        return self.n + self.p + self.m_eq + self.p

    @classmethod
    def synthetic(cls, n: int, m_eq: int, p: int, seed: int, **params) -> tuple:
        """Random strictly convex instance plus a strictly feasible theta.

        Returns (instance, theta): theta is chosen as A @ x_feas for a point
        x_feas that satisfies the inequalities with a margin of at least
        0.5, so small parameter perturbations stay strictly feasible.
        """
        rng = np.random.default_rng(seed)
        basis = rng.standard_normal((n, n))
        quad = basis @ basis.T / n + np.eye(n)
        lin = rng.standard_normal(n)
        eq = rng.standard_normal((m_eq, n))
        ineq = rng.standard_normal((p, n))
        x_feas = rng.standard_normal(n)
        ineq_rhs = ineq @ x_feas + rng.uniform(0.5, 1.5, size=p)
        theta = eq @ x_feas
        return cls(quad=quad, lin=lin, eq=eq, ineq=ineq, ineq_rhs=ineq_rhs,
                   **params), theta


def split_state(prob: QpInstance, u: np.ndarray):
    n, p, m = prob.n, prob.p, prob.m_eq
    return u[:n], u[n : n + p], u[n + p : n + p + m], u[n + p + m :]


def primal_part(prob: QpInstance, u: np.ndarray) -> np.ndarray:
    return u[: prob.n]


def primal_block(prob: QpInstance, jacobian: np.ndarray) -> np.ndarray:
    """Rows of the state Jacobian belonging to the primal variables."""
    return jacobian[: prob.n]


class InteriorPointMap(AlgorithmMap):
    def __init__(self, prob: QpInstance):
        self.prob = prob

    def dims(self):
        return self.prob.state_dim, self.prob.m_eq

    def residuals(self, u, theta) -> np.ndarray:
        prob = self.prob
        x, s, nu, z = split_state(prob, u)
        r_dual = prob.quad @ x + prob.lin + prob.eq.T @ nu + prob.ineq.T @ z
        r_eq = prob.eq @ x - theta
        r_ineq = prob.ineq @ x + s - prob.ineq_rhs
        if prob.p:
            gap = float(s @ z) / prob.p
            r_cent = s * z - prob.sigma * gap
        else:
            r_cent = np.zeros(0)
        return np.concatenate([r_dual, r_eq, r_ineq, r_cent])

    def optimality_error(self, u, theta) -> float:
        """Max-norm of the KKT residuals plus the duality measure."""
        prob = self.prob
        x, s, nu, z = split_state(prob, u)
        r_dual = prob.quad @ x + prob.lin + prob.eq.T @ nu + prob.ineq.T @ z
        r_eq = prob.eq @ x - theta
        parts = [np.abs(r_dual).max(), np.abs(r_eq).max() if prob.m_eq else 0.0]
        if prob.p:
            r_ineq = prob.ineq @ x + s - prob.ineq_rhs
            parts.append(np.abs(r_ineq).max())
            parts.append(float(s @ z) / prob.p)
        return float(max(parts))

    def _newton_matrix(self, u) -> np.ndarray:
        # rows follow the residual order (dual, eq, ineq, cent); columns
        # follow the state order (x, s, nu, z)
        prob = self.prob
        n, p, m = prob.n, prob.p, prob.m_eq
        _, s, _, z = split_state(prob, u)
        k = np.zeros((prob.state_dim, prob.state_dim))
        k[:n, :n] = prob.quad
        k[:n, n + p : n + p + m] = prob.eq.T
        k[:n, n + p + m :] = prob.ineq.T
        k[n : n + m, :n] = prob.eq
        k[n + m : n + m + p, :n] = prob.ineq
        k[n + m : n + m + p, n : n + p] = np.eye(p)
        k[n + m + p :, n : n + p] = np.diag(z)
        k[n + m + p :, n + p + m :] = np.diag(s)
        return k

    def _residual_jacobian(self, u) -> np.ndarray:
        prob = self.prob
        n, p, m = prob.n, prob.p, prob.m_eq
        _, s, _, z = split_state(prob, u)
        jac = self._newton_matrix(u)
        if p:
            # the centering target sigma * (s^T z / p) moves with the state
            jac[n + m + p :, n : n + p] -= prob.sigma / p * np.outer(np.ones(p), z)
            jac[n + m + p :, n + p + m :] -= prob.sigma / p * np.outer(np.ones(p), s)
        return jac

    def _direction(self, u, theta):
        factor = lu_factor(self._newton_matrix(u))
        direction = -lu_solve_factored(*factor, self.residuals(u, theta))
        return direction, factor

    def _step_length(self, u, direction) -> float:
        prob = self.prob
        if not prob.p:
            return 1.0
        _, s, _, z = split_state(prob, u)
        _, ds, _, dz = split_state(prob, direction)
        alpha = 1.0
        for value, delta in ((s, ds), (z, dz)):
            negative = delta < 0.0
            if np.any(negative):
                alpha = min(
                    alpha,
                    prob.boundary * float(np.min(-value[negative] / delta[negative])),
                )
        return alpha

    def apply(self, u, theta):
        direction, _ = self._direction(u, theta)
        alpha = self._step_length(u, direction)
        if alpha <= _MIN_STEP:
            raise StepTooSmallError(f"fraction-to-boundary step {alpha:.3e}")
        return u + alpha * direction

    def jac_x(self, u, theta):
        prob = self.prob
        n, p, m = prob.n, prob.p, prob.m_eq
        direction, factor = self._direction(u, theta)
        alpha = self._step_length(u, direction)
        jac_r = self._residual_jacobian(u)
        if p:
            _, ds, _, dz = split_state(prob, direction)
            # derivative of the Newton matrix itself, contracted with d
            jac_r[n + m + p :, n : n + p] += np.diag(dz)
            jac_r[n + m + p :, n + p + m :] += np.diag(ds)
        dim = prob.state_dim
        return np.eye(dim) - alpha * lu_solve_factored(*factor, jac_r)

    def jac_theta(self, u, theta):
        prob = self.prob
        n, p, m = prob.n, prob.p, prob.m_eq
        direction, factor = self._direction(u, theta)
        alpha = self._step_length(u, direction)
        rhs = np.zeros((prob.state_dim, m))
        rhs[n : n + m] = np.eye(m)
        return alpha * lu_solve_factored(*factor, rhs)


def qp_ip_map(prob: QpInstance) -> InteriorPointMap:
    return InteriorPointMap(prob)


def initial_state(prob: QpInstance, theta) -> np.ndarray:
    """Strictly interior starting state with an equality-feasible primal.

    The primal part is the least-norm solution of A x = theta; slacks are
    clipped away from zero (the residual formulation tolerates an initially
    inconsistent G x + s = h) and multipliers start at zero and one.
    """
    theta = np.asarray(theta, dtype=np.float64)
    n, m, p = prob.n, prob.m_eq, prob.p
    if m:
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = np.eye(n)
        kkt[:n, n:] = prob.eq.T
        kkt[n:, :n] = prob.eq
        rhs = np.concatenate([np.zeros(n), theta])
        x0 = lu_solve(kkt, rhs)[:n]
    else:
        x0 = np.zeros(n)
    slack = np.maximum(prob.ineq_rhs - prob.ineq @ x0, 1.0) if p else np.zeros(0)
    return np.concatenate([x0, slack, np.zeros(m), np.ones(p)])


def solve_qp(prob: QpInstance, theta, x0=None) -> IterationTrace:
    """Run the interior-point map until the KKT error drops to stop_gap.

    Raises InfeasibleError when the optimality error stagnates above 1e-6
    for 20 consecutive iterations, or when the iteration breaks down
    (blocked step, collapsed Newton matrix) while still far from optimal.
    """
    theta = np.asarray(theta, dtype=np.float64)
    ip_map = qp_ip_map(prob)
    u = initial_state(prob, theta) if x0 is None else np.asarray(x0, dtype=np.float64)
    iterates = [u]
    residuals: list[float] = []
    best_error = np.inf
    stalled = 0
    converged = False
    for _ in range(prob.max_iter):
        error = ip_map.optimality_error(iterates[-1], theta)
        if error <= prob.stop_gap:
            converged = True
            break
        if error < 0.99 * best_error:
            best_error = error
            stalled = 0
        else:
            stalled += 1
            if stalled >= 20 and error > 1e-6:
                raise InfeasibleError(
                    f"KKT error stagnated at {error:.3e} for 20 iterations"
                )
        try:
            u_next = ip_map.apply(iterates[-1], theta)
        except (StepTooSmallError, SingularMatrixError) as exc:
            if error > 1e-6:
                raise InfeasibleError(
                    f"iteration broke down at KKT error {error:.3e}: {exc}"
                ) from exc
            raise
        residuals.append(float(np.linalg.norm(u_next - iterates[-1])))
        iterates.append(u_next)
    return IterationTrace(
        iterates=iterates,
        step_residuals=residuals,
        theta=theta,
        converged=converged,
        k=len(residuals),
        tol=prob.stop_gap,
    )


def equality_qp_truth(prob: QpInstance, include_inactive: bool = False) -> np.ndarray:
    """Closed-form primal parameter Jacobian when no inequality binds.

    Solving the equality-constrained KKT system
    [[Q, A^T], [A, 0]] [x; nu] = [-q; theta] makes x affine in theta; its
    Jacobian is the top-right n-by-m block of the KKT inverse.
    """
    n, m = prob.n, prob.m_eq
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = prob.quad
    kkt[:n, n:] = prob.eq.T
    kkt[n:, :n] = prob.eq
    rhs = np.zeros((n + m, m))
    rhs[n:] = np.eye(m)
    return lu_solve(kkt, rhs)[:n]
