"""Experiment runners: accuracy curves, timing sweeps, bilevel descent and
the numerical self-test, all emitted as versioned CSV.

These are the operations behind the service endpoints; the CLI only
marshals flags into an ExperimentConfig and ships the returned CSV.
Accuracy and bilevel output is bit-for-bit reproducible for a fixed
(seed, config); timing values are machine-bound and only their ordering is
meaningful.
"""

from __future__ import annotations

import csv
import io
import time
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator

from . import bilevel as bl
from .bounds import bound_implicit, bound_onestep, estimate_constants
from .errors import ConfigError
from .estimators import (
    Method,
    finite_difference_map_jacobians,
    jac_autodiff,
    jac_finite_difference,
    jac_implicit,
    jac_onestep,
    jac_onestep_k,
)
from .fixed_point import iterate, reference_fixed_point
from .linalg import lu_solve, operator_norm
from .problems import (
    LogisticNewton,
    QpInstance,
    QuadraticInner,
    WeightedRidge,
    dumps_instance,
    initial_state,
    newton_map,
    primal_block,
    qp_ip_map,
    quadratic_map,
    ridge_map,
    ridge_truth_jacobian,
    solve_qp,
)

ExperimentName = Literal[
    "newton_logistic", "ip_qp", "ridge_gd", "quadratic_synthetic", "bilevel_ridge"
]
EstimatorName = Literal["autodiff", "implicit", "onestep", "kstep"]

_METHODS = {
    "autodiff": Method.AUTODIFF,
    "implicit": Method.IMPLICIT,
    "onestep": Method.ONE_STEP,
    "kstep": Method.K_STEP,
}

ACCURACY_SIZES = {
    "newton_logistic": [[40, 5]],
    "ip_qp": [[10, 3, 8]],
    "ridge_gd": [[50, 8]],
    "quadratic_synthetic": [[10]],
    "bilevel_ridge": [[50, 8]],
}
TIMING_SIZES = {
    "newton_logistic": [[200, 10], [500, 20], [1000, 30]],
    "ip_qp": [[10, 3, 8], [20, 5, 12], [40, 8, 20]],
}


class ExperimentConfig(BaseModel):
    """Parameters of one experiment run; unset sizes fall back to defaults."""

    experiment: ExperimentName
    sizes: list[list[int]] = Field(default_factory=list)
    seed: int = 0
    estimators: list[EstimatorName] = Field(
        default_factory=lambda: ["autodiff", "implicit", "onestep"]
    )
    k: int = 64
    window: int | None = None
    cond_target: float = 100.0
    alpha_choice: Literal["inv_L", "two_over_muL"] = "two_over_muL"
    reps: int = 5
    outer_steps: int = 50
    alpha_outer: float | None = None
    output_path: str | None = None
    dump_instances: str | None = None

    @field_validator("sizes")
    @classmethod
    def _positive_sizes(cls, value):
        for row in value:
            if not row or any(entry < 0 for entry in row):
                raise ValueError("size entries must be nonnegative and nonempty")
        return value

    @field_validator("estimators")
    @classmethod
    def _nonempty_estimators(cls, value):
        if not value:
            raise ValueError("estimators must be nonempty")
        return value

    @field_validator("cond_target")
    @classmethod
    def _cond_above_one(cls, value):
        if value <= 1.0:
            raise ValueError("cond_target must exceed 1")
        return value

    @field_validator("k")
    @classmethod
    def _k_positive(cls, value):
        if value < 1:
            raise ValueError("k must be at least 1")
        return value

    @field_validator("outer_steps")
    @classmethod
    def _outer_nonnegative(cls, value):
        if value < 0:
            raise ValueError("outer_steps must be nonnegative")
        return value


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(value) -> str:
    return repr(float(value))


def _grid(k_max: int) -> list[int]:
    ks = []
    k = 1
    while k < k_max:
        ks.append(k)
        k *= 2
    ks.append(k_max)
    return sorted(set(ks))


def _size_label(size) -> str:
    return "x".join(str(v) for v in size)


def default_window(cond_target: float) -> int:
    """Truncation window for the K-step estimator on ridge curves.

    One window per condition number of the Hessian: the composed map then
    contracts by roughly exp(-1) or exp(-2) per window depending on the
    step rule, which is what produces a visible plateau between the
    implicit and early unrolled errors.
    """
    return max(1, round(cond_target))


def _maybe_dump(config: ExperimentConfig, prob, size) -> None:
    if config.dump_instances:
        directory = Path(config.dump_instances)
        directory.mkdir(parents=True, exist_ok=True)
        name = f"{config.experiment}_{_size_label(size)}_seed{config.seed}.txt"
        (directory / name).write_text(dumps_instance(prob))


class _AccuracyCase:
    """One problem instance prepared for an accuracy sweep."""

    def __init__(self, algorithm, theta, x0, truth, reference, k_cap=None,
                 primal=None):
        self.algorithm = algorithm
        self.theta = theta
        self.x0 = x0
        self.truth = truth
        self.reference = reference
        self.k_cap = k_cap
        # rows of interest when the state carries auxiliary coordinates
        self.primal = primal if primal is not None else slice(None)


def _accuracy_case(config: ExperimentConfig, size) -> _AccuracyCase:
    seed = config.seed
    if config.experiment == "quadratic_synthetic":
        n = size[0]
        prob = QuadraticInner.random(n, seed=seed, step_choice=config.alpha_choice)
        _maybe_dump(config, prob, size)
        algorithm = quadratic_map(prob)
        theta = np.random.default_rng(seed).standard_normal(n)
        return _AccuracyCase(algorithm, theta, np.zeros(n),
                             prob.truth_jacobian(), prob.fixed_point(theta))
    if config.experiment == "ridge_gd":
        n_samples, n = size
        prob = WeightedRidge.synthetic(n_samples, n, cond=config.cond_target,
                                       seed=seed)
        _maybe_dump(config, prob, size)
        theta = np.ones(n_samples)
        algorithm = ridge_map(prob, theta_ref=theta,
                              step_choice=config.alpha_choice)
        return _AccuracyCase(algorithm, theta, np.zeros(n),
                             ridge_truth_jacobian(prob, theta),
                             prob.fixed_point(theta))
    if config.experiment == "newton_logistic":
        n_samples, n = size
        prob = LogisticNewton.synthetic(n_samples, n - 1, lam=0.1, seed=seed)
        _maybe_dump(config, prob, size)
        algorithm = newton_map(prob)
        theta = np.ones(n_samples)
        reference = reference_fixed_point(algorithm, np.zeros(n), theta,
                                          tol=1e-14, max_iter=500)
        truth = jac_finite_difference(algorithm, theta, solver_tol=1e-12,
                                      max_iter=500).matrix
        return _AccuracyCase(algorithm, theta, np.zeros(n), truth, reference)
    if config.experiment == "ip_qp":
        n, m_eq, p = size
        prob, theta = QpInstance.synthetic(n, m_eq, p, seed=seed)
        _maybe_dump(config, prob, size)
        algorithm = qp_ip_map(prob)
        solved = solve_qp(prob, theta)
        start = initial_state(prob, theta)
        truth = jac_finite_difference(algorithm, theta, solver_tol=1e-11,
                                      x0=start, max_iter=300).matrix
        return _AccuracyCase(algorithm, theta, start,
                             primal_block(prob, truth), solved.last(),
                             k_cap=solved.k, primal=slice(0, prob.n))
    raise ConfigError(f"{config.experiment} has no accuracy mode")


def run_accuracy(config: ExperimentConfig) -> str:
    """Error-versus-iteration curves for every chosen estimator.

    Emits, for each k on a doubling grid, the squared iterate error and the
    squared Frobenius error of each estimator against the ground truth,
    plus the evaluated error bound where one applies.
    """
    if config.experiment == "bilevel_ridge":
        raise ConfigError("bilevel_ridge is driven by the bilevel runner")
    header = [
        "schema", "experiment", "seed", "size", "cond", "alpha_choice",
        "estimator", "window", "k", "iterate_err_sq", "jac_err_sq",
        "bound_value", "bound_provenance",
    ]
    rows = []
    sizes = config.sizes or ACCURACY_SIZES[config.experiment]
    for size in sizes:
        case = _accuracy_case(config, size)
        k_max = config.k if case.k_cap is None else min(config.k, case.k_cap)
        trace = iterate(case.algorithm, case.x0, case.theta,
                        max_iter=k_max, tol=0.0)
        k_max = trace.k
        window = config.window or default_window(config.cond_target)
        supplier = getattr(case.algorithm, "analytic_constants", None)
        if supplier is not None:
            constants = supplier(case.theta)
        else:
            constants = estimate_constants(case.algorithm, trace)
        contractive = constants.rho < 1.0
        for k in _grid(k_max):
            prefix = trace.prefix(k)
            iterate_err = float(
                np.linalg.norm(prefix.last()[case.primal]
                               - case.reference[case.primal]) ** 2
            )
            dist_prev = float(np.linalg.norm(prefix.second_last() - case.reference))
            dist_k = float(np.linalg.norm(prefix.last() - case.reference))
            for name in config.estimators:
                method = _METHODS[name]
                used_window = ""
                bound = ""
                if method is Method.AUTODIFF:
                    estimate = jac_autodiff(case.algorithm, prefix)
                elif method is Method.IMPLICIT:
                    estimate = jac_implicit(case.algorithm, prefix.last(), case.theta)
                    if contractive:
                        bound = _fmt(bound_implicit(constants, dist_k))
                elif method is Method.ONE_STEP:
                    estimate = jac_onestep(case.algorithm, prefix)
                    if contractive:
                        bound = _fmt(bound_onestep(constants, dist_prev))
                else:
                    used = min(window, k)
                    estimate = jac_onestep_k(case.algorithm, prefix, used)
                    used_window = str(used)
                err = float(
                    np.linalg.norm(estimate.matrix[case.primal] - case.truth) ** 2
                )
                rows.append([
                    "accuracy/1", config.experiment, str(config.seed),
                    _size_label(size), _fmt(config.cond_target),
                    config.alpha_choice, name, used_window, str(k),
                    _fmt(iterate_err), _fmt(err), bound,
                    constants.provenance.value if bound else "",
                ])
    return _csv(header, rows)


def _timing_instance(config: ExperimentConfig, size):
    if config.experiment == "newton_logistic":
        n_samples, n = size
        prob = LogisticNewton.synthetic(n_samples, n - 1, lam=0.1,
                                        seed=config.seed)
        algorithm = newton_map(prob)
        theta = np.ones(n_samples)
        x0 = np.zeros(n)

        def solve():
            return iterate(algorithm, x0, theta, max_iter=100, tol=1e-13)

        params = n_samples * (n + 1)
        return algorithm, theta, solve, params
    if config.experiment == "ip_qp":
        n, m_eq, p = size
        prob, theta = QpInstance.synthetic(n, m_eq, p, seed=config.seed)

        def solve():
            return solve_qp(prob, theta)

        params = n * (n + 1) + (n + 1) * m_eq + (n + 1) * p
        return qp_ip_map(prob), theta, solve, params
    raise ConfigError(f"{config.experiment} has no timing mode")


def run_timing(config: ExperimentConfig) -> str:
    """Wall-time sweep: solving alone versus solving plus each estimator.

    Phases are measured round-robin, the warmup round is discarded, and the
    median over the remaining repetitions is reported.  Only orderings are
    reproducible; absolute numbers are machine-bound.
    """
    if config.experiment not in TIMING_SIZES:
        raise ConfigError(f"{config.experiment} has no timing mode")
    if config.reps < 5:
        raise ConfigError("timing needs at least 5 repetitions")
    header = [
        "schema", "experiment", "seed", "size", "params", "phase",
        "wall_time", "solver_iters", "map_evals", "jac_x_evals",
        "jac_theta_evals", "linear_solves",
    ]
    phases = {
        "solve_only": None,
        "solve_plus_autodiff": lambda alg, tr: jac_autodiff(alg, tr),
        "solve_plus_implicit": lambda alg, tr: jac_implicit(alg, tr.last(), tr.theta),
        "solve_plus_onestep": lambda alg, tr: jac_onestep(alg, tr),
    }
    rows = []
    sizes = config.sizes or TIMING_SIZES[config.experiment]
    for size in sizes:
        algorithm, theta, solve, params = _timing_instance(config, size)
        samples = {name: [] for name in phases}
        counters = {}
        solver_iters = 0
        for rep in range(config.reps + 1):  # first round is warmup
            for name, extra in phases.items():
                started = time.perf_counter()
                trace = solve()
                estimate = extra(algorithm, trace) if extra else None
                elapsed = time.perf_counter() - started
                if rep > 0:
                    samples[name].append(elapsed)
                solver_iters = trace.k
                if estimate is not None:
                    counters[name] = estimate.costs
        for name in phases:
            cost = counters.get(name)
            rows.append([
                "timing/1", config.experiment, str(config.seed),
                _size_label(size), str(params), name,
                _fmt(float(np.median(samples[name]))), str(solver_iters),
                str(cost.map_evals if cost else 0),
                str(cost.jac_x_evals if cost else 0),
                str(cost.jac_theta_evals if cost else 0),
                str(cost.linear_solves if cost else 0),
            ])
    return _csv(header, rows)


BILEVEL_HEADER = [
    "schema", "experiment", "seed", "size", "estimator", "row_kind",
    "outer_step", "g_value", "hypergrad_norm", "true_grad_norm",
    "per_step_bound", "certificate", "min_true_grad_sq",
]


def _bilevel_setup(config: ExperimentConfig, size):
    """Returns (problem, theta0, alpha_outer, smoothness, oracles) where
    smoothness is the analytic gradient-Lipschitz constant of the composed
    objective when available (None otherwise)."""
    from .bounds import bound_bilevel

    if config.experiment == "quadratic_synthetic":
        n = size[0]
        prob = QuadraticInner.random(n, seed=config.seed,
                                     step_choice=config.alpha_choice)
        _maybe_dump(config, prob, size)
        algorithm = quadratic_map(prob)
        problem = bl.BilevelProblem(
            inner=algorithm,
            outer_value=lambda x: 0.5 * float(x @ x),
            outer_grad=lambda x: x,
            l_grad=1.0,
        )
        inv = prob.truth_jacobian()
        true_grad = lambda th: inv @ (inv @ th)
        smoothness = 1.0 / prob.eig_min**2
        theta0 = 2.0 * np.ones(n)

        def per_step(theta, x_prev, x_last):
            constants = algorithm.analytic_constants(theta)
            xbar = prob.fixed_point(theta)
            return bound_bilevel(
                constants,
                l_g=float(np.linalg.norm(xbar)),
                l_grad=1.0,
                dist_prev=float(np.linalg.norm(x_prev - xbar)),
                dist_k=float(np.linalg.norm(x_last - xbar)),
            )

        return problem, theta0, smoothness, true_grad, per_step
    if config.experiment == "bilevel_ridge":
        n_samples, n = size
        prob = WeightedRidge.synthetic(n_samples, n, cond=config.cond_target,
                                       seed=config.seed)
        _maybe_dump(config, prob, size)
        theta0 = np.ones(n_samples)
        algorithm = ridge_map(prob, theta_ref=theta0,
                              step_choice=config.alpha_choice)
        rng = np.random.default_rng(config.seed + 1)
        target = prob.fixed_point(rng.uniform(0.5, 1.5, size=n_samples))
        problem = bl.BilevelProblem(
            inner=algorithm,
            outer_value=lambda x: 0.5 * float((x - target) @ (x - target)),
            outer_grad=lambda x: x - target,
            l_grad=1.0,
        )

        def true_grad(theta):
            jac = ridge_truth_jacobian(prob, theta)
            return jac.T @ (prob.fixed_point(theta) - target)

        def per_step(theta, x_prev, x_last):
            constants = algorithm.analytic_constants(theta)
            xbar = prob.fixed_point(theta)
            return bound_bilevel(
                constants,
                l_g=float(np.linalg.norm(xbar - target)),
                l_grad=1.0,
                dist_prev=float(np.linalg.norm(x_prev - xbar)),
                dist_k=float(np.linalg.norm(x_last - xbar)),
            )

        return problem, theta0, None, true_grad, per_step
    raise ConfigError(f"{config.experiment} has no bilevel mode")


def _auto_outer_step(problem: bl.BilevelProblem, theta0, inner_steps: int) -> float:
    # conservative 1/(2 * ||J||^2): the composed objective has gradient
    # Lipschitz constant at most ||J||^2 * l_grad near theta0 for l_grad = 1
    _, _, estimate = bl.hypergradient_detailed(
        problem, theta0, inner_steps, Method.IMPLICIT
    )
    scale = operator_norm(estimate.matrix) ** 2
    return 1.0 / (2.0 * max(scale, 1e-12))


def run_bilevel(config: ExperimentConfig) -> str:
    """Hypergradient descent trajectories, one per configured estimator.

    On the quadratic toy (analytic smoothness, step fixed to 1/L) each
    trajectory additionally emits a criticality-certificate row comparing
    the smallest measured true-gradient norm against the certified cap.
    """
    rows = []
    sizes = config.sizes or ACCURACY_SIZES[config.experiment]
    for size in sizes:
        problem, theta0, smoothness, true_grad, per_step = _bilevel_setup(
            config, size
        )
        if config.alpha_outer is not None:
            alpha = config.alpha_outer
        elif smoothness is not None:
            alpha = 1.0 / smoothness
        else:
            alpha = _auto_outer_step(problem, theta0, config.k)
        if config.outer_steps == 0:
            continue
        for name in config.estimators:
            method = _METHODS[name]
            window = config.window or default_window(config.cond_target)
            run = bl.hypergradient_descent(
                problem, theta0, alpha, config.outer_steps, config.k,
                estimator=method,
                window=window if method is Method.K_STEP else None,
                true_grad=true_grad,
            )
            bounds = [
                per_step(run.thetas[i], run.inner_prev[i], run.inner_last[i])
                for i in range(len(run.hypergrads))
            ]
            for i in range(len(run.hypergrads)):
                rows.append([
                    "bilevel/1", config.experiment, str(config.seed),
                    _size_label(size), name, "step", str(i),
                    _fmt(run.g_values[i]), _fmt(run.grad_norms[i]),
                    _fmt(run.true_grad_norms[i]), _fmt(bounds[i]), "", "",
                ])
            certified = (
                smoothness is not None
                and abs(alpha * smoothness - 1.0) <= 1e-9
                and method is Method.ONE_STEP
            )
            if certified:
                eps = max(bounds) / smoothness
                certificate = bl.criticality_certificate(
                    run, eps, smoothness, f_star_lower=0.0
                )
                min_sq = min(g**2 for g in run.true_grad_norms)
                rows.append([
                    "bilevel/1", config.experiment, str(config.seed),
                    _size_label(size), name, "certificate", "",
                    "", "", "", "", _fmt(certificate), _fmt(min_sq),
                ])
    return _csv(BILEVEL_HEADER, rows)


def _selftest_identity(lines: list[str]) -> bool:
    rng = np.random.default_rng(1234)
    worst_identity = 0.0
    worst_slack = -np.inf
    for _ in range(100):
        n, m = 6, 4
        a = rng.standard_normal((n, n))
        a *= rng.uniform(0.05, 0.9) / np.linalg.svd(a, compute_uv=False)[0]
        b = rng.standard_normal((n, m))
        b_alt = rng.standard_normal((n, m))
        solved = lu_solve(np.eye(n) - a, b)
        lhs = solved - b_alt
        rhs = a @ solved + b - b_alt
        worst_identity = max(worst_identity, float(np.abs(lhs - rhs).max()))
        rho = operator_norm(a)
        cap = rho / (1.0 - rho) * operator_norm(b) + operator_norm(b - b_alt)
        worst_slack = max(worst_slack, operator_norm(lhs) - cap)
    ok = worst_identity <= 1e-10 and worst_slack <= 1e-9
    lines.append(
        f"{'PASS' if ok else 'FAIL'} resolvent-identity: "
        f"max elementwise gap {worst_identity:.3e}, "
        f"max norm-estimate excess {worst_slack:.3e}"
    )
    return ok


def _selftest_consistency(lines: list[str]) -> bool:
    rng = np.random.default_rng(99)
    checks = []

    quad = quadratic_map(QuadraticInner.random(5, seed=0))
    points = [(rng.standard_normal(5), rng.standard_normal(5)) for _ in range(10)]
    checks.append(("quadratic", quad, points))

    ridge_prob = WeightedRidge.synthetic(15, 4, cond=20.0, seed=1)
    rmap = ridge_map(ridge_prob)
    points = [
        (rng.standard_normal(4), rng.uniform(0.1, 2.0, size=15)) for _ in range(10)
    ]
    checks.append(("ridge", rmap, points))

    logistic_prob = LogisticNewton.synthetic(30, 4, lam=0.5, seed=2)
    nmap = newton_map(logistic_prob)
    weights = np.ones(30)
    solved = iterate(nmap, np.zeros(5), weights, max_iter=30, tol=1e-13)
    points = [
        (solved.last() + 0.05 * rng.standard_normal(5), weights) for _ in range(5)
    ]
    checks.append(("logistic-newton", nmap, points))

    qp_prob, qp_theta = QpInstance.synthetic(6, 2, 4, seed=3)
    qp_trace = solve_qp(qp_prob, qp_theta)
    mid = min(4, len(qp_trace.iterates) - 1)
    points = [(qp_trace.iterates[mid], qp_theta),
              (qp_trace.iterates[mid + 1], qp_theta)]
    checks.append(("interior-point", qp_ip_map(qp_prob), points))

    all_ok = True
    for name, algorithm, point_list in checks:
        worst = 0.0
        for x, theta in point_list:
            jx, jt = finite_difference_map_jacobians(algorithm, x, theta)
            worst = max(worst, float(np.abs(jx - algorithm.jac_x(x, theta)).max()))
            worst = max(worst, float(np.abs(jt - algorithm.jac_theta(x, theta)).max()))
        ok = worst <= 1e-5
        all_ok = all_ok and ok
        lines.append(
            f"{'PASS' if ok else 'FAIL'} jacobian-consistency {name}: "
            f"max deviation {worst:.3e}"
        )
    return all_ok


def selftest() -> tuple[bool, str]:
    """Identity suite plus analytic-Jacobian consistency checks."""
    lines: list[str] = []
    ok = _selftest_identity(lines)
    ok = _selftest_consistency(lines) and ok
    lines.append("selftest " + ("PASSED" if ok else "FAILED"))
    return ok, "\n".join(lines) + "\n"
