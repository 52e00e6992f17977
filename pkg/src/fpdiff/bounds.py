"""Error-bound evaluation: right-hand sides of the estimator guarantees,
estimated problem constants, and the reports comparing them with measured
errors.

For a contraction factor rho < 1, a Lipschitz bound l_f on the parameter
Jacobian of the map, and a Lipschitz modulus l_j of that Jacobian in the
state, the one-step estimator satisfies

    error <= rho * l_f / (1 - rho) + l_j * dist(x_{k-1}, fixed point)

and implicit differentiation at x_k satisfies

    error <= (l_j * l_f / (1 - rho)^2 + l_j / (1 - rho)) * dist(x_k, fixed point).

For vanishing-Jacobian maps (the state Jacobian is zero at the fixed point)
the one-step error is bounded by l_j_joint * dist(x_{k-1}, fixed point)
alone, and the hypergradient built from the one-step Jacobian inherits a
three-term bound combining both effects with the outer function's
constants.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientTraceError,
    NotSuperlinearError,
    RhoNotContractiveError,
)
from .fixed_point import AlgorithmMap, IterationTrace, estimate_contraction
from .linalg import operator_norm

SATISFACTION_SLACK = 1e-8


class Provenance(enum.Enum):
    ANALYTIC = "analytic"
    TRACE_SAMPLED = "trace"


class BoundKind(enum.Enum):
    ONE_STEP_LINEAR = "onestep_linear"
    IMPLICIT_LINEAR = "implicit_linear"
    ONE_STEP_QUADRATIC = "onestep_quadratic"
    BILEVEL_GRADIENT = "bilevel_gradient"


@dataclass(frozen=True)
class ConstantsEstimate:
    """Problem constants feeding the bounds.

    rho: contraction factor of the map.
    l_f: bound on the operator norm of the parameter Jacobian.
    l_j_theta: Lipschitz modulus of the parameter Jacobian in the state.
    l_j_joint: Lipschitz modulus of the joint (state, parameter) Jacobian.
    """

    rho: float
    l_f: float
    l_j_theta: float
    l_j_joint: float
    provenance: Provenance

    def __post_init__(self):
        for name in ("rho", "l_f", "l_j_theta", "l_j_joint"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class BoundReport:
    """Measured estimator error next to the evaluated bound."""

    kind: BoundKind
    k: int
    measured_error: float
    bound_value: float
    satisfied: bool
    constants: ConstantsEstimate
    dist_prev: float
    dist_k: float
    note: str = ""


CSV_HEADER = [
    "kind",
    "k",
    "measured",
    "bound",
    "satisfied",
    "rho",
    "L_F",
    "L_J",
    "dist_prev",
    "dist_k",
    "provenance",
]


def report_csv_row(report: BoundReport) -> list[str]:
    """One CSV row per report, matching CSV_HEADER."""
    l_j = (
        report.constants.l_j_joint
        if report.kind is BoundKind.ONE_STEP_QUADRATIC
        else report.constants.l_j_theta
    )
    provenance = report.constants.provenance.value
    if report.note:
        provenance = f"{provenance}+{report.note}"
    return [
        report.kind.value,
        str(report.k),
        repr(report.measured_error),
        repr(report.bound_value),
        str(report.satisfied).lower(),
        repr(report.constants.rho),
        repr(report.constants.l_f),
        repr(l_j),
        repr(report.dist_prev),
        repr(report.dist_k),
        provenance,
    ]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for report in reports:
        writer.writerow(report_csv_row(report))
    return buf.getvalue()


def _require_contractive(constants: ConstantsEstimate) -> None:
    if constants.rho >= 1.0:
        raise RhoNotContractiveError(f"rho = {constants.rho:g} is not below 1")


def bound_onestep(constants: ConstantsEstimate, dist_prev: float) -> float:
    """One-step estimator bound: rho*l_f/(1-rho) + l_j_theta*dist_prev."""
    _require_contractive(constants)
    if dist_prev < 0.0:
        raise ValueError("dist_prev must be nonnegative")
    return (
        constants.rho * constants.l_f / (1.0 - constants.rho)
        + constants.l_j_theta * dist_prev
    )


def bound_implicit(constants: ConstantsEstimate, dist_k: float) -> float:
    """Implicit estimator bound, proportional to the distance at x_k.

    The printed form mixes Lipschitz moduli of the state and parameter
    Jacobians; a single modulus (l_j_theta) stands in for both here, which
    the report marks as an approximate model.
    """
    _require_contractive(constants)
    if dist_k < 0.0:
        raise ValueError("dist_k must be nonnegative")
    one_minus = 1.0 - constants.rho
    return (
        constants.l_j_theta * constants.l_f / one_minus**2
        + constants.l_j_theta / one_minus
    ) * dist_k


def bound_onestep_quadratic(
    constants: ConstantsEstimate,
    dist_prev: float,
    final_jac_norm: float | None = None,
) -> float:
    """Vanishing-Jacobian bound: l_j_joint * dist_prev.

    Only meaningful for maps whose state Jacobian vanishes at the fixed
    point; when final_jac_norm (the measured ||jac_x||_op at the last
    iterate) is supplied and exceeds 1e-4, the map is rejected.
    """
    if dist_prev < 0.0:
        raise ValueError("dist_prev must be nonnegative")
    if final_jac_norm is not None and final_jac_norm > 1e-4:
        raise NotSuperlinearError(
            f"final state-Jacobian norm {final_jac_norm:.3e} is not vanishing"
        )
    return constants.l_j_joint * dist_prev


def bound_bilevel(
    constants: ConstantsEstimate,
    l_g: float,
    l_grad: float,
    dist_prev: float,
    dist_k: float,
) -> float:
    """Hypergradient bound for the one-step estimator.

    Three terms: the contraction-induced floor scaled by the outer
    gradient's size, the Jacobian drift at x_{k-1}, and the outer-gradient
    mismatch at x_k.
    """
    _require_contractive(constants)
    if min(l_g, l_grad, dist_prev, dist_k) < 0.0:
        raise ValueError("l_g, l_grad and distances must be nonnegative")
    return (
        constants.rho * constants.l_f * l_g / (1.0 - constants.rho)
        + constants.l_j_theta * l_g * dist_prev
        + constants.l_f * l_grad * dist_k
    )


def make_report(
    kind: BoundKind,
    k: int,
    measured_error: float,
    bound_value: float,
    constants: ConstantsEstimate,
    dist_prev: float = 0.0,
    dist_k: float = 0.0,
) -> BoundReport:
    note = "approx-model" if kind is BoundKind.IMPLICIT_LINEAR else ""
    return BoundReport(
        kind=kind,
        k=k,
        measured_error=measured_error,
        bound_value=bound_value,
        satisfied=measured_error <= bound_value + SATISFACTION_SLACK,
        constants=constants,
        dist_prev=dist_prev,
        dist_k=dist_k,
        note=note,
    )


def estimate_constants(
    algorithm: AlgorithmMap,
    trace: IterationTrace,
    provenance: Provenance = Provenance.TRACE_SAMPLED,
) -> ConstantsEstimate:
    """Constants for the bounds, analytic when the map can supply them.

    Analytic mode delegates to the map's own analytic_constants(theta),
    available on problems with closed-form curvature.  Trace-sampled mode
    takes rho as the largest observed ||jac_x||_op, l_f as the largest
    observed ||jac_theta||_op, and the Lipschitz moduli as the largest
    difference quotients of the respective Jacobians over consecutive
    iterates.  Sampled moduli can under-estimate the true constants, so
    reports built from them are informative rather than certificates.
    """
    if not trace.iterates:
        raise InsufficientTraceError("empty trace")
    if provenance is Provenance.ANALYTIC:
        supplier = getattr(algorithm, "analytic_constants", None)
        if supplier is None:
            raise ValueError(
                f"{type(algorithm).__name__} does not expose analytic constants"
            )
        constants = supplier(trace.theta)
        if constants.provenance is not Provenance.ANALYTIC:
            raise ValueError("map returned non-analytic constants")
        return constants
    if len(trace.iterates) < 3:
        raise InsufficientTraceError(
            "need at least 3 stored iterates to sample difference quotients"
        )
    theta = trace.theta
    rho = estimate_contraction(algorithm, trace)
    l_f = 0.0
    l_j_theta = 0.0
    l_j_joint = 0.0
    prev_x = None
    prev_jt = None
    prev_joint = None
    for x in trace.iterates:
        jt = algorithm.jac_theta(x, theta)
        joint = np.hstack([algorithm.jac_x(x, theta), jt])
        l_f = max(l_f, operator_norm(jt))
        if prev_x is not None:
            gap = float(np.linalg.norm(x - prev_x))
            if gap > 1e-14:
                l_j_theta = max(l_j_theta, operator_norm(jt - prev_jt) / gap)
                l_j_joint = max(l_j_joint, operator_norm(joint - prev_joint) / gap)
        prev_x, prev_jt, prev_joint = x, jt, joint
    return ConstantsEstimate(
        rho=rho,
        l_f=l_f,
        l_j_theta=l_j_theta,
        l_j_joint=l_j_joint,
        provenance=Provenance.TRACE_SAMPLED,
    )
