"""Concrete algorithm maps with analytic Jacobians and ground truths."""

from .io import dumps_instance, load_instance, loads_instance, save_instance
from .logistic import LogisticNewton, NewtonMap, newton_map
from .qp import (
    InteriorPointMap,
    QpInstance,
    equality_qp_truth,
    initial_state,
    primal_block,
    primal_part,
    qp_ip_map,
    solve_qp,
    split_state,
)
from .quadratic import QuadraticInner, QuadraticMap, gradient_step_size, quadratic_map
from .ridge import RidgeMap, WeightedRidge, ridge_map, ridge_truth_jacobian

__all__ = [
    "InteriorPointMap",
    "LogisticNewton",
    "NewtonMap",
    "QpInstance",
    "QuadraticInner",
    "QuadraticMap",
    "RidgeMap",
    "WeightedRidge",
    "dumps_instance",
    "equality_qp_truth",
    "gradient_step_size",
    "initial_state",
    "load_instance",
    "loads_instance",
    "newton_map",
    "primal_block",
    "primal_part",
    "qp_ip_map",
    "quadratic_map",
    "ridge_map",
    "ridge_truth_jacobian",
    "save_instance",
    "solve_qp",
    "split_state",
]
