"""fpdiff: derivatives of fixed points of parametric iterative algorithms.

The package computes the Jacobian of the output of an iterative solver with
respect to its parameters by three routes (unrolled propagation, implicit
differentiation at the approximate fixed point, and one-step differentiation
of the last iteration), verifies the quantitative error bounds relating
them, and drives hypergradient descent for bilevel problems on top of any
of the estimators.
"""

from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyTraceError,
    FpdiffError,
    InfeasibleError,
    InsufficientTraceError,
    LineSearchFailedError,
    NoConvergenceError,
    NonFiniteIterateError,
    NotPositiveDefiniteError,
    NotSuperlinearError,
    NumericalError,
    RhoNotContractiveError,
    SingularMatrixError,
    StepSizeMismatchError,
    StepTooSmallError,
)
from .fixed_point import (
    AlgorithmMap,
    CostCounters,
    IterationTrace,
    compose_k,
    estimate_contraction,
    iterate,
    reference_fixed_point,
)
from .estimators import (
    JacobianEstimate,
    Method,
    finite_difference_map_jacobians,
    jac_autodiff,
    jac_finite_difference,
    jac_implicit,
    jac_onestep,
    jac_onestep_k,
)

__all__ = [
    "AlgorithmMap",
    "ConfigError",
    "CostCounters",
    "DimensionMismatchError",
    "EmptyTraceError",
    "FpdiffError",
    "InfeasibleError",
    "InsufficientTraceError",
    "IterationTrace",
    "JacobianEstimate",
    "LineSearchFailedError",
    "Method",
    "NoConvergenceError",
    "NonFiniteIterateError",
    "NotPositiveDefiniteError",
    "NotSuperlinearError",
    "NumericalError",
    "RhoNotContractiveError",
    "SingularMatrixError",
    "StepSizeMismatchError",
    "StepTooSmallError",
    "compose_k",
    "estimate_contraction",
    "finite_difference_map_jacobians",
    "iterate",
    "jac_autodiff",
    "jac_finite_difference",
    "jac_implicit",
    "jac_onestep",
    "jac_onestep_k",
    "reference_fixed_point",
]

__version__ = "0.1.0"
