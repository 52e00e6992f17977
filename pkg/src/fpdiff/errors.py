"""Exception types shared across the package."""


class FpdiffError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FpdiffError, ValueError):
    """An experiment configuration is invalid beyond schema validation."""


class NumericalError(FpdiffError):
    """Base class for runtime numerical failures (as opposed to misuse)."""


class SingularMatrixError(NumericalError):
    """A pivot collapsed during elimination; the system is not invertible."""


class NotPositiveDefiniteError(NumericalError):
    """A Cholesky pivot was non-positive; the matrix is not SPD."""


class NonFiniteIterateError(NumericalError):
    """An iterate or Jacobian picked up NaN/Inf; the recursion diverged."""


class NoConvergenceError(NumericalError):
    """A fixed-point solve hit its iteration cap before reaching tolerance."""


class LineSearchFailedError(NumericalError):
    """Backtracking exhausted its halvings without sufficient decrease."""


class InfeasibleError(NumericalError):
    """Interior-point residuals stagnated; the problem looks infeasible."""


class StepTooSmallError(NumericalError):
    """The fraction-to-boundary rule blocked the step entirely."""


class RhoNotContractiveError(NumericalError):
    """A contraction factor >= 1 was handed to a bound that requires rho < 1."""


class NotSuperlinearError(NumericalError):
    """The vanishing-Jacobian bound was requested for a map whose final
    iterate still has a non-negligible state Jacobian."""


class DimensionMismatchError(FpdiffError, ValueError):
    """Array shapes are inconsistent with the map's declared dimensions."""


class EmptyTraceError(FpdiffError, ValueError):
    """An estimator needs at least one executed iteration."""


class InsufficientTraceError(FpdiffError, ValueError):
    """Trace too short to sample difference quotients from."""


class StepSizeMismatchError(FpdiffError, ValueError):
    """A certificate requires the run to have used the step size 1/L."""
