from typing import Optional, Sequence


class CubicMetrologyError(Exception):
    """Base class of every error raised by the package."""


class InvalidDimensionError(CubicMetrologyError, ValueError):
    def __init__(self, message: str, dim: Optional[int] = None):
        super().__init__(message)
        self.dim = dim


class TruncationError(CubicMetrologyError, RuntimeError):
    """
    Raised when a state carries more weight near the Fock cutoff than the truncation tolerance allows.

    Attributes:
        tail_mass (float): Weight on the last levels plus the norm missing from the truncated basis,
            or the change of the number moments when the dimension is doubled.
        dim (int): Truncation dimension that was used.
    """

    def __init__(self, tail_mass: float, dim: int, tolerance: float, quantity: str = "tail mass"):
        super().__init__(
            f"{quantity} {tail_mass:.3e} at dim={dim} exceeds tolerance {tolerance:.1e}")
        self.tail_mass = tail_mass
        self.dim = dim
        self.tolerance = tolerance


class ContractError(CubicMetrologyError, ValueError):
    pass


class InvalidStateError(CubicMetrologyError, ValueError):
    def __init__(self, message: str, min_eigenvalue: Optional[float] = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InfeasiblePopulationError(CubicMetrologyError, ValueError):
    def __init__(self, n: float, floor: float):
        super().__init__(
            f"population n={n} is below the squeezing floor sinh^2(s)={floor}")
        self.n = n
        self.floor = floor


class SolverError(CubicMetrologyError, RuntimeError):
    def __init__(self, message: str, roots: Sequence[complex] = ()):
        super().__init__(message)
        self.roots = list(roots)


class ConditioningError(CubicMetrologyError, RuntimeError):
    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class UndefinedRatioError(CubicMetrologyError, ZeroDivisionError):
    pass


class IntegratorError(CubicMetrologyError, RuntimeError):
    def __init__(self, trace_drift: float, steps: int, message: Optional[str] = None):
        super().__init__(message or
                         f"trace drift {trace_drift:.3e} after {steps} steps; increase the step count")
        self.trace_drift = trace_drift
        self.steps = steps


class UnsupportedAnalyticOrderError(CubicMetrologyError, ValueError):
    def __init__(self, n_iter: int):
        super().__init__(
            f"closed forms exist for N in 1..5 only, got N={n_iter}; use the numeric path")
        self.n_iter = n_iter


class ConvergenceError(CubicMetrologyError, RuntimeError):
    def __init__(self, message: str, values: Sequence[float] = ()):
        super().__init__(message)
        self.values = list(values)


class ConfigError(CubicMetrologyError, ValueError):
    pass


class GridPointError(CubicMetrologyError, RuntimeError):
    """A scan aborted at one grid point; the original exception is chained as __cause__."""

    def __init__(self, context: str, point, cause: Exception):
        super().__init__(f"{context} failed at {point}: {type(cause).__name__}: {cause}")
        self.context = context
        self.point = point
