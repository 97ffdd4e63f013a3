"""
Exception hierarchy for the minimum-time DKF simulator.

Every error carries a human readable ``message`` and, when it wraps a lower level failure
(numpy, scipy, yaml, pydantic), the ``original_error`` it was raised from.
"""

from typing import Optional


class DkfError(Exception):
    """Base class of every error raised by the simulator."""

    def __init__(self, message: str, original_error: Optional[Exception] = None):
        self.original_error = original_error
        self.message = message
        super().__init__(message)


class NumericalError(DkfError):
    """Marker for numerical failures. The CLI maps these to exit code 2."""


class GraphError(DkfError):
    """Raised when a graph violates its invariants (self-loops, duplicates, out of range indices)."""


class NoEdges(NumericalError):
    """The degree-based step-size bound is undefined because every degree is zero."""


class StepSizeTooLarge(NumericalError):
    def __init__(self, step_size: float, bound: float):
        self.step_size = step_size
        self.bound = bound
        super().__init__(f"step size {step_size} violates the consensus bound 0 < eps < {bound}")


class SingularCovariance(NumericalError):
    """A covariance matrix could not be inverted through a Cholesky factorization."""


class WrongLength(DkfError):
    """A Hankel matrix was requested from an even number of differences."""


class DegenerateKernel(NumericalError):
    """The detected kernel vector has a (near) zero last component and cannot be normalized."""


class NumericalFailure(NumericalError):
    """The final value denominator 1ᵀβ vanished, or its extended-precision value never settled."""


class NoRootAtOne(NumericalError):
    """The minimal polynomial coefficients do not describe a polynomial with a root at 1."""


class ZeroVector(NumericalError):
    pass


class PropertyViolation(NumericalError):
    """The constructed Hankel perturbation direction failed its norm or fixed-point checks."""


class NeverConverged(DkfError):
    """The asymptotic consensus filter never entered its tolerance tube within the run."""

    def __init__(self, node: int, tolerance: float):
        self.node = node
        self.tolerance = tolerance
        super().__init__(f"node {node} never settled within relative tolerance {tolerance}")


class ScenarioParseError(DkfError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 field: Optional[str] = None, original_error: Optional[Exception] = None):
        self.path = path
        self.line = line
        self.field = field
        location = ":".join(str(part) for part in (path, line) if part is not None)
        if field:
            location = f"{location} [{field}]" if location else f"[{field}]"
        super().__init__(f"{location}: {message}" if location else message, original_error)


class ScenarioValidationError(DkfError):
    def __init__(self, message: str, field: Optional[str] = None, bound: Optional[float] = None,
                 original_error: Optional[Exception] = None):
        self.field = field
        self.bound = bound
        super().__init__(f"{field}: {message}" if field else message, original_error)


class NodeFailure(DkfError):
    """A module failed for one node of a batched network update."""

    def __init__(self, node: Optional[int], original_error: DkfError):
        self.node = node
        super().__init__(f"node {node}: {original_error.message}", original_error)


class SimulationError(DkfError):
    """Wraps an error raised inside a run with the node and step it happened at."""

    def __init__(self, node: Optional[int], step: int, original_error: DkfError):
        self.node = node
        self.step = step
        where = f"step {step}" if node is None else f"node {node}, step {step}"
        super().__init__(f"{where}: {original_error.message}", original_error)

    @property
    def is_numerical(self) -> bool:
        return isinstance(self.original_error, NumericalError)
