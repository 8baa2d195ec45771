"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`ToposhieldError`, so callers (notably the CLI) can map them to exit
codes without catching unrelated built-in errors.
"""


class ToposhieldError(Exception):
    """Base class for all package errors."""


class MalformedInputError(ToposhieldError, ValueError):
    """Raised when an array has the wrong shape or contains NaN/inf."""


class AssumptionViolation(ToposhieldError):
    """Raised when a topology matrix fails the consensus assumption.

    The failing :class:`~toposhield.spectral_graph.ValidationReport` is kept
    on ``report`` so callers can see which flag tripped.
    """

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class GenerationFailure(ToposhieldError):
    """Raised when random topology generation exhausts its retries."""


class InsufficientDataError(ToposhieldError):
    """Raised when fewer than n transitions are available to the estimator."""


class DegenerateInputError(ToposhieldError, ValueError):
    """Raised for zero vectors/matrices where a nonzero one is required."""


class InvalidParameterError(ToposhieldError, ValueError):
    """Raised for out-of-range scalar parameters (gains, safety factors)."""


class DegenerateInitialStateError(DegenerateInputError):
    """Raised when x0 lies in span{1}, so no admissible q exists."""


class ConsensusValueZeroError(DegenerateInputError):
    """Raised when w'x0 = 0 and the rank-1 eigenvalue target is undefined."""


class InfeasibleError(ToposhieldError):
    """Raised when the vectorised equality constraints have a trivial kernel."""


class CombinationDegenerateError(ToposhieldError):
    """Raised when a kernel-basis combination cancels to the zero matrix."""


class InvalidK0Error(ToposhieldError, ValueError):
    """Raised when a base perturbation violates K0 1 = 0 or w'K0 = 0."""
