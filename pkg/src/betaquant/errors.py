"""Exception hierarchy.

Every error raised by this package derives from :class:`BetaquantError`.
Subclasses also derive from the closest builtin (``ValueError`` for bad
inputs) so callers that do not know about this package still catch
something sensible.
"""


class BetaquantError(Exception):
    """Base class for all errors raised by betaquant."""


class ConfigError(BetaquantError, ValueError):
    """Invalid configuration or parameter value, detected before any computation."""


class SchemaError(BetaquantError, ValueError):
    """Input file does not match the required column schema."""


class DataValidationError(BetaquantError, ValueError):
    """Rows parsed but violate a domain invariant (offenders listed in the message)."""


class DomainError(BetaquantError, ValueError):
    """A mathematical domain violation (e.g. logarithm of a non-positive value)."""


class ConstructionError(BetaquantError, ValueError):
    """A derived object (weight matrix, instrument set) cannot be built."""


class RankDeficiencyError(BetaquantError, ValueError):
    """Design or instrument matrix is numerically rank deficient."""


class EstimationError(BetaquantError, RuntimeError):
    """Solver failure: non-convergence, unattained optimality, or an invalid estimate."""


class InferenceError(BetaquantError, RuntimeError):
    """Confidence-interval machinery failed (degenerate density, excess discards)."""


class DegenerateClusterError(BetaquantError, ValueError):
    """Residuals cannot be split into the requested number of classes."""


class PipelineError(BetaquantError, RuntimeError):
    """A pipeline stage failed; the message names the stage and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")


class BoundaryWarning(UserWarning):
    """A grid search selected an endpoint; the optimum may lie outside the grid."""
