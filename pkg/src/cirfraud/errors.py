"""Exception hierarchy for the cirfraud package.

Two broad families matter to callers (and to the CLI exit codes): problems
with the data or configuration handed in, and numerical failures that occur
while computing with valid inputs.
"""


class CirFraudError(Exception):
    """Base class for all cirfraud errors."""


class DataError(CirFraudError):
    """Invalid, insufficient, or degenerate input data / configuration."""


class NumericalError(CirFraudError):
    """A computation failed numerically on otherwise valid inputs."""


class DomainError(DataError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class DegenerateModelError(DataError):
    """Model construction would be degenerate (e.g. zero measurement slope)."""


class SingularUpdateError(NumericalError):
    """Kalman update with zero innovation variance."""


class InsufficientDataError(DataError):
    """Series too short for the requested operation."""


class DegenerateDataError(DataError):
    """Data carries no usable variation (e.g. constant observations)."""


class DegenerateRegressionError(DataError):
    """Regression design matrix is rank deficient."""


class UndefinedMetricError(DataError):
    """Metric is undefined for the given labels (single class, no positives)."""


class GenerationError(DataError):
    """Synthetic data generation could not satisfy the requested targets."""


class CohortError(DataError):
    """Cohort assembly failed (e.g. an imbalance group ended up empty)."""
