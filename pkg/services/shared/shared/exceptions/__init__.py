"""Engine exception hierarchy."""

from shared.exceptions.exceptions import (
    ArtifactWriteError,
    ConditionSearchError,
    ConfigurationError,
    EmptyFunnelError,
    InconsistentDataError,
    InvalidArgumentError,
    NonConvergenceError,
    NotInvertibleError,
    NotStableError,
    NumericFailureError,
    PreconditionViolatedError,
    VolterraError,
)

__all__ = [
    "ArtifactWriteError",
    "ConditionSearchError",
    "ConfigurationError",
    "EmptyFunnelError",
    "InconsistentDataError",
    "InvalidArgumentError",
    "NonConvergenceError",
    "NotInvertibleError",
    "NotStableError",
    "NumericFailureError",
    "PreconditionViolatedError",
    "VolterraError",
]
