"""Exception hierarchy for the Volterra engine."""


class VolterraError(Exception):
    """Base exception for engine errors."""

    pass


class InvalidArgumentError(VolterraError):
    """Raised when an argument violates an operation's precondition."""

    def __init__(self, argument: str, message: str) -> None:
        self.argument = argument
        super().__init__(f"Invalid argument '{argument}': {message}")


class NotInvertibleError(VolterraError):
    """Raised when the kernel diagonal k(t,t) is singular on the mesh."""

    def __init__(self, time: float, min_singular: float) -> None:
        self.time = time
        self.min_singular = min_singular
        super().__init__(
            f"Kernel diagonal is not invertible at t={time:.6g} "
            f"(smallest singular value {min_singular:.3g})"
        )


class InconsistentDataError(VolterraError):
    """Raised when input data contradict an identity they must satisfy."""

    def __init__(self, message: str, defect: float) -> None:
        self.defect = defect
        super().__init__(f"{message} (defect {defect:.3g})")


class NonConvergenceError(VolterraError):
    """Raised when a fixed-point iteration exhausts its budget."""

    def __init__(self, iterations: int, residual: float, context: str = "picard") -> None:
        self.iterations = iterations
        self.residual = residual
        self.context = context
        super().__init__(
            f"{context} iteration did not converge after {iterations} iterations "
            f"(last residual {residual:.3g})"
        )


class NumericFailureError(VolterraError):
    """Raised when a right-hand side produces NaN or Inf."""

    def __init__(self, where: str) -> None:
        self.where = where
        super().__init__(f"Non-finite values produced by {where}")


class EmptyFunnelError(VolterraError):
    """Raised when funnel sampling accepts no sample."""

    def __init__(self, rejected: int) -> None:
        self.rejected = rejected
        super().__init__(f"No accepted funnel samples ({rejected} rejected)")


class NotStableError(VolterraError):
    """Raised when a matrix-exponential family has neither stability certificate."""

    def __init__(self, norm_at_T: float) -> None:
        self.norm_at_T = norm_at_T
        super().__init__(f"Family is not exponentially stable: ||U(T)|| = {norm_at_T:.6g}")


class PreconditionViolatedError(VolterraError):
    """Raised in strict mode when a sampled condition required by a finder fails."""

    def __init__(self, condition: str, detail: str) -> None:
        self.condition = condition
        super().__init__(f"Condition {condition} violated: {detail}")


class ConditionSearchError(VolterraError):
    """Raised when the doubling search for L hits its cap."""

    def __init__(self, cap: float) -> None:
        self.cap = cap
        super().__init__(f"No admissible L found below the search cap {cap:.6g}")


class ConfigurationError(VolterraError):
    """Raised when an experiment config cannot be resolved."""

    pass


class ArtifactWriteError(VolterraError):
    """Raised when writing run artefacts fails."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"Failed to write artefact {path}: {message}")
