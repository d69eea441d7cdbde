"""Exception hierarchy shared by the model, solver and CLI layers."""


class SelfishForksError(Exception):
    """Base class for all package errors."""


class ValidationError(SelfishForksError, ValueError):
    """Input violates a documented precondition (bad strategy, bad range)."""


class StructuralError(SelfishForksError):
    """The model does not have the structure a routine relies on.

    Raised e.g. when a policy-evaluation system is singular because the
    induced chain has more than one recurrent class.
    """


class ConvergenceError(SelfishForksError):
    """An iterative method hit its iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class ResourceLimitError(SelfishForksError):
    """Estimated model size is above the configured state cap."""

    def __init__(self, estimate: int, cap: int):
        super().__init__(
            f"estimated state count {estimate} exceeds cap {cap} "
            "(raise SELFISH_FORKS_MAX_STATES to override)"
        )
        self.estimate = estimate
        self.cap = cap


class StrategyMismatchError(ValidationError):
    """A strategy does not fit the model it is applied to."""
