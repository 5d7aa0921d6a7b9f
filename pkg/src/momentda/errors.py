"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's preconditions."""


class ConvergenceFailure(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, grad_norm=float("nan")):
        super().__init__(message)
        self.grad_norm = grad_norm


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class IllConditionedError(RuntimeError):
    pass


class DegenerateComponentError(RuntimeError):
    def __init__(self, message, component):
        super().__init__(message)
        self.component = component


class RankError(RuntimeError):
    pass
