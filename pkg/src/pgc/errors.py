class ContractError(ValueError):
    """An argument violates an operation's precondition."""


class RefusalError(ValueError):
    """The operation declines the input (too large, structurally unsupported, degenerate)."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component
