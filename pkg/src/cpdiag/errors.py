"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Input violates an operation's precondition."""


class DegenerateInputError(InvalidInputError):
    """Input is formally valid but statistically degenerate (e.g. zero variance)."""
