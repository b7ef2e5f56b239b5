"""Exception types raised by symtele."""


class ConvergenceError(RuntimeError):
    """An iterative routine ran out of iterations."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateActivationError(ValueError):
    """A layer activation lacks the full column rank a GL action needs."""


class HypothesisViolated(ValueError):
    """Inputs fall outside the hypotheses of a theoretical bound."""
