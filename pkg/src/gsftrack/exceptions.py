"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates its documented domain (non-positive variance, bad id, ...)."""


class NumericDegeneracyError(ArithmeticError):
    """A matrix that must be positive definite / invertible is not, within tolerance."""


class EmptyPosteriorError(RuntimeError):
    """Every hypothesis weight collapsed to zero; the posterior is undefined."""
