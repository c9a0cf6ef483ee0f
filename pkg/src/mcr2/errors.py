"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Non-finite, wrongly shaped or out-of-range input."""


class InvalidMembershipError(InvalidInputError):
    """Membership matrix is not row-stochastic (or not hard when required)."""


class DimensionMismatchError(InvalidInputError):
    pass


class NumericalError(ArithmeticError):
    """Factorization failure or NaN produced during a computation."""


class StagnationError(RuntimeError):
    """No ascent step could be found at the first iteration."""


class DegenerateFeatureError(RuntimeError):
    """A feature column collapsed to (near) zero norm before sphere projection."""
