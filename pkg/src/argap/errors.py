"""Exception types shared across the package."""


class ArgapError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ArgapError):
    """A precondition on user-supplied input was violated."""


class NumericalFailureError(ArgapError):
    """A numerical routine failed in a way that should not occur for valid input."""


class DegenerateCaseError(ArgapError):
    """Root-domain distance hit a degenerate configuration (zero or repeated roots).

    Callers should fall back to the covariance-form distance.
    """


class UnsupportedOrderError(ArgapError):
    """The coefficient-domain (resultant) distance is only supported for small orders."""
