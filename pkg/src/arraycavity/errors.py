"""Exception types shared by all modules."""


class ArrayCavityError(Exception):
    """Base class for package errors."""


class InvalidArgument(ArrayCavityError, ValueError):
    pass


class DomainError(ArrayCavityError, ValueError):
    """Input outside the domain where a formula is defined."""


class NumericalFailure(ArrayCavityError, RuntimeError):
    """A solver did not converge or an internal consistency check failed."""
