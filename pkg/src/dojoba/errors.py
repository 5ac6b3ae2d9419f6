"""Exception hierarchy shared by the package."""


class DoJoBaError(Exception):
    """Base class for all package errors."""


class DataError(DoJoBaError, ValueError):
    """Malformed or inconsistent input data."""


class InsufficientClassesError(DataError):
    """Too few speakers, phrases or classes to estimate a model.

    ``axis`` names the deficient label axis (``"speaker"``, ``"phrase"``,
    ``"class"`` or ``"sessions"``).
    """

    def __init__(self, axis, message):
        super().__init__(message)
        self.axis = axis


class LeakageError(DataError):
    """A session is used both for enrollment and as a test vector."""


class NumericalError(DoJoBaError, ArithmeticError):
    """A linear system or factorization could not be solved."""


class FactorizationError(NumericalError):
    """A covariance matrix is not positive definite.

    ``pivot`` is the zero-based index of the first failing pivot (or
    diagonal entry).
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SizeError(DoJoBaError, ValueError):
    """A computation was requested on a problem larger than its guard."""
