"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class BetheError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(BetheError, ValueError):
    """An input violates a documented precondition."""


class SizeGuardError(BetheError):
    """A requested computation exceeds a configured size limit."""


class NumericalError(BetheError, ArithmeticError):
    """A numerical routine could not meet its accuracy contract."""
