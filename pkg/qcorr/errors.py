"""Exception hierarchy shared by the library and the command line.

The CLI turns these into process exit codes: ``InvalidInputError`` exits
with 2 and ``NumericalFailureError`` with 3.
"""

from __future__ import annotations


class QcorrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(QcorrError, ValueError):
    """Input violates a documented precondition (shape, Hermiticity...)."""


class NumericalFailureError(QcorrError, ArithmeticError):
    """A computation produced values that a valid input cannot produce."""
