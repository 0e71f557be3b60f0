"""
Exception hierarchy for ustatboot.

Every error carries the process exit code the command line reports for it.
"""


class UStatBootError(Exception):
    """Base class for all errors raised by ustatboot."""

    exit_code = 1


class InvalidArgumentError(UStatBootError, ValueError):
    """Bad shapes, out-of-range parameters or incompatible options."""

    exit_code = 2


class NumericalError(UStatBootError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-PD factorisation)."""

    exit_code = 3

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegeneracyError(NumericalError):
    """The Hajek projection has zero variance in every coordinate."""


class ResourceLimitError(UStatBootError, MemoryError):
    """A requested materialisation exceeds a configured size guard."""

    exit_code = 4


class CostWarning(RuntimeWarning):
    """The projected cost of a bootstrap run exceeds the configured budget."""
