"""Exception hierarchy shared by the library and the command line."""


class ChiFieldError(Exception):
    """Base class for all errors raised by :mod:`chifield`."""

    exit_code = 1


class ConfigurationError(ChiFieldError, ValueError):
    """Inconsistent or unparsable run configuration."""

    exit_code = 2


class UnsupportedConfiguration(ConfigurationError):
    """A valid configuration that this operation does not handle."""


class NumericalError(ChiFieldError, ArithmeticError):
    """Non-finite intermediate values or failed numerical procedures."""

    exit_code = 3


class ConvergenceError(NumericalError):
    """A series or iteration could not meet its tolerance within the cap."""


class DegenerateTableError(ChiFieldError, ValueError):
    """A contingency table with an empty row or column margin."""

    exit_code = 4

    def __init__(self, message, *, rows=(), cols=()):
        super().__init__(message)
        self.rows = tuple(rows)
        self.cols = tuple(cols)
