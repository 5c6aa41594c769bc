"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto process exit codes: configuration problems exit
with 1, data problems with 2, and numeric failures (non-finite losses)
with 3.
"""


class VForecastError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(VForecastError, ValueError):
    """A parameter or configuration value is outside its legal domain."""


class DataError(VForecastError, ValueError):
    """Input data is missing, malformed, or degenerate."""


class NumericError(VForecastError, ArithmeticError):
    """A computation produced a non-finite value where one is not allowed."""
