"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 2, data problems
exit 3, numerical failures exit 4.
"""


class MarketStatesError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(MarketStatesError):
    """Bad configuration or arguments (exit code 2)."""

    exit_code = 2


class DataError(MarketStatesError):
    """Malformed, inconsistent, or insufficient input data (exit code 3)."""

    exit_code = 3


class NumericalError(MarketStatesError):
    """A numerical invariant failed during computation (exit code 4)."""

    exit_code = 4
