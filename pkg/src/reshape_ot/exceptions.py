"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class ReshapeOTError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(ReshapeOTError):
    """Invalid experiment configuration (unknown key, out-of-range value)."""


class DataError(ReshapeOTError):
    """Malformed or out-of-range input data (CSV ingestion, file layout)."""


class NumericalError(ReshapeOTError):
    """Numerical failure: factorization breakdown, NaN scalings, or a
    squared distance far below zero."""
