"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
any other RegionmemError -> 4.
"""


class RegionmemError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(RegionmemError):
    """Invalid parameter value or parameter combination."""


class DataError(RegionmemError):
    """Malformed or inconsistent input data (files, frames, features)."""
