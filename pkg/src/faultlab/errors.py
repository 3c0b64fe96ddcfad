"""Exception hierarchy shared across the package.

Each family maps to a distinct process exit code so shell pipelines can
tell configuration mistakes from bad data and from numerical blow-ups.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class FaultLabError(Exception):
    """Base class for all faultlab errors."""

    exit_code = 1


class ConfigError(FaultLabError):
    """Invalid configuration value, unknown key, or malformed config file."""

    exit_code = EXIT_CONFIG


class DataError(FaultLabError):
    """Missing, malformed, or inconsistent data file."""

    exit_code = EXIT_DATA


class NumericalError(FaultLabError):
    """Non-finite values or degenerate numerical input."""

    exit_code = EXIT_NUMERIC
