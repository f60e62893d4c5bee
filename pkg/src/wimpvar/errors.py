"""Exception hierarchy shared across the package.

The split mirrors the CLI exit codes: configuration problems, data
problems, and estimation-time failures are reported differently.
"""


class WimpvarError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(WimpvarError):
    """Invalid configuration (bad flags, unknown methods, bad query)."""


class DataError(WimpvarError):
    """Malformed input data (non-finite values, ragged CSV, duplicates)."""


class EstimationError(WimpvarError):
    """Estimation or bootstrap failure (singular moments, explosive fits)."""
