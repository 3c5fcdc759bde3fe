"""Exception hierarchy shared across the package."""


class BppsError(Exception):
    """Base class for all package errors."""


class DataError(BppsError):
    """Invalid or inconsistent input data."""


class AlignmentError(DataError):
    """Price series could not be aligned onto a common calendar."""


class WindowError(DataError):
    """Not enough history before the requested period."""


class ConfigError(BppsError):
    """Invalid run configuration."""


class NumericalError(BppsError):
    """Non-finite values or unrecoverable linear-algebra failure."""


class InfeasibleError(BppsError):
    """Optimization constraint set is empty."""
