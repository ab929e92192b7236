"""Exception hierarchy shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all gibbsauc errors."""


class DataError(ToolkitError):
    """Malformed input data or an invalid split/fold request."""


class NumericalError(ToolkitError):
    """A numerical routine failed beyond its built-in recovery (e.g. EP
    could not keep the global covariance positive definite)."""
