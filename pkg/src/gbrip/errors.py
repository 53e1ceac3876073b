class GbripError(Exception):
    """Base class for library errors."""


class DataError(GbripError):
    """Malformed, missing or inconsistent input data."""


class NumericalError(GbripError):
    """A loss or gradient became non-finite."""
