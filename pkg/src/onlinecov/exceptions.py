"""Exception hierarchy shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad rate, step size, regularizer or run config."""


class DataError(ValueError):
    """Malformed data: scores out of range, unparsable CSV rows, bad shapes.

    ``line`` carries the 1-based file line number when the error comes from
    a file.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(DataError):
    """Group vector length does not match the number of groups ``k``."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed to converge."""
