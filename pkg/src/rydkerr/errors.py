"""Exception types shared by all modules."""


class ValidationError(ValueError):
    """Invalid physical parameters, inputs or configuration.

    ``path`` is the dotted config path of the offending field when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NumericalError(RuntimeError):
    """A quadrature, interpolation or series evaluation failed to converge."""
