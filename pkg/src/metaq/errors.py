class MetaQError(Exception):
    """Base class for errors raised by metaq."""


class DataError(MetaQError, ValueError):
    """Input data violates a model requirement (sizes, SDs, file layout)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(MetaQError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""


class ConvergenceError(NumericalError):
    pass


class MomentExistenceError(NumericalError):
    """A requested moment of the noncentral t law does not exist."""


class DegenerateFitError(NumericalError):
    """Two-moment gamma fit impossible: second moment not above squared mean."""
