"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit 2, ``DataError`` to exit 3 and
``NumericalError`` to exit 4.
"""


class GradOverlapError(Exception):
    pass


class ConfigError(GradOverlapError, ValueError):
    pass


class DataError(GradOverlapError, ValueError):
    pass


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class NoValidSamplesError(DataError):
    """A task has no measured samples in the requested subset."""


class InsufficientSamplesError(DataError):
    pass


class InsufficientDataError(DataError):
    """Too few jointly valid entries to compute a statistic."""


class NumericalError(GradOverlapError, ArithmeticError):
    pass


class TrainingError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UndefinedCorrelationError(NumericalError):
    pass


class FitError(NumericalError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class EmptyWindowError(NumericalError):
    pass
