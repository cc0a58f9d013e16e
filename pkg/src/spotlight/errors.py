"""Exception hierarchy shared by all modules."""


class SpotlightError(Exception):
    """Base class for library errors."""


class InvalidPartitionError(SpotlightError, ValueError):
    pass


class DimensionError(SpotlightError, ValueError):
    pass


class PreconditionError(SpotlightError, ValueError):
    pass


class ConfigError(SpotlightError, ValueError):
    """Invalid run configuration; `field` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericalError(SpotlightError, ArithmeticError):
    """A factorization failed or an iterative solver did not converge."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NoInformationError(NumericalError):
    """Projection removed every data direction."""
