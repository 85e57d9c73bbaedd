"""Exception hierarchy shared across the package."""


class BlockspecError(Exception):
    """Base class for every error raised by blockspec."""


class ConfigError(BlockspecError, ValueError):
    """Invalid run configuration or dimensions."""


class NumericalError(BlockspecError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class NotSymmetric(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class FitFailure(NumericalError):
    pass


class DegenerateData(NumericalError):
    pass
