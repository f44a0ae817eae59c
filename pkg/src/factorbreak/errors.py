"""Exception hierarchy shared by every module."""


class FactorBreakError(Exception):
    """Base class for all package errors."""


class ParameterError(FactorBreakError, ValueError):
    """An argument or configuration value violates its documented range."""


class NumericalError(FactorBreakError, ArithmeticError):
    """A linear-algebra step failed or produced an unusable result."""


class ExperimentError(FactorBreakError, RuntimeError):
    """Too many Monte Carlo replications failed."""
