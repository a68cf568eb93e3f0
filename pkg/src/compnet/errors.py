"""Exception hierarchy shared across the package.

Data problems derive from :class:`DataError` and numerical failures from
:class:`NumericalError`; the CLI maps them to distinct exit codes.
"""


class CompnetError(Exception):
    """Base class for all package errors."""


class DataError(CompnetError, ValueError):
    """Input data violates a documented contract."""


class MalformedTable(DataError):
    pass


class NegativeCount(DataError):
    pass


class NonIntegerCount(DataError):
    pass


class DuplicateIds(DataError):
    pass


class TooFewTaxa(DataError):
    pass


class NoSamplesLeft(DataError):
    pass


class ZeroDepthSample(DataError):
    pass


class NonPositiveEntry(DataError):
    pass


class ConstantColumn(DataError):
    pass


class InvalidParameters(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateInput(DataError):
    pass


class NumericalError(CompnetError, ArithmeticError):
    """A numerical routine failed to produce a valid answer."""


class NotPositiveDefinite(NumericalError):
    pass


class BracketError(NumericalError):
    """A bisection search could not bracket its target."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
