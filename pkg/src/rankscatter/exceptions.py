"""Exception hierarchy for rankscatter."""


class RankScatterError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(RankScatterError, ValueError):
    pass


class DegenerateConstraint(RankScatterError, ValueError):
    pass


class InvalidParameter(RankScatterError, ValueError):
    pass


class DomainError(RankScatterError, ValueError):
    pass


class ConvergenceFailure(RankScatterError, RuntimeError):
    """Iterative estimator did not reach its tolerance.

    ``residuals`` holds the last residuals observed, when available.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateData(RankScatterError, ValueError):
    pass


class ZeroVector(DegenerateData):
    pass


class InfiniteKurtosis(RankScatterError, ValueError):
    pass


class QuadratureFailure(RankScatterError, RuntimeError):
    pass


class SingularCovariance(RankScatterError, ValueError):
    pass


class KurtosisDenominator(RankScatterError, ValueError):
    pass


class DimensionMismatch(RankScatterError, ValueError):
    pass


class ZeroAlternative(RankScatterError, ValueError):
    pass


class ConfigError(RankScatterError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ParseError(RankScatterError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
