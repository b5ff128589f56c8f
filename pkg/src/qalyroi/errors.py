"""Exception hierarchy shared by every module of the package."""


class QalyRoiError(Exception):
    """Base class for all package errors."""


class DomainError(QalyRoiError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(QalyRoiError, ValueError):
    """A configuration object or file is invalid."""


class DataError(QalyRoiError, ValueError):
    """Input data is malformed, degenerate or fails cleaning."""


class SchemaError(DataError):
    """A required CSV column is missing."""

    def __init__(self, column: str):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class DegenerateRegressionError(DataError):
    """The regressor of a least-squares fit has zero variance."""


class CalibrationError(DataError):
    """Not enough usable panel structure to calibrate a parameter."""


class DegeneratePeriodError(DomainError):
    """A period with zero ROI change, where the dynamic index is undefined."""


class StatisticsError(QalyRoiError, ValueError):
    """Too few replications to form a standard error or test statistic."""


class ConvergenceError(QalyRoiError, RuntimeError):
    """No optimizer start converged within the iteration budget.

    The best iterate found (an :class:`~qalyroi.inverse.InverseFit` with
    ``converged=False``) is kept on ``best`` so callers can still inspect it.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
