"""
Exception hierarchy for the conformal toolkit
Each family carries the CLI exit code it maps to
"""


class ConformalError(ValueError):
    """Base class for every error raised by the toolkit"""

    exit_code = 1


# ========== CONFIG (exit 2) ==========

class ConfigError(ConformalError):
    """Invalid experiment configuration"""

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


# ========== DATA (exit 3) ==========

class DataError(ConformalError):
    """Malformed, inconsistent or unreadable data"""

    exit_code = 3


class EmptyPartition(DataError):
    """A split fold would receive no samples"""


class DimensionMismatch(DataError):
    """Feature vector dimension differs from the model's"""


# ========== NUMERIC (exit 4) ==========

class NumericError(ConformalError):
    """A numeric routine cannot produce a valid result"""

    exit_code = 4


class EmptyScores(NumericError):
    """Quantile requested over an empty score list"""


class ScaleUnderflow(NumericError):
    """Normalized score with a non-positive scale estimate"""


class SingularDesign(NumericError):
    """Least-squares system unsolvable even with ridge regularization"""


class Diverged(NumericError):
    """Iterative fit produced a non-finite loss"""


class InvalidKeepProbability(NumericError):
    """PT keep-probability outside (1 - alpha, 1]"""


class InfiniteMeasure(NumericError):
    """Variance requested over sets of infinite measure"""


class GridTooCoarse(NumericError):
    """A tabulated curve does not cover the requested level"""


class DomainError(NumericError):
    """Argument outside the domain of a special function"""
