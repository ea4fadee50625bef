"""
Prediction sets and miscoverage levels
"""

import math
from dataclasses import dataclass
from enum import Enum


class Verdict(str, Enum):
    """Outcome of a sufficient-condition check"""

    HOLDS = 'holds'
    FAILS = 'fails'
    BOUNDARY = 'boundary'
    IMPROVES = 'improves'
    NO_GUARANTEE = 'no-guarantee'


class PredictionSet:
    """Set-valued prediction: an interval, a finite label set, or the null set"""

    @property
    def measure(self):
        raise NotImplementedError

    def contains(self, y):
        raise NotImplementedError

    @property
    def is_null(self):
        return self.measure == 0


@dataclass(frozen=True)
class Interval(PredictionSet):
    """Closed interval [lo, hi]; lo == hi is a measure-zero singleton"""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"Interval lower bound {self.lo} exceeds upper bound {self.hi}")

    @property
    def measure(self):
        return self.hi - self.lo

    @property
    def half_measure(self):
        return 0.5 * (self.hi - self.lo)

    def contains(self, y):
        return self.lo <= y <= self.hi

    def is_subset(self, other):
        if isinstance(other, NullSet):
            return False
        return other.lo <= self.lo and self.hi <= other.hi

    @classmethod
    def full_line(cls):
        return cls(-math.inf, math.inf)

    @classmethod
    def singleton(cls, point):
        return cls(point, point)


@dataclass(frozen=True)
class ResidualBall(Interval):
    """{y : |y - center| / scale <= radius}

    Membership is evaluated with the same arithmetic as the residual score,
    so y is inside exactly when its score does not exceed the radius.
    """

    center: float = 0.0
    radius: float = 0.0
    scale: float = 1.0

    @classmethod
    def around(cls, center, radius, scale=1.0):
        half = radius * scale
        return cls(center - half, center + half, center, radius, scale)

    @property
    def measure(self):
        return 2.0 * self.radius * self.scale

    @property
    def half_measure(self):
        return self.radius * self.scale

    def contains(self, y):
        return abs(y - self.center) / self.scale <= self.radius


@dataclass(frozen=True)
class QuantileBand(Interval):
    """{y : max(q_lo - y, y - q_hi) <= threshold}, the inverse of the CQR score"""

    q_lo: float = 0.0
    q_hi: float = 0.0
    threshold: float = 0.0

    @classmethod
    def widen(cls, q_lo, q_hi, threshold):
        return cls(q_lo - threshold, q_hi + threshold, q_lo, q_hi, threshold)

    def contains(self, y):
        return max(self.q_lo - y, y - self.q_hi) <= self.threshold


@dataclass(frozen=True)
class LabelSet(PredictionSet):
    """Finite set of class labels; the empty set is the classification null set"""

    labels: frozenset

    @property
    def measure(self):
        return len(self.labels)

    @property
    def half_measure(self):
        return 0.5 * len(self.labels)

    def contains(self, y):
        return int(y) in self.labels

    def is_subset(self, other):
        if isinstance(other, NullSet):
            return not self.labels
        return self.labels <= other.labels


@dataclass(frozen=True)
class NullSet(PredictionSet):
    """Empty response set (e.g. a negative absolute-residual threshold)"""

    @property
    def measure(self):
        return 0.0

    @property
    def half_measure(self):
        return 0.0

    def contains(self, y):
        return False

    def is_subset(self, other):
        return True


@dataclass(frozen=True)
class Level:
    """Target miscoverage rate alpha in (0, 1)"""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"Miscoverage rate must lie in (0, 1), got {self.alpha}")

    @property
    def coverage(self):
        return 1.0 - self.alpha
