"""
Non-conformity scores and their threshold-to-set inverses

For every kind, y is in invert(fn, x, t, model) exactly when score(fn, x, y, model) <= t.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from src.core.errors import ConfigError, ScaleUnderflow
from src.core.types import Interval, LabelSet, NullSet, QuantileBand, ResidualBall
from src.predictors.linear import LinearMean, LinearQuantile, Logistic, predict, predict_batch


class ScoreKind(str, Enum):
    ABS_RESIDUAL = 'abs_residual'
    CQR = 'cqr'
    SOFTMAX = 'softmax'
    NORMALIZED = 'normalized'


MODEL_FOR_KIND = {
    ScoreKind.ABS_RESIDUAL: LinearMean,
    ScoreKind.NORMALIZED: LinearMean,
    ScoreKind.CQR: LinearQuantile,
    ScoreKind.SOFTMAX: Logistic,
}


@dataclass(frozen=True)
class ScoreFn:
    """Score kind plus, for the normalized residual, the scale model and its floor"""

    kind: ScoreKind
    scale_model: Optional[object] = None
    floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', ScoreKind(self.kind))
        if self.floor < 0:
            raise ConfigError(f"scale floor must be >= 0, got {self.floor}", field='score')

    @classmethod
    def named(cls, name, scale_model=None, floor=0.0):
        try:
            return cls(ScoreKind(name), scale_model=scale_model, floor=floor)
        except ValueError as e:
            choices = ', '.join(k.value for k in ScoreKind)
            raise ConfigError(f"unknown score '{name}' (expected one of: {choices})", field='score') from e

    @property
    def task(self):
        return 'classification' if self.kind == ScoreKind.SOFTMAX else 'regression'


def check_model(fn, model):
    expected = MODEL_FOR_KIND[fn.kind]
    if not isinstance(model, expected):
        raise ConfigError(f"score '{fn.kind.value}' needs a {expected.kind} model, got {type(model).__name__}",
                          field='score')


def _scale(fn, x, scale):
    """Effective sigma(x): the explicit draw if given, else the scale model, floored"""
    if scale is None:
        if fn.scale_model is None:
            return 1.0
        scale = predict(fn.scale_model, x)
    return max(float(scale), fn.floor)


def score(fn, x, y, model, *, scale=None):
    """Non-conformity of response y at features x

    Raises:
        ScaleUnderflow: normalized score with effective scale <= 0
    """
    check_model(fn, model)
    if fn.kind == ScoreKind.ABS_RESIDUAL:
        return abs(y - predict(model, x))
    if fn.kind == ScoreKind.CQR:
        lo, hi = predict(model, x)
        return max(lo - y, y - hi)
    if fn.kind == ScoreKind.SOFTMAX:
        return 1.0 - float(predict(model, x)[int(y)])
    sigma = _scale(fn, x, scale)
    if sigma <= 0:
        raise ScaleUnderflow(f"normalized score needs sigma(x) > 0, got {sigma}")
    return abs(y - predict(model, x)) / sigma


def score_batch(fn, features, responses, model, *, scales=None):
    """Vectorized score over rows; same definitions as `score`"""
    check_model(fn, model)
    responses = np.asarray(responses)
    if fn.kind == ScoreKind.ABS_RESIDUAL:
        return np.abs(responses - predict_batch(model, features))
    if fn.kind == ScoreKind.CQR:
        lo, hi = predict_batch(model, features)
        return np.maximum(lo - responses, responses - hi)
    if fn.kind == ScoreKind.SOFTMAX:
        probs = predict_batch(model, features)
        return 1.0 - probs[np.arange(len(responses)), responses.astype(np.int64)]
    if scales is None:
        scales = predict_batch(fn.scale_model, features) if fn.scale_model is not None else np.ones(len(responses))
    sigma = np.maximum(np.asarray(scales, dtype=np.float64), fn.floor)
    if np.any(sigma <= 0):
        raise ScaleUnderflow(f"normalized score needs sigma(x) > 0, got min {sigma.min()}")
    return np.abs(responses - predict_batch(model, features)) / sigma


def invert(fn, x, threshold, model, *, scale=None):
    """Prediction set {y : score(fn, x, y, model) <= threshold}

    A negative residual threshold gives the empty set; +inf gives the whole
    response space. A normalized score at the 0+ scale collapses to {mu(x)}.
    """
    check_model(fn, model)
    t = float(threshold)
    if fn.kind == ScoreKind.SOFTMAX:
        probs = predict(model, x)
        if math.isinf(t) and t > 0:
            return LabelSet(frozenset(range(len(probs))))
        return LabelSet(frozenset(k for k, p in enumerate(probs) if 1.0 - float(p) <= t))

    if fn.kind == ScoreKind.CQR:
        lo, hi = predict(model, x)
        if math.isinf(t) and t > 0:
            return Interval.full_line()
        if lo - t > hi + t:
            return NullSet()
        return QuantileBand.widen(lo, hi, t)

    center = predict(model, x)
    sigma = 1.0 if fn.kind == ScoreKind.ABS_RESIDUAL else _scale(fn, x, scale)
    if sigma < 0:
        raise ScaleUnderflow(f"normalized set needs sigma(x) >= 0, got {sigma}")
    if t < 0:
        return NullSet()
    if sigma == 0:
        return Interval.singleton(center)
    if math.isinf(t):
        return Interval.full_line()
    return ResidualBall.around(center, t, sigma)


def null_set(fn, x, model):
    """Measure-zero set of the task: {mu(x)}, the CQR band midpoint, or no labels"""
    check_model(fn, model)
    if fn.kind == ScoreKind.SOFTMAX:
        return LabelSet(frozenset())
    if fn.kind == ScoreKind.CQR:
        lo, hi = predict(model, x)
        return Interval.singleton(0.5 * (lo + hi))
    return Interval.singleton(predict(model, x))
