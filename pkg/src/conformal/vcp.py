"""
Split (vanilla) conformal prediction
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.core.errors import DataError, EmptyScores
from src.core.types import Level
from .scores import check_model, invert, score_batch

logger = logging.getLogger(__name__)

# absorbs binary rounding in (n+1)(1-tau) so exact decimal products keep their index
INDEX_SLACK = 1e-9


def order_index(n, tau):
    """k = ceil((n+1)(1-tau)) over decreasing order statistics"""
    return math.ceil((n + 1) * (1.0 - tau) - INDEX_SLACK)


def empirical_quantile(scores, tau):
    """Empirical tau-quantile Z_(k) of ascending-sorted `scores`, Z_(1) the largest

    k <= 0 gives +inf, k > n gives the minimum.

    Raises:
        EmptyScores: if `scores` is empty
    """
    n = len(scores)
    if n == 0:
        raise EmptyScores("Empirical quantile of an empty score list")
    if not 0.0 < tau <= 1.0 + 1.0 / n:
        raise ValueError(f"Quantile level must lie in (0, 1], got {tau}")
    k = order_index(n, tau)
    if k <= 0:
        return math.inf
    if k > n:
        return float(scores[0])
    return float(scores[n - k])


@dataclass(frozen=True, eq=False)
class CalibratedPredictor:
    """Frozen model, score function and ascending calibration scores"""

    model: object
    score_fn: object
    calib_scores: np.ndarray
    _thresholds: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        scores = np.array(self.calib_scores, dtype=np.float64)
        if scores.size == 0:
            raise EmptyScores("Calibration produced no scores")
        if not np.all(np.isfinite(scores)):
            raise DataError("Calibration scores must be finite")
        scores.sort()
        scores.setflags(write=False)
        object.__setattr__(self, 'calib_scores', scores)

    @property
    def n(self):
        return self.calib_scores.shape[0]

    @property
    def task(self):
        return self.score_fn.task

    def threshold(self, level):
        alpha = level.alpha
        if alpha not in self._thresholds:
            self._thresholds[alpha] = vcp_threshold(self, level)
        return self._thresholds[alpha]

    def predict(self, x, level, rng=None):
        return invert(self.score_fn, x, self.threshold(level), self.model)

    def __repr__(self):
        return f"<CalibratedPredictor(score={self.score_fn.kind.value}, n={self.n})>"


def calibrate(model, score_fn, calib):
    """Score every calibration sample and freeze the sorted scores

    Raises:
        EmptyScores: if `calib` has no samples
    """
    if calib is None or len(calib) == 0:
        raise EmptyScores("Calibration fold is empty")
    check_model(score_fn, model)
    if calib.task != score_fn.task:
        raise DataError(f"score '{score_fn.kind.value}' needs {score_fn.task} data, got {calib.task}")
    scores = score_batch(score_fn, calib.features, calib.responses, model)
    cp = CalibratedPredictor(model=model, score_fn=score_fn, calib_scores=scores)
    logger.info(f"Calibrated on {cp.n} samples: median score {float(np.median(cp.calib_scores)):.4f}")
    return cp


def vcp_quantile(scores, level):
    """Q_{(1-alpha)(1+1/n)} of ascending-sorted `scores`; +inf when the index overflows"""
    n = len(scores)
    if n == 0:
        raise EmptyScores("VCP threshold of an empty score list")
    return empirical_quantile(scores, (1.0 - level.alpha) * (1.0 + 1.0 / n))


def vcp_threshold(cp, level):
    return vcp_quantile(cp.calib_scores, level)


def vcp_predict(cp, x, level):
    return invert(cp.score_fn, x, vcp_threshold(cp, level), cp.model)


def as_level(alpha):
    return alpha if isinstance(alpha, Level) else Level(alpha)
