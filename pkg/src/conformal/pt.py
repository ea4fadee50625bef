"""
Prejudicial Trick: a randomized wrapper over a calibrated predictor

With probability 1 - p the wrapper returns a measure-zero set (or, in two-level
mode, the base set at a large miscoverage alpha1'); otherwise it returns the
base set at the adjusted miscoverage chosen so that marginal coverage stays 1 - alpha.
Also holds the two-point localized-CP predictor that reproduces the same effect.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.core.errors import ConfigError, InvalidKeepProbability
from src.core.rng import uniform
from src.core.types import Level
from src.predictors.linear import TwoPointScale, predict
from .scores import ScoreFn, ScoreKind, invert, null_set
from .vcp import empirical_quantile

logger = logging.getLogger(__name__)

DEFAULT_ALPHA1 = 0.9


class PTMode(str, Enum):
    NULL_SET = 'null'
    TWO_LEVEL = 'two_level'


def adjusted_alpha(alpha, p):
    """alpha' = 1 - (1 - alpha) / p, so that p * (1 - alpha') = 1 - alpha

    Raises:
        InvalidKeepProbability: unless 1 - alpha < p <= 1
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"Miscoverage rate must lie in (0, 1), got {alpha}")
    if not (1.0 - alpha) < p <= 1.0:
        raise InvalidKeepProbability(f"keep probability p={p} must lie in ({1.0 - alpha:.6g}, 1] for alpha={alpha}")
    adjusted = 1.0 - (1.0 - alpha) / p
    if adjusted <= 0.0:
        raise InvalidKeepProbability(f"p={p} is too close to 1 - alpha={1.0 - alpha} to leave a positive alpha'")
    return adjusted


def solve_alpha2(alpha, p, alpha1):
    """alpha2' = (alpha - (1 - p) * alpha1') / p"""
    return (alpha - (1.0 - p) * alpha1) / p


@dataclass(frozen=True)
class PTConfig:
    """Keep probability, mode and target miscoverage of a PT wrapper"""

    p: float
    target_alpha: float
    mode: PTMode = PTMode.NULL_SET
    alpha1: float = DEFAULT_ALPHA1

    def __post_init__(self):
        object.__setattr__(self, 'mode', PTMode(self.mode))
        # raises on p outside (1 - alpha, 1]
        adjusted_alpha(self.target_alpha, self.p)
        if self.mode == PTMode.TWO_LEVEL:
            if not 0.0 < self.alpha1 < 1.0:
                raise ConfigError(f"alpha1 must lie in (0, 1), got {self.alpha1}", field='pt.alpha1')
            alpha2 = solve_alpha2(self.target_alpha, self.p, self.alpha1)
            if not 0.0 < alpha2 < 1.0:
                raise ConfigError(
                    f"alpha1={self.alpha1} with p={self.p}, alpha={self.target_alpha} gives alpha2={alpha2:.6g} outside (0, 1)",
                    field='pt.alpha1',
                )

    @property
    def adjusted(self):
        return adjusted_alpha(self.target_alpha, self.p)

    @property
    def alpha2(self):
        return solve_alpha2(self.target_alpha, self.p, self.alpha1)

    @property
    def meaningful_level(self):
        """Level of the base set returned with probability p"""
        if self.mode == PTMode.TWO_LEVEL:
            return Level(self.alpha2)
        return Level(self.adjusted)


@dataclass(frozen=True, eq=False)
class PTPredictor:
    base: object
    config: PTConfig

    @property
    def task(self):
        return self.base.task

    def predict(self, x, level, rng):
        if abs(level.alpha - self.config.target_alpha) > 1e-12:
            raise ValueError(f"PT wrapper built for alpha={self.config.target_alpha}, asked for {level.alpha}")
        return pt_predict(self, x, rng)

    def meaningful_set(self, x):
        """The base set of the p-branch, without drawing a coin"""
        return self.base.predict(x, self.config.meaningful_level)

    def __repr__(self):
        return f"<PTPredictor(p={self.config.p}, mode={self.config.mode.value}, alpha={self.config.target_alpha})>"


def pt_predict(pt, x, rng):
    """One PT prediction: U = uniform(rng); U > p takes the vacuous branch"""
    u = uniform(rng)
    if u > pt.config.p:
        if pt.config.mode == PTMode.TWO_LEVEL:
            return pt.base.predict(x, Level(pt.config.alpha1))
        return null_set(pt.base.score_fn, x, pt.base.model)
    return pt.meaningful_set(x)


def pt_predict_batch(pt, features, rng):
    """One coin per row, drawn from child stream i of `rng`"""
    return [pt_predict(pt, x, rng.child(i)) for i, x in enumerate(np.atleast_2d(features))]


# ========== LOCALIZED CP WITH A TWO-POINT SCALE ==========

@dataclass(frozen=True, eq=False)
class LocalizedPredictor:
    """Normalized-residual CP whose scale model only outputs 0+ or 1

    Calibration samples drawn at 0+ carry a +inf score; the draws are frozen here.
    """

    model: object
    score_fn: ScoreFn
    calib_scores: np.ndarray
    p: float

    @property
    def n(self):
        return self.calib_scores.shape[0]

    @property
    def task(self):
        return 'regression'

    @property
    def kept_fraction(self):
        return float(np.mean(np.isfinite(self.calib_scores)))

    def threshold(self, level):
        tau = (1.0 - level.alpha) * (1.0 + 1.0 / self.n)
        return empirical_quantile(self.calib_scores, tau)

    def predict(self, x, level, rng):
        scale = predict(self.score_fn.scale_model, x, rng)
        return invert(self.score_fn, x, self.threshold(level), self.model, scale=scale)


def calibrate_localized(base, p, rng, level=None):
    """Freeze one calibration-side two-point scale draw per sample of `base`"""
    if base.score_fn.kind != ScoreKind.ABS_RESIDUAL:
        raise ConfigError("localized CP is built on an absolute-residual base", field='score')
    if level is not None:
        adjusted_alpha(level.alpha, p)
    scale_model = TwoPointScale(p_keep=p, dim=base.model.dim)
    keep = rng.uniforms(base.n) <= p
    scores = np.sort(np.where(keep, base.calib_scores, np.inf))
    logger.info(f"Localized calibration: kept {int(keep.sum())}/{base.n} scores at scale 1")
    return LocalizedPredictor(
        model=base.model,
        score_fn=ScoreFn(ScoreKind.NORMALIZED, scale_model=scale_model),
        calib_scores=scores,
        p=p,
    )


def localized_pt_equivalence(base, p, x, rng, level=Level(0.1), localized=None):
    """Localized-CP set and PT set at x, both driven by the same coin

    The localized scale draw and the PT coin read the same uniform, so a 0+
    draw coincides with the PT null branch.
    """
    if localized is None:
        localized = calibrate_localized(base, p, rng.child(0), level)
    coin = rng.copy()
    localized_set = localized.predict(x, level, rng)
    pt = PTPredictor(base=base, config=PTConfig(p=p, target_alpha=level.alpha))
    return localized_set, pt_predict(pt, x, coin)
