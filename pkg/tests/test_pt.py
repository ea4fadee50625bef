"""
Tests for the Prejudicial Trick wrapper and the two-point localized predictor
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.conformal.pt import (
    LocalizedPredictor,
    PTConfig,
    PTMode,
    PTPredictor,
    adjusted_alpha,
    calibrate_localized,
    localized_pt_equivalence,
    pt_predict,
    pt_predict_batch,
    solve_alpha2,
)
from src.conformal.scores import ScoreFn, ScoreKind
from src.conformal.vcp import CalibratedPredictor, vcp_predict
from src.core.errors import ConfigError, InvalidKeepProbability
from src.core.rng import RngStream
from src.core.types import Interval, Level
from src.predictors.linear import LinearMean, Logistic

ABS = ScoreFn(ScoreKind.ABS_RESIDUAL)


def fixed_cp(scores, center=0.0):
    model = LinearMean(weights=np.zeros(1), intercept=center)
    return CalibratedPredictor(model=model, score_fn=ABS, calib_scores=np.asarray(scores, dtype=float))


# ========== ADJUSTED LEVELS ==========

def test_adjusted_alpha_values():
    assert adjusted_alpha(0.1, 0.95) == pytest.approx(0.0526316, abs=1e-7)
    assert adjusted_alpha(0.1, 1.0) == pytest.approx(0.1, abs=1e-15)


@pytest.mark.parametrize("p", [0.9, 0.5, 1.01])
def test_adjusted_alpha_rejects_p(p):
    with pytest.raises(InvalidKeepProbability):
        adjusted_alpha(0.1, p)


@settings(max_examples=500, deadline=None)
@given(alpha=st.floats(min_value=0.001, max_value=0.5), frac=st.floats(min_value=0.01, max_value=1.0))
def test_coverage_identity(alpha, frac):
    p = min(1.0, (1.0 - alpha) + frac * alpha)
    adjusted = adjusted_alpha(alpha, p)
    assert 0.0 < adjusted < alpha + 1e-15
    assert p * (1.0 - adjusted) == pytest.approx(1.0 - alpha, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(alpha=st.floats(min_value=0.05, max_value=0.3), frac=st.floats(min_value=0.05, max_value=0.95))
def test_two_level_constraint(alpha, frac):
    p = (1.0 - alpha) + frac * alpha
    alpha1 = 0.9
    alpha2 = solve_alpha2(alpha, p, alpha1)
    assert (1.0 - p) * alpha1 + p * alpha2 == pytest.approx(alpha, abs=1e-15)


def test_config_validation():
    with pytest.raises(InvalidKeepProbability):
        PTConfig(p=0.85, target_alpha=0.1)
    with pytest.raises(ConfigError):
        PTConfig(p=0.95, target_alpha=0.1, mode='two_level', alpha1=1.5)
    config = PTConfig(p=0.95, target_alpha=0.1, mode='two_level', alpha1=0.9)
    assert config.mode == PTMode.TWO_LEVEL
    assert config.meaningful_level.alpha == pytest.approx((0.1 - 0.05 * 0.9) / 0.95)


# ========== PREDICTION ==========

def test_p_one_equals_vcp():
    cp = fixed_cp(np.arange(1.0, 101.0))
    pt = PTPredictor(base=cp, config=PTConfig(p=1.0, target_alpha=0.1))
    stream = RngStream(5)
    for x in np.linspace(-3, 3, 25).reshape(-1, 1):
        assert pt_predict(pt, x, stream) == vcp_predict(cp, x, Level(0.1))


def test_null_fraction():
    cp = fixed_cp(np.arange(1.0, 101.0), center=3.0)
    pt = PTPredictor(base=cp, config=PTConfig(p=0.95, target_alpha=0.1))
    stream = RngStream(17)
    x = np.zeros(1)
    draws = [pt_predict(pt, x, stream) for _ in range(100_000)]
    nulls = np.array([d.is_null for d in draws])
    assert abs(nulls.mean() - 0.05) < 0.004
    assert all(d == Interval.singleton(3.0) for d, null in zip(draws, nulls) if null)


def test_meaningful_branch_uses_adjusted_threshold():
    scores = np.arange(1.0, 101.0)
    cp = fixed_cp(scores)
    pt = PTPredictor(base=cp, config=PTConfig(p=0.95, target_alpha=0.1))
    # 101 (1 - tau) = 8282/1900, so the 5th largest score
    expected = 96.0
    meaningful = pt.meaningful_set(np.zeros(1))
    assert meaningful.half_measure == expected


def test_wrong_level_is_rejected():
    pt = PTPredictor(base=fixed_cp([1.0, 2.0, 3.0]), config=PTConfig(p=0.95, target_alpha=0.1))
    with pytest.raises(ValueError):
        pt.predict(np.zeros(1), Level(0.2), RngStream(0))


def test_classification_null_is_empty():
    model = Logistic(weights=np.zeros((1, 3)), intercepts=np.zeros(3))
    cp = CalibratedPredictor(model=model, score_fn=ScoreFn(ScoreKind.SOFTMAX), calib_scores=np.full(50, 0.7))
    pt = PTPredictor(base=cp, config=PTConfig(p=0.92, target_alpha=0.1))
    stream = RngStream(1)
    sizes = {pt_predict(pt, np.zeros(1), stream).measure for _ in range(500)}
    assert sizes == {0, 3}


def test_two_level_vacuous_branch():
    cp = fixed_cp(np.arange(1.0, 201.0))
    config = PTConfig(p=0.95, target_alpha=0.1, mode='two_level', alpha1=0.9)
    pt = PTPredictor(base=cp, config=config)
    stream = RngStream(3)
    measures = {pt_predict(pt, np.zeros(1), stream).measure for _ in range(2000)}
    assert measures == {cp.predict(np.zeros(1), Level(0.9)).measure, pt.meaningful_set(np.zeros(1)).measure}


def test_branch_disagreement_rate():
    pt = PTPredictor(base=fixed_cp(np.arange(1.0, 101.0)), config=PTConfig(p=0.95, target_alpha=0.1))
    x = np.zeros(1)
    root = RngStream(77)
    disagreements = [
        pt_predict(pt, x, root.child(2 * i)).is_null != pt_predict(pt, x, root.child(2 * i + 1)).is_null
        for i in range(20_000)
    ]
    assert abs(np.mean(disagreements) - 2 * 0.95 * 0.05) < 0.01


def test_batch_uses_one_child_stream_per_row():
    pt = PTPredictor(base=fixed_cp(np.arange(1.0, 101.0)), config=PTConfig(p=0.95, target_alpha=0.1))
    features = np.linspace(-1, 1, 40).reshape(-1, 1)
    root = RngStream(8)
    batch = pt_predict_batch(pt, features, root)
    assert batch == [pt_predict(pt, x, root.child(i)) for i, x in enumerate(features)]


# ========== LOCALIZED CP ==========

def test_localized_calibration_freezes_infinite_scores(rng):
    cp = fixed_cp(np.arange(1.0, 1001.0))
    localized = calibrate_localized(cp, 0.95, rng)
    assert isinstance(localized, LocalizedPredictor)
    np.testing.assert_array_equal(localized.calib_scores, np.sort(localized.calib_scores))
    assert abs(localized.kept_fraction - 0.95) < 0.03
    assert math.isinf(localized.calib_scores[-1])


def test_localized_needs_abs_residual():
    model = Logistic(weights=np.zeros((1, 2)), intercepts=np.zeros(2))
    cp = CalibratedPredictor(model=model, score_fn=ScoreFn(ScoreKind.SOFTMAX), calib_scores=np.full(5, 0.5))
    with pytest.raises(ConfigError):
        calibrate_localized(cp, 0.95, RngStream(0))


def test_localized_zero_scale_matches_pt_null():
    cp = fixed_cp(np.arange(1.0, 501.0), center=2.0)
    localized = calibrate_localized(cp, 0.92, RngStream(10))
    root = RngStream(11)
    for i in range(300):
        loc_set, pt_set = localized_pt_equivalence(cp, 0.92, np.zeros(1), root.child(i), localized=localized)
        assert loc_set.is_null == pt_set.is_null
        if loc_set.is_null:
            assert loc_set == pt_set == Interval.singleton(2.0)


def test_localized_p_one_is_vcp():
    cp = fixed_cp(np.arange(1.0, 201.0))
    loc_set, pt_set = localized_pt_equivalence(cp, 1.0, np.zeros(1), RngStream(2))
    vcp = vcp_predict(cp, np.zeros(1), Level(0.1))
    assert loc_set.measure == vcp.measure
    assert pt_set == vcp


def test_localized_mean_measure_tracks_pt(mixture_cp):
    level = Level(0.1)
    localized = calibrate_localized(mixture_cp, 0.95, RngStream(3), level)
    root = RngStream(4)
    x = np.zeros(2)
    pairs = [localized_pt_equivalence(mixture_cp, 0.95, x, root.child(i), level, localized) for i in range(10_000)]
    loc_mean = np.mean([a.measure for a, _ in pairs])
    pt_mean = np.mean([b.measure for _, b in pairs])
    assert abs(loc_mean - pt_mean) / pt_mean < 0.03
