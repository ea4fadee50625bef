"""
Shared fixtures for the test suite
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.conformal.scores import ScoreFn, ScoreKind
from src.conformal.vcp import calibrate
from src.core.datasets import Dataset, split_dataset
from src.core.rng import RngStream
from src.data.synth import SynthSpec, generate
from src.predictors.linear import LinearMean, fit_linear_mean

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def fixture_csv():
    return os.path.join(FIXTURES, 'mixture_500.csv')


@pytest.fixture(scope='session')
def mixture_folds():
    """Mixture data (mu=20) split into 1000 train / 2000 calibration / 5000 test rows"""
    data = generate(SynthSpec(kind='mixture', n=8000, d=2, mu=20.0, seed=7))
    return split_dataset(data, (0.125, 0.25, 0.625), RngStream(7).child(1))


@pytest.fixture(scope='session')
def mixture_cp(mixture_folds):
    train, calib, _ = mixture_folds
    return calibrate(fit_linear_mean(train), ScoreFn(ScoreKind.ABS_RESIDUAL), calib)


@pytest.fixture
def identity_model():
    """mu(x) = 0 in one dimension"""
    return LinearMean(weights=np.zeros(1), intercept=0.0)


def make_regression(targets, features=None):
    targets = np.asarray(targets, dtype=np.float64)
    if features is None:
        features = np.zeros((targets.size, 1))
    return Dataset(features=features, targets=targets)


@pytest.fixture
def regression_data():
    return make_regression
