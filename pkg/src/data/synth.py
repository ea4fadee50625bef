"""
Synthetic data generators
- mixture:  y = x.beta + eps, eps ~ N(+mu, 1) or N(-mu, 1) with probability 1/2 each
- gaussian: y = x.beta + eps, eps ~ N(0, sigma^2)
- logistic: labels drawn from softmax(x.W)
Features are standard normal. All randomness flows from one RngStream, one
child stream per block of 1024 samples.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.datasets import Dataset
from src.core.errors import ConfigError
from src.core.rng import RngStream
from src.theory.special import std_normal_cdf_array, std_normal_inv_cdf, std_normal_inv_cdf_array

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024
WEIGHTS_STREAM = 0xFFFFFFFF

KINDS = ('mixture', 'gaussian', 'logistic')


@dataclass(frozen=True)
class SynthSpec:
    """Generator kind with its parameters, sample count and seed"""

    kind: str = 'mixture'
    n: int = 10000
    d: int = 2
    beta: Optional[tuple] = None
    mu: float = 20.0
    sigma: float = 1.0
    k: int = 4
    weights: Optional[tuple] = None
    n_groups: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown generator '{self.kind}' (expected one of: {', '.join(KINDS)})", field='data.kind')
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}", field='data.n')
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}", field='data.d')
        if self.mu < 0:
            raise ConfigError(f"mu must be >= 0, got {self.mu}", field='data.mu')
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}", field='data.sigma')
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}", field='data.k')
        if self.n_groups is not None and self.n_groups < 2:
            raise ConfigError(f"n_groups must be >= 2, got {self.n_groups}", field='data.n_groups')
        if self.beta is not None and len(self.beta) != self.d:
            raise ConfigError(f"beta has {len(self.beta)} entries, expected d={self.d}", field='data.beta')

    @property
    def coefficients(self):
        """beta, defaulting to (1, -1, 1, -1, ...)"""
        if self.beta is not None:
            return np.asarray(self.beta, dtype=np.float64)
        return np.array([1.0 if j % 2 == 0 else -1.0 for j in range(self.d)])


def standard_normal(rng):
    """One N(0, 1) draw by inverse-CDF transform of an open-interval uniform"""
    return std_normal_inv_cdf(rng.open_uniform())


def standard_normals(rng, size):
    return std_normal_inv_cdf_array(rng.open_uniforms(size))


def class_weights(spec, rng):
    if spec.weights is not None:
        weights = np.asarray(spec.weights, dtype=np.float64)
        if weights.shape != (spec.d, spec.k):
            raise ConfigError(f"weights must have shape ({spec.d}, {spec.k}), got {weights.shape}", field='data.weights')
        return weights
    return standard_normals(rng.child(WEIGHTS_STREAM), spec.d * spec.k).reshape(spec.d, spec.k)


def _block(spec, stream, m, weights):
    features = standard_normals(stream, m * spec.d).reshape(m, spec.d)
    if spec.kind == 'logistic':
        logits = features @ weights
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        draws = stream.uniforms(m)
        labels = (np.cumsum(probs, axis=1) > draws[:, None]).argmax(axis=1)
        return features, None, labels

    noise = standard_normals(stream, m)
    if spec.kind == 'mixture':
        signs = np.where(stream.uniforms(m) < 0.5, 1.0, -1.0)
        noise = noise + signs * spec.mu
    else:
        noise = spec.sigma * noise
    return features, features @ spec.coefficients + noise, None


def group_tags(features, n_groups):
    """Equal-mass bins of the first feature: floor(Phi(x0) * G)"""
    bins = np.minimum((std_normal_cdf_array(features[:, 0]) * n_groups).astype(np.int64), n_groups - 1)
    return np.array([f"g{b}" for b in bins])


def generate(spec, rng=None):
    """Draw spec.n i.i.d. samples; deterministic given the stream (default: RngStream(spec.seed))"""
    rng = rng if rng is not None else RngStream(spec.seed)
    weights = class_weights(spec, rng) if spec.kind == 'logistic' else None

    features, targets, labels = [], [], []
    for b, start in enumerate(range(0, spec.n, BLOCK_SIZE)):
        m = min(BLOCK_SIZE, spec.n - start)
        x, y, c = _block(spec, rng.child(b), m, weights)
        features.append(x)
        if y is not None:
            targets.append(y)
        if c is not None:
            labels.append(c)

    features = np.vstack(features)
    data = Dataset(
        features=features,
        targets=np.concatenate(targets) if targets else None,
        labels=np.concatenate(labels) if labels else None,
        groups=group_tags(features, spec.n_groups) if spec.n_groups else None,
    )
    logger.info(f"Generated {spec.n} {spec.kind} samples (d={spec.d})")
    return data
