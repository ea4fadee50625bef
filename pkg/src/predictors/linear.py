"""
Desk-scale predictors: least-squares mean, pinball-loss quantile lines,
multinomial logistic classifier and the two-point scale used by localized CP
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from src.core.errors import DataError, DimensionMismatch, Diverged, SingularDesign

logger = logging.getLogger(__name__)

RIDGE = 1e-8
CHECKPOINTS = 10


# ========== FITTED MODELS ==========

@dataclass(frozen=True, eq=False)
class LinearMean:
    """mu(x) = x.w + intercept + bias"""

    weights: np.ndarray
    intercept: float
    bias: float = 0.0

    kind = 'linear_mean'
    task = 'regression'

    @property
    def dim(self):
        return self.weights.shape[0]

    def __repr__(self):
        return f"<LinearMean(weights={np.round(self.weights, 4).tolist()}, intercept={self.intercept:.4f}, bias={self.bias})>"


@dataclass(frozen=True, eq=False)
class LinearQuantile:
    """Pair of linear conditional-quantile lines at levels (tau_lo, tau_hi)"""

    lo_weights: np.ndarray
    lo_intercept: float
    hi_weights: np.ndarray
    hi_intercept: float
    levels: tuple
    bias: float = 0.0
    checkpoints: tuple = field(default=(), repr=False)

    kind = 'linear_quantile'
    task = 'regression'

    def __post_init__(self):
        tau_lo, tau_hi = self.levels
        if not 0.0 < tau_lo < tau_hi < 1.0:
            raise ValueError(f"Quantile levels must satisfy 0 < tau_lo < tau_hi < 1, got {self.levels}")

    @property
    def dim(self):
        return self.lo_weights.shape[0]


@dataclass(frozen=True, eq=False)
class Logistic:
    """Multinomial logistic model; `bias` is added to the logits of classes in class_range"""

    weights: np.ndarray
    intercepts: np.ndarray
    bias: float = 0.0
    class_range: tuple = (0, 1)

    kind = 'logistic'
    task = 'classification'

    @property
    def dim(self):
        return self.weights.shape[0]

    @property
    def n_classes(self):
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class TwoPointScale:
    """Scale model emitting 1 with probability p_keep, else the 0+ sentinel (exactly 0.0)"""

    p_keep: float
    dim: Optional[int] = None
    bias: float = 0.0

    kind = 'two_point_scale'
    task = 'regression'

    def __post_init__(self):
        if not 0.0 < self.p_keep <= 1.0:
            raise ValueError(f"p_keep must lie in (0, 1], got {self.p_keep}")


# ========== HELPERS ==========

def _design(data):
    if len(data) == 0:
        raise DataError("Cannot fit a model on an empty dataset")
    return data.features, data.responses


def _standardize(features):
    center = features.mean(axis=0)
    spread = features.std(axis=0)
    spread = np.where(spread > 0, spread, 1.0)
    return (features - center) / spread, center, spread


def _unstandardize(weights, intercept, center, spread):
    raw = weights / spread
    return raw, intercept - float(center @ raw)


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expo = np.exp(shifted)
    return expo / expo.sum(axis=-1, keepdims=True)


def _check_dim(model, x):
    x = np.asarray(x, dtype=np.float64)
    expected = model.dim
    got = x.shape[-1] if x.ndim else 1
    if expected is not None and got != expected:
        raise DimensionMismatch(f"{model.kind} expects {expected} features, got {got}")
    return x


# ========== LEAST SQUARES ==========

def fit_linear_mean(train):
    """Ordinary least squares via the normal equations, ridge fallback on rank deficiency"""
    features, targets = _design(train)
    n, d = features.shape
    if train.task != 'regression':
        raise DataError("fit_linear_mean needs a regression dataset")
    if n <= d + 1:
        raise DataError(f"Least squares needs more than d+1={d + 1} samples, got {n}")

    design = np.hstack([features, np.ones((n, 1))])
    gram = design.T @ design
    moment = design.T @ targets

    solution = None
    if np.linalg.matrix_rank(gram) == d + 1:
        try:
            solution = np.linalg.solve(gram, moment)
        except np.linalg.LinAlgError:
            solution = None
    if solution is None or not np.all(np.isfinite(solution)):
        logger.warning(f"Design matrix is rank deficient, retrying with ridge {RIDGE}")
        try:
            solution = np.linalg.solve(gram + RIDGE * np.eye(d + 1), moment)
        except np.linalg.LinAlgError as e:
            raise SingularDesign(f"Ridge-regularized normal equations failed: {e}") from e
        if not np.all(np.isfinite(solution)):
            raise SingularDesign("Ridge-regularized normal equations returned non-finite weights")

    model = LinearMean(weights=solution[:d].copy(), intercept=float(solution[d]))
    logger.info(f"Fitted {model}")
    return model


# ========== PINBALL QUANTILE REGRESSION ==========

def pinball_loss(residuals, tau):
    """Mean of rho_tau(u) = u * (tau - 1{u < 0})"""
    residuals = np.asarray(residuals, dtype=np.float64)
    return float(np.mean(residuals * (tau - (residuals < 0))))


def pinball_objective(params, design, targets, tau):
    """Mean pinball loss of the linear predictor design @ params"""
    return pinball_loss(targets - design @ params, tau)


def pinball_gradient(params, design, targets, tau):
    """Subgradient of pinball_objective; kinks (u == 0) take the tau branch"""
    residuals = targets - design @ params
    slope = tau - (residuals < 0)
    return -(design.T @ slope) / design.shape[0]


def _fit_pinball(design, targets, tau, steps, lr):
    params = np.zeros(design.shape[1])
    params[-1] = float(np.quantile(targets, tau))

    loss = pinball_objective(params, design, targets, tau)
    if not math.isfinite(loss):
        raise Diverged(f"Initial pinball loss is not finite at tau={tau}")
    best_params, best_loss = params.copy(), loss
    every = max(1, steps // CHECKPOINTS)
    checkpoints = [best_loss]

    for step in range(1, steps + 1):
        params = params - lr * pinball_gradient(params, design, targets, tau)
        loss = pinball_objective(params, design, targets, tau)
        if not math.isfinite(loss):
            raise Diverged(f"Pinball loss became non-finite at step {step} (tau={tau}, lr={lr})")
        if loss < best_loss:
            best_params, best_loss = params.copy(), loss
        if step % every == 0:
            checkpoints.append(best_loss)
            logger.debug(f"tau={tau} step {step}/{steps}: best pinball loss {best_loss:.6f}")

    return best_params, tuple(checkpoints)


def fit_linear_quantile(train, tau_lo=0.05, tau_hi=0.95, steps=2000, lr=0.05):
    """Lower and upper linear quantile lines by full-batch pinball subgradient descent

    Features are standardized internally; the returned weights act on raw features.
    The best iterate is kept, so the loss never ends above its starting value.
    """
    if not 0.0 < tau_lo < tau_hi < 1.0:
        raise ValueError(f"Quantile levels must satisfy 0 < tau_lo < tau_hi < 1, got ({tau_lo}, {tau_hi})")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if train.task != 'regression':
        raise DataError("fit_linear_quantile needs a regression dataset")
    features, targets = _design(train)
    scaled, center, spread = _standardize(features)
    design = np.hstack([scaled, np.ones((scaled.shape[0], 1))])

    lines = []
    trace = []
    for tau in (tau_lo, tau_hi):
        params, checkpoints = _fit_pinball(design, targets, tau, steps, lr)
        lines.append(_unstandardize(params[:-1], float(params[-1]), center, spread))
        trace.append(checkpoints)
        logger.info(f"Quantile line tau={tau}: pinball loss {checkpoints[0]:.4f} -> {checkpoints[-1]:.4f}")

    (lo_w, lo_b), (hi_w, hi_b) = lines
    return LinearQuantile(
        lo_weights=lo_w, lo_intercept=lo_b,
        hi_weights=hi_w, hi_intercept=hi_b,
        levels=(tau_lo, tau_hi),
        checkpoints=tuple(trace),
    )


# ========== LOGISTIC CLASSIFIER ==========

def default_class_range(n_classes):
    return (0, max(1, n_classes * 3 // 10))


def fit_logistic(train, steps=500, lr=0.5, l2=1e-4, n_classes=None):
    """Multinomial logistic regression by full-batch gradient descent on standardized features"""
    if train.task != 'classification':
        raise DataError("fit_logistic needs a classification dataset")
    features, labels = _design(train)
    k = n_classes or max(2, int(labels.max()) + 1)
    scaled, center, spread = _standardize(features)
    n, d = scaled.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0

    weights = np.zeros((d, k))
    intercepts = np.zeros(k)
    for step in range(1, steps + 1):
        residual = _softmax(scaled @ weights + intercepts) - onehot
        weights -= lr * (scaled.T @ residual / n + l2 * weights)
        intercepts -= lr * residual.mean(axis=0)
        if not np.all(np.isfinite(weights)):
            raise Diverged(f"Logistic weights became non-finite at step {step}")

    raw = weights / spread[:, None]
    model = Logistic(
        weights=raw,
        intercepts=intercepts - center @ raw,
        class_range=default_class_range(k),
    )
    logger.info(f"Fitted logistic classifier: d={d}, classes={k}")
    return model


# ========== BIAS INJECTION ==========

def inject_bias(model, b, class_range=None):
    """Shift predictions by +b (regression) or the logits of class_range by +b (classification)"""
    if isinstance(model, Logistic):
        lo, hi = class_range or model.class_range
        if not 0 <= lo < hi <= model.n_classes:
            raise ValueError(f"class_range {(lo, hi)} outside 0..{model.n_classes}")
        return replace(model, bias=model.bias + b, class_range=(lo, hi))
    return replace(model, bias=model.bias + b)


# ========== PREDICTION ==========

def _logits(model, x):
    logits = x @ model.weights + model.intercepts
    if model.bias:
        lo, hi = model.class_range
        logits = logits.copy()
        logits[..., lo:hi] += model.bias
    return logits


def predict(model, x, rng=None):
    """Prediction for one feature vector

    LinearMean -> float, LinearQuantile -> (lo, hi), Logistic -> probability vector,
    TwoPointScale -> 1.0 or 0.0 (needs rng; one uniform draw, scale 1 iff u <= p_keep).
    """
    x = _check_dim(model, x)
    if isinstance(model, LinearMean):
        return float(x @ model.weights + model.intercept) + model.bias
    if isinstance(model, LinearQuantile):
        lo = float(x @ model.lo_weights + model.lo_intercept) + model.bias
        hi = float(x @ model.hi_weights + model.hi_intercept) + model.bias
        return lo, hi
    if isinstance(model, Logistic):
        return _softmax(_logits(model, x))
    if isinstance(model, TwoPointScale):
        if rng is None:
            raise ValueError("TwoPointScale draws need an RngStream")
        return 1.0 if rng.uniform() <= model.p_keep else 0.0
    raise TypeError(f"Unknown model type {type(model).__name__}")


def predict_batch(model, features, rng=None):
    """Vectorized predict over the rows of `features`"""
    features = _check_dim(model, np.atleast_2d(features))
    if isinstance(model, LinearMean):
        return features @ model.weights + model.intercept + model.bias
    if isinstance(model, LinearQuantile):
        lo = features @ model.lo_weights + model.lo_intercept + model.bias
        hi = features @ model.hi_weights + model.hi_intercept + model.bias
        return lo, hi
    if isinstance(model, Logistic):
        return _softmax(_logits(model, features))
    if isinstance(model, TwoPointScale):
        if rng is None:
            raise ValueError("TwoPointScale draws need an RngStream")
        return np.where(rng.uniforms(features.shape[0]) <= model.p_keep, 1.0, 0.0)
    raise TypeError(f"Unknown model type {type(model).__name__}")
