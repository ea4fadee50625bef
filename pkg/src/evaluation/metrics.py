"""
Evaluation suite: coverage, length, group coverage and interval stability
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from src.core.errors import ConfigError, GridTooCoarse, InfiniteMeasure
from src.core.types import Level, Verdict

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    'method', 'alpha', 'p', 'coverage', 'coverage_se', 'mean_length', 'length_se',
    'min_group_coverage', 'interval_stability', 'stability_se', 'n_test', 'trials', 'seed',
]

CONDITION_TOLERANCE = 1e-12


@dataclass
class AuditReport:
    """Coverage, length, group coverage and stability of one method at one level"""

    method: str
    alpha: float
    p: Optional[float] = None
    coverage: float = 0.0
    coverage_se: float = 0.0
    mean_length: float = 0.0
    length_se: float = 0.0
    mean_half_length: float = 0.0
    group_coverage: dict = field(default_factory=dict)
    min_group_coverage: float = 0.0
    interval_stability: float = 0.0
    stability_se: float = 0.0
    null_fraction: float = 0.0
    coverage_nonnull: float = 0.0
    n_test: int = 0
    trials: int = 1
    seed: Optional[int] = None

    def to_dict(self):
        return asdict(self)

    def csv_row(self):
        return {column: getattr(self, column) for column in CSV_COLUMNS}

    def __repr__(self):
        return (f"<AuditReport(method={self.method}, alpha={self.alpha}, p={self.p}, "
                f"coverage={self.coverage:.4f}, mean_length={self.mean_length:.4f})>")


# ========== COVERAGE AND LENGTH ==========

def _stream_key(test, i):
    return int(test.source_index[i])


def _mean_se(values):
    """Mean and standard error; NaN and then +inf propagate to both"""
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(values)):
        return math.nan, math.nan
    if not np.all(np.isfinite(values)):
        return math.inf, math.inf
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def predict_test_set(predictor, test, level, rng):
    """Prediction set for every test row; row i draws from rng.child(source index of i)"""
    return [
        predictor.predict(test.features[i], level, rng.child(_stream_key(test, i)))
        for i in range(len(test))
    ]


def evaluate(predictor, test, level, rng, method='', p=None):
    """Coverage, mean length and per-group coverage of `predictor` on `test`

    Infinite-measure sets make mean_length +inf rather than being dropped.
    """
    if len(test) == 0:
        raise ConfigError("evaluation needs a non-empty test set")
    sets = predict_test_set(predictor, test, level, rng)
    responses = test.responses
    covered = np.array([s.contains(y) for s, y in zip(sets, responses)], dtype=bool)
    measures = np.array([s.measure for s in sets], dtype=np.float64)
    is_null = np.array([s.is_null for s in sets], dtype=bool)

    n = len(test)
    coverage = float(covered.mean())
    mean_length, length_se = _mean_se(measures)

    group_coverage = {}
    if test.has_groups:
        for group in sorted(set(test.groups.tolist())):
            mask = test.groups == group
            group_coverage[group] = float(covered[mask].mean())
    min_group = min(group_coverage.values()) if group_coverage else coverage

    nonnull = ~is_null
    report = AuditReport(
        method=method,
        alpha=level.alpha,
        p=p,
        coverage=coverage,
        coverage_se=math.sqrt(coverage * (1.0 - coverage) / n),
        mean_length=mean_length,
        length_se=length_se,
        mean_half_length=0.5 * mean_length,
        group_coverage=group_coverage,
        min_group_coverage=min_group,
        null_fraction=float(is_null.mean()),
        coverage_nonnull=float(covered[nonnull].mean()) if nonnull.any() else 0.0,
        n_test=n,
    )
    logger.debug(f"Evaluated {report}")
    return report


# ========== INTERVAL STABILITY ==========

def stability_profile(predictor, test, level, repeats, rng):
    """Unbiased variance of the set measure across `repeats` runs, per test point

    Raises:
        InfiniteMeasure: if any repeat returns a set of infinite measure
    """
    if repeats < 2:
        raise ConfigError(f"interval stability needs repeats >= 2, got {repeats}", field='repeats')
    variances = np.empty(len(test))
    for i in range(len(test)):
        point_rng = rng.child(_stream_key(test, i))
        x = test.features[i]
        measures = np.array([predictor.predict(x, level, point_rng.child(r)).measure for r in range(repeats)])
        if not np.all(np.isfinite(measures)):
            raise InfiniteMeasure(f"test point {i} produced an infinite-measure set; variance is undefined")
        # shifting by the first draw keeps identical repeats at exactly zero
        variances[i] = np.var(measures - measures[0], ddof=1)
    return variances


def interval_stability(predictor, test, level, repeats, rng):
    """Mean over test points of the per-point measure variance across repeats"""
    return float(stability_profile(predictor, test, level, repeats, rng).mean())


def stability_closed_form(p, meaningful_length):
    """p (1 - p) L'^2 for a PT wrapper whose meaningful-fold length is L'"""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"keep probability must lie in (0, 1], got {p}")
    if meaningful_length < 0:
        raise ValueError(f"meaningful length must be >= 0, got {meaningful_length}")
    return p * (1.0 - p) * meaningful_length ** 2


# ========== TRIAL AGGREGATION ==========

AGGREGATED = (
    ('coverage', 'coverage_se'),
    ('mean_length', 'length_se'),
    ('interval_stability', 'stability_se'),
)


def aggregate_reports(reports, seed=None):
    """Mean of per-trial reports; SE across trials, or the within-trial SE for one trial"""
    if not reports:
        raise ValueError("Cannot aggregate an empty list of reports")
    first = reports[0]
    trials = len(reports)
    merged = AuditReport(method=first.method, alpha=first.alpha, p=first.p,
                         n_test=first.n_test, trials=trials, seed=seed)

    for stat, se in AGGREGATED:
        values = [getattr(r, stat) for r in reports]
        if trials == 1:
            setattr(merged, stat, values[0])
            setattr(merged, se, getattr(first, se))
        else:
            mean, spread = _mean_se(values)
            setattr(merged, stat, mean)
            setattr(merged, se, spread)

    merged.mean_half_length = 0.5 * merged.mean_length
    merged.null_fraction = float(np.mean([r.null_fraction for r in reports]))
    merged.coverage_nonnull = float(np.mean([r.coverage_nonnull for r in reports]))
    groups = sorted({g for r in reports for g in r.group_coverage})
    merged.group_coverage = {
        g: float(np.mean([r.group_coverage[g] for r in reports if g in r.group_coverage])) for g in groups
    }
    merged.min_group_coverage = float(np.mean([r.min_group_coverage for r in reports]))
    return merged


# ========== CONDITIONAL COVERAGE ==========

@dataclass(frozen=True, eq=False)
class MiscoverageCurve:
    """Empirical subgroup miscoverage f_A(a) tabulated on an ascending alpha grid"""

    alphas: np.ndarray
    miscoverage: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        values = np.asarray(self.miscoverage, dtype=np.float64)
        if alphas.ndim != 1 or alphas.shape != values.shape or alphas.size < 2:
            raise ValueError("Miscoverage curve needs matching 1-D grids of at least 2 points")
        if np.any(np.diff(alphas) <= 0):
            raise ValueError("Miscoverage grid must be strictly ascending")
        object.__setattr__(self, 'alphas', alphas)
        object.__setattr__(self, 'miscoverage', values)

    def at(self, a):
        if not self.alphas[0] - 1e-12 <= a <= self.alphas[-1] + 1e-12:
            raise GridTooCoarse(f"alpha={a:.6g} outside the tabulated range [{self.alphas[0]}, {self.alphas[-1]}]")
        return float(np.interp(a, self.alphas, self.miscoverage))

    @classmethod
    def from_function(cls, fn, alphas):
        alphas = np.asarray(alphas, dtype=np.float64)
        return cls(alphas, np.array([fn(a) for a in alphas]))


def default_alpha_grid():
    return np.round(np.arange(1, 51) * 0.01, 10)


def subgroup_miscoverage_curve(cp, test, mask, alpha_grid=None):
    """f_A(a): miscoverage of VCP at level a among test rows selected by `mask`"""
    alpha_grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ConfigError("subgroup mask selects no test rows")
    rows = np.flatnonzero(mask)
    values = []
    for a in alpha_grid:
        level = Level(float(a))
        missed = [not cp.predict(test.features[i], level).contains(test.responses[i]) for i in rows]
        values.append(float(np.mean(missed)))
    return MiscoverageCurve(alpha_grid, np.array(values))


def conditional_coverage_condition(curve, alpha, p):
    """Sufficient condition for PT to improve subgroup coverage

    With F(q) = q * f_A(1 - (1 - alpha)/q), PT improves iff F(1) - F(p) >= 1 - p (non-strict).
    """
    if not (1.0 - alpha) < p < 1.0:
        raise ValueError(f"p must lie in (1 - alpha, 1) = ({1.0 - alpha:.6g}, 1), got {p}")
    adjusted = 1.0 - (1.0 - alpha) / p
    gain = curve.at(alpha) - p * curve.at(adjusted)
    if gain >= (1.0 - p) - CONDITION_TOLERANCE:
        return Verdict.IMPROVES
    return Verdict.NO_GUARANTEE
