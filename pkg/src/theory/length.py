"""
Length curves and the sufficient conditions under which PT shortens sets

A LengthCurve tabulates c -> mean set measure L(c). Every checker works on the
tabulation with linear interpolation and reports strict inequalities only.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from src.core.errors import DomainError, GridTooCoarse
from src.core.types import Level, Verdict
from .special import std_normal_inv_cdf

logger = logging.getLogger(__name__)

GRID_START = 0.50
GRID_STOP = 0.995
GRID_STEP = 0.01
DEFAULT_H = 0.01
EDGE = 1e-12
CONCAVITY_TOLERANCE = 1e-9


def default_level_grid(start=GRID_START, stop=GRID_STOP, step=GRID_STEP):
    """Ascending coverage levels start, start+step, ... with `stop` always included"""
    if not 0.0 < start < stop < 1.0 or step <= 0:
        raise ValueError(f"Level grid needs 0 < start < stop < 1 and step > 0, got ({start}, {stop}, {step})")
    count = int(math.floor((stop - start) / step + 1e-9))
    levels = np.round(start + step * np.arange(count + 1), 12)
    if stop - levels[-1] > 1e-12:
        levels = np.append(levels, stop)
    return levels


@dataclass(frozen=True, eq=False)
class LengthCurve:
    """Mean set measure L(c) on an ascending grid of coverage levels c"""

    levels: np.ndarray
    lengths: np.ndarray
    provenance: str = 'empirical'

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        lengths = np.asarray(self.lengths, dtype=np.float64)
        if levels.ndim != 1 or levels.shape != lengths.shape:
            raise ValueError("Length curve needs matching 1-D level and length arrays")
        if levels.size < 3:
            raise GridTooCoarse(f"Length curve needs at least 3 grid points, got {levels.size}")
        if np.any(levels <= 0) or np.any(levels >= 1) or np.any(np.diff(levels) <= 0):
            raise ValueError("Coverage levels must be strictly ascending inside (0, 1)")
        if np.any(lengths < 0):
            raise ValueError("Set lengths must be non-negative")
        finite = lengths[np.isfinite(lengths)]
        if np.any(np.diff(finite) < -1e-9 * max(1.0, float(np.abs(finite).max(initial=0.0)))):
            raise ValueError("Set lengths must be non-decreasing in the coverage level")
        object.__setattr__(self, 'levels', levels)
        object.__setattr__(self, 'lengths', lengths)

    @property
    def infinite(self):
        """Grid points whose conformal quantile overflowed"""
        return ~np.isfinite(self.lengths)

    def covers(self, c):
        return self.levels[0] - EDGE <= c <= self.levels[-1] + EDGE

    def at(self, c):
        """L(c) by linear interpolation; +inf if a bracketing point is infinite"""
        if not self.covers(c):
            raise GridTooCoarse(f"level {c:.6g} outside the tabulated range [{self.levels[0]}, {self.levels[-1]}]")
        j = int(np.searchsorted(self.levels, c))
        j = min(max(j, 1), self.levels.size - 1)
        c0, c1 = self.levels[j - 1], self.levels[j]
        l0, l1 = self.lengths[j - 1], self.lengths[j]
        if abs(c - c0) <= EDGE:
            return float(l0)
        if abs(c - c1) <= EDGE:
            return float(l1)
        if not (math.isfinite(l0) and math.isfinite(l1)):
            return math.inf
        return float(l0 + (l1 - l0) * (c - c0) / (c1 - c0))

    def to_frame(self):
        return pd.DataFrame({'level': self.levels, 'length': self.lengths})


# ========== CURVE CONSTRUCTION ==========

def build_length_curve(cp, grid=None, probe=None):
    """Empirical L(c): mean VCP set measure at alpha = 1 - c over the probe rows

    Without a probe set the curve is evaluated at the origin, which is exact for
    scores whose set length does not depend on x.
    """
    grid = default_level_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if probe is None:
        rows = np.zeros((1, cp.model.dim))
    else:
        rows = probe.features if hasattr(probe, 'features') else np.atleast_2d(probe)

    lengths = []
    for c in grid:
        level = Level(1.0 - float(c))
        lengths.append(float(np.mean([cp.predict(x, level).measure for x in rows])))
    curve = LengthCurve(grid, np.array(lengths), provenance=f'empirical(n={cp.n})')
    if curve.infinite.any():
        flagged = ', '.join(f"{c:.3f}" for c in curve.levels[curve.infinite])
        logger.warning(f"Quantile overflow gives infinite length at levels: {flagged}")
    return curve


def mixture_length_curve(mu, grid=None):
    """Analytic L(c) = 2 (mu + Phi^-1(c)) of absolute residuals under the +-mu Gaussian mixture"""
    grid = default_level_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    lengths = np.array([max(0.0, 2.0 * (mu + std_normal_inv_cdf(float(c)))) for c in grid])
    return LengthCurve(grid, lengths, provenance=f'analytic(mixture, mu={mu})')


def gaussian_length_curve(sigma=1.0, grid=None):
    """Analytic L(c) = 2 sigma Phi^-1((1 + c) / 2) of absolute residuals under N(0, sigma^2)"""
    grid = default_level_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    lengths = np.array([2.0 * sigma * std_normal_inv_cdf((1.0 + float(c)) / 2.0) for c in grid])
    return LengthCurve(grid, lengths, provenance=f'analytic(gaussian, sigma={sigma})')


# ========== CHECKERS ==========

@dataclass(frozen=True)
class ConditionCheck:
    """Verdict of a strict inequality lhs > rhs, with both sides kept for reporting"""

    name: str
    verdict: Verdict
    lhs: float
    rhs: float

    def to_dict(self):
        return {'name': self.name, 'verdict': self.verdict.value, 'lhs': self.lhs, 'rhs': self.rhs}


def _strict(lhs, rhs):
    if math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-15):
        return Verdict.BOUNDARY
    return Verdict.HOLDS if lhs > rhs else Verdict.FAILS


def _check_p(alpha, p):
    if not (1.0 - alpha) < p <= 1.0:
        raise ValueError(f"p={p} outside (1 - alpha, 1] for alpha={alpha}")


def general_condition_table(curve, alpha, p_grid):
    """Per-p rows: p * L((1 - alpha)/p) against the base length L(1 - alpha)"""
    base = curve.at(1.0 - alpha)
    rows = []
    for p in p_grid:
        p = float(p)
        _check_p(alpha, p)
        level = (1.0 - alpha) / p
        pt_length = p * curve.at(level)
        rows.append({
            'alpha': alpha,
            'p': p,
            'level': level,
            'pt_length': pt_length,
            'vcp_length': base,
            'wins': bool(pt_length < base),
        })
    return rows


def check_general_condition(curve, alpha, p_grid) -> Optional[float]:
    """p minimizing p * L((1 - alpha)/p) when strictly below L(1 - alpha), else None

    Ties go to the larger p.
    """
    best_p, best_value = None, math.inf
    for row in general_condition_table(curve, alpha, p_grid):
        if not row['wins']:
            continue
        value = row['pt_length']
        if value < best_value or (value == best_value and row['p'] > best_p):
            best_p, best_value = row['p'], value
    return best_p


def check_first_order(curve, alpha, h=DEFAULT_H):
    """L(1-alpha)/(1-alpha) > dL/dc at 1-alpha, derivative by central difference"""
    c = 1.0 - alpha
    if not (curve.covers(c - h) and curve.covers(c + h)):
        raise GridTooCoarse(f"central difference at {c:.6g} +- {h} leaves the tabulated range")
    derivative = (curve.at(c + h) - curve.at(c - h)) / (2.0 * h)
    ratio = curve.at(c) / c
    return ConditionCheck('first_order', _strict(ratio, derivative), ratio, derivative)


def check_secant(curve, alpha, u_grid):
    """First u (ascending) with L(1-alpha)/(1-alpha) > secant slope to u, as (u, p = (1-alpha)/u)"""
    c = 1.0 - alpha
    ratio = curve.at(c) / c
    for u in sorted(float(u) for u in u_grid):
        if not c < u < 1.0:
            raise ValueError(f"secant point u={u} outside (1 - alpha, 1)")
        slope = (curve.at(u) - curve.at(c)) / (u - c)
        if _strict(ratio, slope) == Verdict.HOLDS:
            return u, c / u
    return None


def check_local_concavity(curve, alpha):
    """True iff the curve's slopes are non-increasing on [grid start, 1 - alpha]"""
    c = 1.0 - alpha
    mask = curve.levels <= c + EDGE
    if mask.sum() < 3:
        raise GridTooCoarse(f"local concavity needs 3 grid points up to {c:.6g}, got {int(mask.sum())}")
    levels, lengths = curve.levels[mask], curve.lengths[mask]
    if not np.all(np.isfinite(lengths)):
        return False
    slopes = np.diff(lengths) / np.diff(levels)
    scale = max(1.0, float(np.abs(slopes).max()))
    return bool(np.all(np.diff(slopes) <= CONCAVITY_TOLERANCE * scale))


def gaussian_failure_case(alpha, p, sigma=1.0):
    """Closed-form VCP and expected PT lengths under N(0, sigma^2) residuals

    Returns (2 sigma Phi^-1(1 - alpha/2), 2 p sigma Phi^-1(1 - alpha'/2)); PT is always longer.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not (1.0 - alpha) < p < 1.0:
        raise DomainError(f"p must lie in (1 - alpha, 1) = ({1.0 - alpha:.6g}, 1), got {p}")
    adjusted = 1.0 - (1.0 - alpha) / p
    vcp_length = 2.0 * sigma * std_normal_inv_cdf(1.0 - alpha / 2.0)
    pt_length = 2.0 * p * sigma * std_normal_inv_cdf(1.0 - adjusted / 2.0)
    return vcp_length, pt_length
