"""
Standard normal special functions
Inverse CDF: rational approximation refined by one Newton step against the erfc-based CDF
"""

import math

import numpy as np

from src.core.errors import DomainError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Rational approximation coefficients (central region and tails)
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)

P_LOW = 0.02425
P_HIGH = 1.0 - P_LOW


def std_normal_pdf(z):
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


def std_normal_cdf(z):
    """Phi(z) via the complementary error function (accurate in both tails)"""
    return 0.5 * math.erfc(-z / SQRT2)


def _tail(q):
    return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) /
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))


def _initial_guess(u):
    if u < P_LOW:
        return _tail(math.sqrt(-2.0 * math.log(u)))
    if u > P_HIGH:
        return -_tail(math.sqrt(-2.0 * math.log1p(-u)))
    q = u - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q /
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def std_normal_inv_cdf(u):
    """Phi^{-1}(u) for u in (0, 1)

    Raises:
        DomainError: if u is outside the open unit interval (or NaN)
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"Inverse normal CDF needs u in (0, 1), got {u}")
    x = _initial_guess(u)
    density = std_normal_pdf(x)
    if density > 0.0:
        x -= (std_normal_cdf(x) - u) / density
    return x


std_normal_pdf_array = np.vectorize(std_normal_pdf, otypes=[np.float64])
std_normal_cdf_array = np.vectorize(std_normal_cdf, otypes=[np.float64])
std_normal_inv_cdf_array = np.vectorize(std_normal_inv_cdf, otypes=[np.float64])
