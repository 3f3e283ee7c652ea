"""
Modified Bessel function of the first kind, order one.

    I1(t) = sum_m (t/2)^(2m+1) / (m! (m+1)!)  ~  e^t / sqrt(2 pi t)

Below the switch point the power series is summed directly; above it the
exponentially scaled Hankel expansion

    e^-t I1(t) = (2 pi t)^-1/2 * sum_k (-1)^k a_k(1) / t^k,
    a_k(1) = prod_{j=1..k} (4 - (2j - 1)^2) / (k! 8^k)

is summed up to its smallest term. The neglected part is of order e^-2t, below
1e-17 relative for t >= 20.
"""

import math
from typing import Optional

import numpy as np

from src.config import settings
from src.errors import ParameterError

_EPS = 1e-17
_MAX_TERMS = 500


def _series(t: float) -> float:
    half = 0.5 * t
    term = half
    total = term
    sq = half * half
    m = 0
    while term > _EPS * total and m < _MAX_TERMS:
        m += 1
        term *= sq / (m * (m + 1))
        total += term
    return total


def _asymptotic_scaled(t: float) -> float:
    term = 1.0
    total = 1.0
    for k in range(1, _MAX_TERMS):
        factor = ((2 * k - 1) ** 2 - 4) / (8.0 * k * t)
        if abs(factor) >= 1.0:
            break
        term *= factor
        total += term
        if abs(term) < _EPS * abs(total):
            break
    return total / math.sqrt(2.0 * math.pi * t)


def _check(t: float) -> None:
    if not t >= 0 or math.isnan(t):
        raise ParameterError('t', "t must be nonnegative")


def bessel_i1e(t: float, switch_point: Optional[float] = None) -> float:
    """Exponentially scaled I1: e^-t * I1(t). Finite for every t >= 0."""
    _check(t)
    switch = settings.switch_point if switch_point is None else switch_point
    if t == 0.0:
        return 0.0
    if math.isinf(t):
        return 0.0
    if t < switch:
        return _series(t) * math.exp(-t)
    return _asymptotic_scaled(t)


def bessel_i1(t: float, switch_point: Optional[float] = None) -> float:
    """
    I1(t) for t >= 0.

    Overflows to ``inf`` beyond t ~ 713; use :func:`bessel_i1e` or
    :func:`log_bessel_i1` there.
    """
    _check(t)
    switch = settings.switch_point if switch_point is None else switch_point
    if t < switch:
        return _series(t)
    scaled = _asymptotic_scaled(t)
    try:
        return scaled * math.exp(t)
    except OverflowError:
        return math.inf


def log_bessel_i1(t: float, switch_point: Optional[float] = None) -> float:
    """log I1(t); -inf at t = 0."""
    _check(t)
    if t == 0.0:
        return -math.inf
    return math.log(bessel_i1e(t, switch_point)) + t


bessel_i1e_vec = np.vectorize(bessel_i1e, otypes=[np.float64])
