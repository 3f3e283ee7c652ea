"""Empirical CDFs, Kolmogorov-Smirnov distance, tail fits and confidence intervals."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np
import scipy.stats

from src.config import settings
from src.errors import ParameterError

logger = logging.getLogger(__name__)


class EcdfView:
    """Right-continuous empirical CDF of a sample."""

    def __init__(self, samples: Sequence[float]):
        arr = np.sort(np.asarray(samples, dtype=np.float64))
        if arr.size == 0:
            raise ParameterError('samples', "samples must be nonempty")
        self.sorted_samples = arr
        self.n = int(arr.size)

    def evaluate(self, x):
        """(#samples <= x) / n."""
        return np.searchsorted(self.sorted_samples, x, side='right') / self.n

    def left_limit(self, x):
        """(#samples < x) / n."""
        return np.searchsorted(self.sorted_samples, x, side='left') / self.n

    __call__ = evaluate


def _as_vector_cdf(cdf: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def evaluate(x: np.ndarray) -> np.ndarray:
        try:
            out = np.asarray(cdf(x), dtype=np.float64)
            if out.shape == x.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.array([float(cdf(float(v))) for v in x], dtype=np.float64)
    return evaluate


def ks_distance(samples: Sequence[float], cdf: Callable,
                cdf_left: Optional[Callable] = None) -> float:
    """
    sup |ECDF - F| over the jump points of the ECDF.

    At every distinct sample value x both one-sided limits are compared:
    ECDF(x) against F(x) and ECDF(x-) against F(x-). F(x-) is taken from
    ``cdf_left`` when given, otherwise as F at the next float below x, which is
    exact for a CDF with an atom at a sample value (such as F_T at 0).

    Args:
        samples: nonempty sample
        cdf: reference CDF; vectorised callables are used as such
        cdf_left: optional left-limit function of the reference CDF

    Returns:
        distance in [0, 1]
    """
    ecdf = EcdfView(samples)
    points, counts = np.unique(ecdf.sorted_samples, return_counts=True)
    upper = np.cumsum(counts) / ecdf.n
    lower = upper - counts / ecdf.n

    f = _as_vector_cdf(cdf)
    f_at = f(points)
    if cdf_left is not None:
        f_left = _as_vector_cdf(cdf_left)(points)
    else:
        f_left = f(np.nextafter(points, -np.inf))
    distance = max(float(np.max(np.abs(upper - f_at))), float(np.max(np.abs(lower - f_left))))
    return min(distance, 1.0)


def ks_critical_value(n: int, level: float = 0.99) -> float:
    """Asymptotic KS critical value at ``level`` for a continuous reference law."""
    if n < 1:
        raise ParameterError('n', "n must be positive")
    return float(scipy.stats.kstwobign.ppf(level)) / math.sqrt(n)


@dataclass(frozen=True)
class TailFit:
    """
    Least-squares tail fit of log f over a geometric grid.

    ``power``: log f = c - exponent * log t.
    ``exponential``: log f = c - rate * t - exponent * log t.
    """

    kind: Literal['power', 'exponential']
    exponent: float
    rate: float
    window: tuple[float, float]
    residual: float
    points: int


def _grid(window: tuple[float, float], points: int) -> np.ndarray:
    t_lo, t_hi = window
    if not (0 < t_lo < t_hi) or not math.isfinite(t_hi):
        raise ParameterError('window', f"degenerate tail window {window}")
    if points < 20:
        raise ParameterError('points', "a tail fit needs at least 20 grid points")
    return np.geomspace(t_lo, t_hi, points)


def fit_tail(log_density: Callable[[float], float], window: tuple[float, float],
             kind: Literal['power', 'exponential'] = 'power',
             points: Optional[int] = None) -> TailFit:
    """
    Fit the tail of a density given through its logarithm.

    Args:
        log_density: t -> log f(t)
        window: (t_lo, t_hi) with 0 < t_lo < t_hi
        kind: 'power' or 'exponential'
        points: grid size (>= 20), ``settings.tail_points`` by default

    Returns:
        TailFit
    """
    t = _grid(window, points or settings.tail_points)
    y = np.array([float(log_density(float(v))) for v in t])
    if not np.all(np.isfinite(y)):
        raise ParameterError('window', "log density is not finite over the window")

    if kind == 'power':
        design = np.column_stack([np.ones_like(t), np.log(t)])
    elif kind == 'exponential':
        design = np.column_stack([np.ones_like(t), t, np.log(t)])
    else:
        raise ParameterError('kind', f"unknown tail kind {kind!r}")

    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    if kind == 'power':
        exponent, rate = -float(coef[1]), 0.0
    else:
        rate, exponent = -float(coef[1]), -float(coef[2])
    fit = TailFit(kind=kind, exponent=exponent, rate=rate, window=(float(t[0]), float(t[-1])),
                  residual=residual, points=int(t.size))
    logger.debug(f"Tail fit {fit}")
    return fit


def classify_tail(log_density: Callable[[float], float], window: tuple[float, float],
                  points: Optional[int] = None) -> TailFit:
    """
    Power or exponential tail.

    The exponential fit wins when its rate decays the density by at least a factor
    e over the window (rate * t_hi >= 1); the power fit is reported otherwise.
    """
    exp_fit = fit_tail(log_density, window, 'exponential', points)
    if exp_fit.rate * window[1] >= 1.0:
        return exp_fit
    return fit_tail(log_density, window, 'power', points)


def _z(confidence: float) -> float:
    if not 0 <= confidence < 1:
        raise ParameterError('confidence', "confidence must lie in [0, 1)")
    return float(scipy.stats.norm.ppf(0.5 + confidence / 2))


def mean_ci(samples: Sequence[float], confidence: Optional[float] = None) -> tuple[float, float]:
    """Sample mean and normal-approximation half width."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ParameterError('samples', "at least two samples are needed")
    confidence = settings.confidence if confidence is None else confidence
    z = _z(confidence)
    mean = math.fsum(x) / x.size
    if z == 0.0:
        return mean, 0.0
    s = float(np.std(x, ddof=1))
    return mean, z * s / math.sqrt(x.size)


def median_of_means_ci(samples: Sequence[float], confidence: Optional[float] = None,
                       groups: int = 20) -> tuple[float, float]:
    """
    Median of group means with a normal half width from the group means' spread.

    Groups are contiguous blocks, so the result is deterministic.
    """
    x = np.asarray(samples, dtype=np.float64)
    groups = min(groups, x.size // 2)
    if groups < 2:
        raise ParameterError('samples', "too few samples for median of means")
    confidence = settings.confidence if confidence is None else confidence
    means = np.array([block.mean() for block in np.array_split(x, groups)])
    z = _z(confidence)
    # the sample median of normal group means has variance pi/2 * var / groups
    half = z * math.sqrt(math.pi / 2) * float(np.std(means, ddof=1)) / math.sqrt(groups)
    return float(np.median(means)), half


def batch_means(values: Sequence[float], batches: int = 20) -> tuple[float, float]:
    """
    Mean of a correlated series and its batch-means standard error.

    Returns:
        (mean, standard error)
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2 * batches or batches < 2:
        raise ParameterError('batches', "need at least two observations per batch")
    means = np.array([block.mean() for block in np.array_split(x, batches)])
    return float(x.mean()), float(np.std(means, ddof=1) / math.sqrt(batches))
