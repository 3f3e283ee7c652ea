"""
Regeneration time tau by the index-set procedure, and the quantities built on it.

Index sets, for k >= 1 (S^Y_0 = 0):
    N_k = {n : S^Y_{k-1} <= S^X_n < S^Y_k}
    J_1 = {n in N_1 : S^X_n + T > S^Y_1}
    J_{k+1} = {n in (J_k minus its largest element j_k) union N_{k+1} : S^X_n + T > S^Y_{k+1}}
tau1 is the first k with J_k empty and tau = n_{tau1} + 1, n_{tau1} being the largest
index in N_1 ... N_{tau1} (0 when they are all empty).
"""

import logging
import math
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel

from src.config import settings
from src.errors import ParameterError, UndeterminedTauError
from src.model import Parameters, validate
from src.streams import Streams, gen_streams
from src import stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TauStep:
    """One step k of the procedure: N_k, J_k and j_k (None when J_k is empty)."""

    k: int
    arrivals: tuple[int, ...]
    eligible: tuple[int, ...]
    selected: Optional[int]


@dataclass
class TauResult:
    tau1: Union[int, float]
    n_tau1: int
    tau: Union[int, float]
    services_used: int
    undetermined: bool = False
    trace: Optional[list[TauStep]] = None

    def to_dict(self) -> dict:
        return {
            'tau1': self.tau1,
            'n_tau1': self.n_tau1,
            'tau': self.tau,
            'services_used': self.services_used,
            'undetermined': self.undetermined,
        }


class ReturnLawEstimate(BaseModel):
    """Monte-Carlo estimate of M = E[tau] and the empirical law q_k."""

    m_hat: float
    ci_half_width: float
    confidence: float
    replications: int
    q_hat: dict[int, float]
    method: str = 'normal'
    m_median_of_means: Optional[float] = None
    max_tau: int = 0

    @property
    def ci(self) -> tuple[float, float]:
        return (self.m_hat - self.ci_half_width, self.m_hat + self.ci_half_width)

    def q_vector(self) -> np.ndarray:
        """q_hat as a dense vector indexed by k - 1."""
        q = np.zeros(self.max_tau, dtype=np.float64)
        for k, mass in self.q_hat.items():
            q[k - 1] = mass
        return q


@dataclass
class BusyPeriodSample:
    duration: float
    tau3: Optional[int]
    exhausted: bool = False

    @property
    def finite(self) -> bool:
        return self.tau3 is not None


@dataclass
class BusyPeriodBatch:
    samples: list[BusyPeriodSample] = field(default_factory=list)

    @property
    def finite_fraction(self) -> float:
        return sum(1 for s in self.samples if s.finite) / len(self.samples)

    @property
    def exhausted_count(self) -> int:
        return sum(1 for s in self.samples if s.exhausted)

    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.samples if s.finite], dtype=np.float64)


def tau_by_index_sets(streams: Streams, deadline: Optional[float] = None,
                      max_services: Optional[int] = None,
                      record_trace: bool = False) -> TauResult:
    """
    Run the index-set procedure on ``streams``.

    Streams are read lazily, so generated streams extend themselves in blocks.

    Args:
        streams: arrival and service streams
        deadline: patience bound, the streams' parameter by default
        max_services: ceiling on k, ``settings.tau_max_services`` by default
        record_trace: keep (N_k, J_k, j_k) for every step

    Returns:
        TauResult; ``undetermined`` with tau = inf when the ceiling is reached
    """
    T = streams.params.deadline if deadline is None else deadline
    if not T > 0:
        raise ParameterError('deadline', "deadline must be positive")
    ceiling = max_services or settings.tau_max_services

    # J stays sorted: every index in N_{k+1} exceeds every index kept from J_k,
    # and S^X_n increases in n, so expiry always removes a prefix.
    eligible: deque[int] = deque()
    trace: Optional[list[TauStep]] = [] if record_trace else None
    n = 1
    n_last = 0
    k = 0
    while k < ceiling:
        k += 1
        boundary = streams.service_partial(k)
        start = n
        while streams.arrival_time(n) < boundary:
            n += 1
        if n > start:
            n_last = n - 1
            eligible.extend(range(start, n))
        while eligible and not streams.arrival_time(eligible[0]) + T > boundary:
            eligible.popleft()

        if trace is not None:
            trace.append(TauStep(
                k=k,
                arrivals=tuple(range(start, n)),
                eligible=tuple(eligible),
                selected=eligible[-1] if eligible else None,
            ))
        if not eligible:
            return TauResult(tau1=k, n_tau1=n_last, tau=n_last + 1, services_used=k, trace=trace)
        eligible.pop()

    logger.warning(f"Index-set procedure undetermined after {ceiling} services "
                   f"({streams.params.describe()})")
    return TauResult(tau1=math.inf, n_tau1=n_last, tau=math.inf, services_used=k,
                     undetermined=True, trace=trace)


def tau2_from_streams(streams: Streams, deadline: Optional[float] = None,
                      max_services: Optional[int] = None) -> Union[int, float]:
    """First k such that Y_k >= T and no customer arrives during the k-th service."""
    T = streams.params.deadline if deadline is None else deadline
    ceiling = max_services or settings.tau_max_services
    n = 1
    for k in range(1, ceiling + 1):
        lo, hi = streams.service_partial(k - 1), streams.service_partial(k)
        while streams.arrival_time(n) < lo:
            n += 1
        empty = not streams.arrival_time(n) < hi
        if empty and streams.service_duration(k) >= T:
            return k
    return math.inf


def _require_finite_deadline(params: Parameters) -> None:
    if not params.finite_deadline:
        raise ParameterError('deadline', "deadline must be finite")


def p0_closed_form(params: Parameters) -> float:
    """P(A_k) = mu / (lambda + mu) * exp(-(lambda + mu) T)."""
    params = validate(params)
    _require_finite_deadline(params)
    a = params.lam + params.mu
    return params.mu / a * math.exp(-a * params.deadline)


def tau2_expectation(params: Parameters) -> float:
    """E[tau2] = 1 / p0 = (lambda + mu) / mu * exp((lambda + mu) T)."""
    params = validate(params)
    _require_finite_deadline(params)
    a = params.lam + params.mu
    return a / params.mu * math.exp(a * params.deadline)


def m_upper_bound(params: Parameters) -> float:
    """E[tau] <= exp((lambda + mu) T)."""
    params = validate(params)
    _require_finite_deadline(params)
    return math.exp((params.lam + params.mu) * params.deadline)


def estimate_p0(params: Parameters, trials: int, seed: int) -> tuple[float, float]:
    """
    Frequency of the event A_1 (Y_1 >= T and X_1 >= Y_1) over independent trials.

    Returns:
        (frequency, standard error)
    """
    params = validate(params)
    _require_finite_deadline(params)
    streams = gen_streams(params, trials, trials, seed)
    x = streams.arrivals.values(trials)
    y = streams.services.values(trials)
    hits = ((y >= params.deadline) & (x >= y)).astype(np.float64)
    p_hat = float(hits.mean())
    return p_hat, math.sqrt(p_hat * (1.0 - p_hat) / trials)


def estimate_tau2(params: Parameters, replications: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo mean of tau2 with its standard error."""
    params = validate(params)
    _require_finite_deadline(params)
    draws = np.array([
        tau2_from_streams(gen_streams(params, 1, 1, seed, replication=r))
        for r in range(replications)
    ], dtype=np.float64)
    if not np.all(np.isfinite(draws)):
        raise UndeterminedTauError("tau2 not reached below the service ceiling")
    return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(replications))


def _tau_chunk(params: Parameters, seed: int, start: int, stop: int,
               max_services: Optional[int]) -> list[int]:
    taus = []
    for r in range(start, stop):
        streams = gen_streams(params, 1, 1, seed, replication=r)
        result = tau_by_index_sets(streams, max_services=max_services)
        if result.undetermined:
            raise UndeterminedTauError(
                f"replication {r} undetermined after {result.services_used} services; "
                "raise the service ceiling",
                result,
            )
        taus.append(int(result.tau))
    return taus


def _draw_taus(params: Parameters, replications: int, seed: int,
               max_services: Optional[int], threads: int) -> list[int]:
    if threads <= 1 or replications < 2 * threads:
        return _tau_chunk(params, seed, 0, replications, max_services)
    bounds = np.linspace(0, replications, threads + 1).astype(int)
    taus: list[int] = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_tau_chunk, params, seed, int(lo), int(hi), max_services)
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        for future in futures:
            taus.extend(future.result())
    return taus


def estimate_M(params: Parameters, replications: int, seed: int,
               confidence: Optional[float] = None,
               method: Literal['normal', 'median_of_means'] = 'normal',
               max_services: Optional[int] = None,
               threads: Optional[int] = None) -> ReturnLawEstimate:
    """
    Estimate M = E[tau] from independent replications.

    Replication r uses streams keyed by (seed, r), so results do not depend on how
    replications are spread over worker processes.

    Args:
        params: experiment parameters; T = inf is accepted only for lambda < mu
        replications: number of tau draws (>= 2)
        seed: master seed
        confidence: CI level, ``settings.confidence`` by default
        method: 'normal' for the CLT interval, 'median_of_means' for the robust variant
            (heavy-tailed tau near criticality)
        max_services: per-replication ceiling of the index-set procedure
        threads: worker processes, ``settings.threads`` by default

    Returns:
        ReturnLawEstimate
    """
    params = validate(params)
    if not params.finite_deadline and params.lam >= params.mu:
        raise ParameterError('deadline', "T = inf requires lambda < mu (M is infinite otherwise)")
    if replications < 2:
        raise ParameterError('replications', "replications must be at least 2")
    confidence = settings.confidence if confidence is None else confidence
    threads = settings.threads if threads is None else threads

    logger.info(f"Estimating M over {replications} replications ({params.describe()})")
    taus = _draw_taus(params, replications, seed, max_services, threads)

    counts = Counter(taus)
    q_hat = {k: counts[k] / replications for k in sorted(counts)}
    m_hat = math.fsum(k * c for k, c in counts.items()) / replications
    samples = np.asarray(taus, dtype=np.float64)
    m_mom = None
    if method == 'median_of_means':
        m_mom, half = stats.median_of_means_ci(samples, confidence)
    elif method == 'normal':
        _, half = stats.mean_ci(samples, confidence)
    else:
        raise ParameterError('method', f"unknown method {method!r}")

    estimate = ReturnLawEstimate(
        m_hat=m_hat,
        ci_half_width=half,
        confidence=confidence,
        replications=replications,
        q_hat=q_hat,
        method=method,
        m_median_of_means=m_mom,
        max_tau=max(counts),
    )
    logger.info(f"M estimate {m_hat:.6g} +/- {half:.3g} at {confidence:.0%}")
    return estimate


def busy_period_from_streams(streams: Streams, ceiling: Optional[int] = None) -> BusyPeriodSample:
    """D = S^Y_{tau3} with tau3 the first n such that S^Y_n < S^X_n."""
    ceiling = ceiling or settings.busy_ceiling
    block = streams.services.block
    limit = ceiling
    for seq in (streams.arrivals, streams.services):
        if not seq.extensible:
            limit = min(limit, len(seq))
    start = 0
    while start < limit:
        stop = min(start + block, limit)
        sx = streams.arrivals.partials(stop)[start:stop]
        sy = streams.services.partials(stop)[start:stop]
        hits = np.flatnonzero(sy < sx)
        if hits.size:
            n = start + int(hits[0]) + 1
            return BusyPeriodSample(duration=float(sy[hits[0]]), tau3=n)
        start = stop
    return BusyPeriodSample(duration=math.inf, tau3=None, exhausted=True)


def sample_busy_period(params: Parameters, seed: int, ceiling: Optional[int] = None,
                       replication: Optional[int] = None) -> BusyPeriodSample:
    """
    Busy period of the classical M/M/1 queue from fresh streams.

    ``exhausted`` marks samples where tau3 was not found below ``ceiling``;
    for rho > 1 this includes the infinite busy periods (probability 1 - 1/rho).
    """
    params = validate(params)
    streams = gen_streams(params, 1, 1, seed, replication=replication)
    return busy_period_from_streams(streams, ceiling)


def estimate_busy_periods(params: Parameters, samples: int, seed: int,
                          ceiling: Optional[int] = None) -> BusyPeriodBatch:
    """Independent busy-period samples keyed by (seed, i)."""
    params = validate(params)
    if samples < 1:
        raise ParameterError('samples', "samples must be at least 1")
    batch = BusyPeriodBatch([
        sample_busy_period(params, seed, ceiling, replication=i) for i in range(samples)
    ])
    logger.info(f"Busy periods: {samples} samples, finite fraction {batch.finite_fraction:.4f}, "
                f"{batch.exhausted_count} reached the ceiling")
    return batch
