"""
Random streams X_n ~ exp(lambda) and Y_n ~ exp(mu) with their prefix sums.

Draws come from numpy's Philox4x64-10 counter-based generator (reference
implementation: Random123). Each uniform is built from the top 53 bits of one raw
64-bit word as u = (k + 0.5) / 2**53, which lies in the open interval (0, 1), and is
mapped to an exponential by inverse CDF, x = -ln(u) / rate. Consumption is strictly
sequential in raw words, so a stream is the same sequence whatever block size it is
extended with.
"""

import logging
import threading
from typing import Optional, Sequence

import numpy as np

from src.config import settings
from src.errors import ParameterError, ResourceCeilingError
from src.model import Parameters, validate

logger = logging.getLogger(__name__)

_TWO_POW_MINUS_53 = 2.0 ** -53


def open_unit_uniforms(bitgen: np.random.BitGenerator, size: int) -> np.ndarray:
    """Uniforms on (0, 1) from ``size`` raw 64-bit words."""
    raw = bitgen.random_raw(size)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_MINUS_53


def philox_for(seed: int, *key: int) -> np.random.Philox:
    """Philox generator keyed by (seed, key...)."""
    if seed < 0 or seed >= 2**64:
        raise ParameterError('seed', "seed must be a 64-bit unsigned integer")
    return np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key)))


class ExponentialSequence:
    """
    A lazily materialised i.i.d. exponential sequence and its prefix sums.

    Values are 1-based as in the model: ``value(1)`` is the first draw and
    ``partial(0) == 0``. A sequence built from explicit data cannot grow.
    """

    def __init__(self, rate: float, bitgen: Optional[np.random.BitGenerator] = None,
                 block: Optional[int] = None):
        self.rate = rate
        self._bitgen = bitgen
        self.block = block or settings.stream_block
        self._values = np.empty(0, dtype=np.float64)
        self._partials = np.zeros(1, dtype=np.float64)
        self._size = 0
        self._lock = threading.Lock()

    @classmethod
    def from_values(cls, rate: float, values: Sequence[float]) -> "ExponentialSequence":
        seq = cls(rate, bitgen=None)
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or np.any(arr <= 0):
            raise ParameterError('streams', "stream increments must be positive")
        seq._append(arr)
        return seq

    @classmethod
    def from_partials(cls, rate: float, partials: Sequence[float]) -> "ExponentialSequence":
        arr = np.asarray(partials, dtype=np.float64)
        if arr.ndim != 1 or np.any(np.diff(np.concatenate(([0.0], arr))) <= 0):
            raise ParameterError('streams', "prefix sums must be strictly increasing and positive")
        seq = cls(rate, bitgen=None)
        seq._values = np.diff(np.concatenate(([0.0], arr)))
        seq._partials = np.concatenate(([0.0], arr))
        seq._size = len(arr)
        return seq

    @property
    def extensible(self) -> bool:
        return self._bitgen is not None

    def __len__(self) -> int:
        return self._size

    def ensure(self, n: int) -> None:
        """Materialise at least ``n`` values, drawing whole blocks."""
        if n <= self._size:
            return
        with self._lock:
            if n <= self._size:
                return
            if self._bitgen is None:
                raise ResourceCeilingError(
                    f"stream holds {self._size} values, {n} requested"
                )
            missing = n - self._size
            count = -(-missing // self.block) * self.block
            draws = -np.log(open_unit_uniforms(self._bitgen, count)) / self.rate
            self._append(draws)
            logger.debug(f"Extended exponential({self.rate:g}) stream to {self._size} draws")

    def _append(self, draws: np.ndarray) -> None:
        new_size = self._size + len(draws)
        if new_size > len(self._values):
            capacity = max(new_size, 2 * len(self._values))
            values = np.empty(capacity, dtype=np.float64)
            values[:self._size] = self._values[:self._size]
            partials = np.empty(capacity + 1, dtype=np.float64)
            partials[:self._size + 1] = self._partials[:self._size + 1]
            self._values, self._partials = values, partials
        self._values[self._size:new_size] = draws
        # sequential accumulation from the last partial sum
        acc = np.cumsum(np.concatenate(([self._partials[self._size]], draws)))
        self._partials[self._size + 1:new_size + 1] = acc[1:]
        self._size = new_size

    def value(self, n: int) -> float:
        self.ensure(n)
        return float(self._values[n - 1])

    def partial(self, n: int) -> float:
        self.ensure(n)
        return float(self._partials[n])

    def values(self, n: Optional[int] = None) -> np.ndarray:
        n = self._size if n is None else n
        self.ensure(n)
        view = self._values[:n]
        view.flags.writeable = False
        return view

    def partials(self, n: Optional[int] = None) -> np.ndarray:
        """Prefix sums S_1..S_n (S_0 = 0 excluded)."""
        n = self._size if n is None else n
        self.ensure(n)
        view = self._partials[1:n + 1]
        view.flags.writeable = False
        return view


class Streams:
    """
    Arrival and service streams of one experiment.

    Customer 0 arrives at time 0; customer n >= 1 arrives at S^X_n. The k-th service
    to start (customer 0's being the first) lasts Y_k.
    """

    def __init__(self, params: Parameters, arrivals: ExponentialSequence,
                 services: ExponentialSequence, seed: Optional[int] = None,
                 replication: Optional[int] = None):
        self.params = params
        self.arrivals = arrivals
        self.services = services
        self.seed = seed
        self.replication = replication

    @classmethod
    def from_arrays(cls, params: Parameters, interarrivals: Sequence[float],
                    service_durations: Sequence[float]) -> "Streams":
        """Finite streams from explicit X and Y values."""
        params = validate(params)
        return cls(
            params,
            ExponentialSequence.from_values(params.lam, interarrivals),
            ExponentialSequence.from_values(params.mu, service_durations),
        )

    @classmethod
    def from_times(cls, params: Parameters, arrival_times: Sequence[float],
                   service_partials: Sequence[float]) -> "Streams":
        """Finite streams from explicit S^X_n and S^Y_k (n, k >= 1)."""
        params = validate(params)
        return cls(
            params,
            ExponentialSequence.from_partials(params.lam, arrival_times),
            ExponentialSequence.from_partials(params.mu, service_partials),
        )

    @property
    def interarrivals(self) -> np.ndarray:
        return self.arrivals.values()

    @property
    def service_durations(self) -> np.ndarray:
        return self.services.values()

    @property
    def arrival_times(self) -> np.ndarray:
        return self.arrivals.partials()

    @property
    def service_partials(self) -> np.ndarray:
        return self.services.partials()

    def arrival_time(self, n: int) -> float:
        """S^X_n, with S^X_0 = 0 for customer 0."""
        return self.arrivals.partial(n) if n > 0 else 0.0

    def service_partial(self, k: int) -> float:
        """S^Y_k, with S^Y_0 = 0."""
        return self.services.partial(k) if k > 0 else 0.0

    def service_duration(self, k: int) -> float:
        return self.services.value(k)

    def has_arrival(self, n: int) -> bool:
        """True if S^X_n is available (always, for generated streams)."""
        return n <= len(self.arrivals) or self.arrivals.extensible


def gen_streams(params: Parameters, n_arrivals: int, n_services: int, seed: int,
                replication: Optional[int] = None) -> Streams:
    """
    Draw arrival and service streams for one experiment.

    Args:
        params: experiment parameters
        n_arrivals: number of interarrival times to materialise up front
        n_services: number of service durations to materialise up front
        seed: 64-bit unsigned master seed
        replication: optional replication index, giving an independent sub-stream

    Returns:
        Streams that keep extending deterministically when read past their length
    """
    params = validate(params)
    if n_arrivals < 1:
        raise ParameterError('n_arrivals', "n_arrivals must be at least 1")
    if n_services < 1:
        raise ParameterError('n_services', "n_services must be at least 1")

    prefix = () if replication is None else (replication,)
    arrivals = ExponentialSequence(params.lam, philox_for(seed, *prefix, 0))
    services = ExponentialSequence(params.mu, philox_for(seed, *prefix, 1))
    arrivals.ensure(n_arrivals)
    services.ensure(n_services)
    return Streams(params, arrivals, services, seed=seed, replication=replication)


def superpose_arrivals(base: Streams, extra: Streams, horizon: float) -> Streams:
    """
    Couple a higher arrival rate onto ``base``.

    The arrivals of ``base`` and ``extra`` up to ``horizon`` are merged; the
    service stream of ``base`` is kept (its materialised part). The result is finite
    and has rate ``base.lam + extra.lam``.
    """
    if horizon <= 0:
        raise ParameterError('horizon', "horizon must be positive")
    times = []
    for stream in (base, extra):
        n = 1
        while stream.has_arrival(n) and stream.arrival_time(n) <= horizon:
            n += stream.arrivals.block
        if not stream.has_arrival(n):
            n = len(stream.arrivals)
        arr = stream.arrivals.partials(n)
        times.append(arr[arr <= horizon])
    merged = np.sort(np.concatenate(times))
    params = Parameters(lam=base.params.lam + extra.params.lam, mu=base.params.mu,
                        deadline=base.params.deadline)
    return Streams.from_times(params, merged, base.service_partials)


def thinned_rate(lambda1: float, lambda2: float, mu: float) -> float:
    """
    Effective arrival rate when secondary arrivals are kept with probability
    (mu - lambda1) / lambda2, the rest being ignored.
    """
    if not 0 < lambda1 < mu:
        raise ParameterError('lambda1', "lambda1 must lie in (0, mu)")
    if lambda1 + lambda2 <= mu:
        raise ParameterError('lambda2', "lambda1 + lambda2 must exceed mu")
    keep = (mu - lambda1) / lambda2
    return lambda1 + lambda2 * keep
