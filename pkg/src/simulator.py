"""Event-driven simulation of the M/M/1 queue with deadline impatience and LIFO service."""

import heapq
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, List, Optional

import numpy as np

from src.config import settings
from src.errors import ParameterError
from src.model import CustomerOutcome, Parameters, SamplePath, validate
from src.streams import Streams, gen_streams

logger = logging.getLogger(__name__)


class EventKind(IntEnum):
    """Event kinds; the value is the tie-break rank at equal timestamps."""

    SERVICE_COMPLETION = 0
    ABANDONMENT = 1
    ARRIVAL = 2


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: EventKind
    customer: int


class EventCalendar:
    """
    Priority queue of pending events.

    Ordered by time, then kind (completion < abandonment < arrival), then
    insertion order.
    """

    def __init__(self):
        self._queue: List[tuple[float, int, int, int]] = []
        self._seq = itertools.count()

    def schedule(self, event: EventRecord) -> None:
        heapq.heappush(self._queue, (event.time, int(event.kind), next(self._seq), event.customer))

    def pop(self) -> Optional[EventRecord]:
        if not self._queue:
            return None
        time, kind, _, customer = heapq.heappop(self._queue)
        return EventRecord(time, EventKind(kind), customer)

    def peek(self) -> Optional[EventRecord]:
        if not self._queue:
            return None
        time, kind, _, customer = self._queue[0]
        return EventRecord(time, EventKind(kind), customer)

    def is_empty(self) -> bool:
        return len(self._queue) == 0

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class QueueState:
    """Mutable state of a run; ``waiting`` holds (customer, arrival_time), newest on the right."""

    now: float = 0.0
    in_service: Optional[int] = None
    waiting: deque = field(default_factory=deque)
    served_count: int = 0
    abandoned_count: int = 0

    @property
    def current_length(self) -> int:
        return len(self.waiting) + (1 if self.in_service is not None else 0)


class LifoRenegingQueue:
    """
    One run over a fixed pair of streams.

    The server is never idle while a non-expired customer waits. A customer in
    service never abandons. A waiter with arrival time a is still eligible at time t
    iff a + T > t. By default expired waiters are discarded lazily when the server
    looks for its next customer: waiters expire oldest first and the newest waiter
    is examined first, so the selected customer and every D_n are the same as with
    explicit abandonment events. ``eager_abandonment`` schedules those events
    instead, which keeps N_t exact for the queue-length trace.
    """

    def __init__(self, params: Parameters, streams: Streams, n_customers: int,
                 record_trace: bool = False, eager_abandonment: Optional[bool] = None,
                 max_events: Optional[int] = None):
        self.params = params
        self.streams = streams
        self.n_customers = n_customers
        self.record_trace = record_trace
        self.eager = record_trace if eager_abandonment is None else eager_abandonment
        self.max_events = max_events or settings.max_events

        self.state = QueueState()
        self.calendar = EventCalendar()
        self.waits = np.full(n_customers, math.inf)
        self.starts: list[Optional[float]] = [None] * n_customers
        self.ranks: list[Optional[int]] = [None] * n_customers
        self.trace: Optional[list[tuple[float, int]]] = [] if record_trace else None
        self.services_started = 0
        self.events_processed = 0
        self.diagnostics: list[str] = []

        if record_trace and not self.eager:
            self._advise("queue_length_trace recorded in lazy mode counts expired waiters")

    def _advise(self, message: str) -> None:
        logger.warning(message)
        self.diagnostics.append(message)

    def _record(self) -> None:
        if self.trace is None:
            return
        length = self.state.current_length
        if not self.trace or self.trace[-1][1] != length:
            self.trace.append((self.state.now, length))

    def _start_service(self, customer: int, arrival_time: float) -> None:
        state = self.state
        self.services_started += 1
        self.waits[customer] = state.now - arrival_time
        self.starts[customer] = state.now
        self.ranks[customer] = state.served_count
        state.served_count += 1
        state.in_service = customer
        duration = self.streams.service_duration(self.services_started)
        self.calendar.schedule(
            EventRecord(state.now + duration, EventKind.SERVICE_COMPLETION, customer)
        )

    def _abandon(self, customer: int) -> None:
        self.state.abandoned_count += 1
        logger.debug(f"Customer {customer} abandoned")

    def _on_arrival(self, customer: int) -> None:
        state = self.state
        arrival_time = state.now
        if state.in_service is None:
            self._start_service(customer, arrival_time)
        else:
            state.waiting.append((customer, arrival_time))
            if self.eager and self.params.finite_deadline:
                self.calendar.schedule(EventRecord(
                    arrival_time + self.params.deadline, EventKind.ABANDONMENT, customer
                ))
        nxt = customer + 1
        if nxt < self.n_customers:
            self.calendar.schedule(
                EventRecord(self.streams.arrival_time(nxt), EventKind.ARRIVAL, nxt)
            )

    def _on_completion(self, customer: int) -> None:
        state = self.state
        state.in_service = None
        deadline = self.params.deadline
        while state.waiting:
            candidate, arrival_time = state.waiting[-1]
            if arrival_time + deadline > state.now:
                state.waiting.pop()
                self._start_service(candidate, arrival_time)
                return
            # the newest waiter has expired, so have all older ones
            for expired, _ in state.waiting:
                self._abandon(expired)
            state.waiting.clear()

    def _on_abandonment(self, customer: int) -> None:
        waiting = self.state.waiting
        if waiting and waiting[0][0] == customer:
            waiting.popleft()
            self._abandon(customer)

    def run(self) -> SamplePath:
        handlers = {
            EventKind.ARRIVAL: self._on_arrival,
            EventKind.SERVICE_COMPLETION: self._on_completion,
            EventKind.ABANDONMENT: self._on_abandonment,
        }
        if self.params.transient:
            self._advise(
                "transient regime (T = inf, lambda > mu): a positive fraction of customers "
                "is never served in the long run; no stationary waiting-time law exists"
            )

        self.calendar.schedule(EventRecord(0.0, EventKind.ARRIVAL, 0))
        truncated = False
        while not self.calendar.is_empty():
            if self.events_processed >= self.max_events:
                truncated = True
                self._advise(
                    f"truncated run: event ceiling {self.max_events} reached at "
                    f"t={self.state.now:.6g}"
                )
                break
            event = self.calendar.pop()
            self.state.now = event.time
            handlers[event.kind](event.customer)
            self.events_processed += 1
            self._record()

        outcomes = [
            CustomerOutcome(
                index=n,
                arrival_time=self.streams.arrival_time(n),
                wait=float(self.waits[n]),
                service_start=self.starts[n],
                served_rank=self.ranks[n],
            )
            for n in range(self.n_customers)
        ]
        logger.info(
            f"Simulated {self.n_customers} customers ({self.params.describe()}): "
            f"{self.state.served_count} served, {self.state.abandoned_count} abandoned, "
            f"{self.events_processed} events"
        )
        return SamplePath(
            params=self.params,
            outcomes=outcomes,
            queue_length_trace=self.trace,
            truncated=truncated,
            diagnostics=self.diagnostics,
        )


def simulate_from_streams(params: Parameters, streams: Streams, n_customers: int,
                          record_trace: bool = False,
                          eager_abandonment: Optional[bool] = None,
                          max_events: Optional[int] = None) -> SamplePath:
    """Run the queue for customers 0..n_customers-1 on the given streams."""
    params = validate(params)
    if n_customers < 1:
        raise ParameterError('n_customers', "n_customers must be at least 1")
    queue = LifoRenegingQueue(params, streams, n_customers, record_trace=record_trace,
                              eager_abandonment=eager_abandonment, max_events=max_events)
    return queue.run()


def simulate(params: Parameters, n_customers: int, seed: int, record_trace: bool = False,
             eager_abandonment: Optional[bool] = None,
             max_events: Optional[int] = None) -> SamplePath:
    """
    Simulate the queue with fresh streams.

    Args:
        params: experiment parameters
        n_customers: number of customers, customer 0 arriving at time 0
        seed: master seed of the streams
        record_trace: record (time, N_t) after every event; switches to eager abandonment
            unless ``eager_abandonment`` says otherwise
        max_events: event ceiling, ``settings.max_events`` by default

    Returns:
        SamplePath; ``truncated`` is set if the event ceiling was reached
    """
    params = validate(params)
    if n_customers < 1:
        raise ParameterError('n_customers', "n_customers must be at least 1")
    streams = gen_streams(params, n_customers, n_customers, seed)
    return simulate_from_streams(params, streams, n_customers, record_trace=record_trace,
                                 eager_abandonment=eager_abandonment, max_events=max_events)


def served_waits(path: SamplePath, burn_in: Optional[int] = None) -> list[float]:
    """W_m for served ranks m >= burn_in (empty if fewer customers were served)."""
    burn_in = settings.burn_in if burn_in is None else burn_in
    if burn_in < 0:
        raise ParameterError('burn_in', "burn_in must be nonnegative")
    waits = path.served_waits
    if burn_in >= len(waits):
        logger.warning(f"Only {len(waits)} customers served, burn_in={burn_in}: no samples")
        return []
    return waits[burn_in:]


def zero_wait_fraction(path: SamplePath, burn_in: Optional[int] = None) -> float:
    """Fraction of customers n >= burn_in, served or not, with D_n = 0."""
    burn_in = settings.burn_in if burn_in is None else burn_in
    n = len(path.outcomes)
    if not 0 <= burn_in < n:
        raise ParameterError('burn_in', f"burn_in must lie in [0, {n})")
    tail = path.outcomes[burn_in:]
    return sum(1 for o in tail if o.wait == 0.0) / len(tail)


def zero_wait_indicators(path: SamplePath, burn_in: int = 0) -> np.ndarray:
    return np.array([o.wait == 0.0 for o in path.outcomes[burn_in:]], dtype=np.float64)


def first_zero_wait_index(path: SamplePath) -> Optional[int]:
    """tau observed on a path: the first n >= 1 with D_n = 0."""
    for outcome in path.outcomes[1:]:
        if outcome.wait == 0.0:
            return outcome.index
    return None


def time_average_queue_length(path: SamplePath) -> float:
    """Time average of N_t over the recorded trace."""
    trace = path.queue_length_trace
    if not trace or len(trace) < 2:
        raise ParameterError('path', "path has no queue-length trace")
    area = 0.0
    for (t0, n0), (t1, _) in zip(trace, trace[1:]):
        area += (t1 - t0) * n0
    span = trace[-1][0] - trace[0][0]
    return area / span if span > 0 else float(trace[0][1])


def replicate_zero_wait(params: Parameters, n_customers: int, seeds: Iterable[int],
                        burn_in: Optional[int] = None) -> list[float]:
    """Zero-wait fractions of independent runs, one per seed."""
    return [
        zero_wait_fraction(simulate(params, n_customers, seed), burn_in)
        for seed in seeds
    ]
