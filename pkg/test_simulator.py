#!/usr/bin/env python3
"""Test the event-driven simulator against hand replays and a naive list-based queue."""

import logging
import math

import numpy as np
import pytest

from src.errors import ParameterError
from src.model import Parameters
from src.simulator import (
    EventCalendar,
    EventKind,
    EventRecord,
    first_zero_wait_index,
    replicate_zero_wait,
    served_waits,
    simulate,
    simulate_from_streams,
    time_average_queue_length,
    zero_wait_fraction,
)
from src.stats import batch_means
from src.streams import Streams, gen_streams
from src.tau_oracle import estimate_M, tau_by_index_sets

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def naive_replay(streams: Streams, deadline: float, n_customers: int) -> list[float]:
    """Plain list replay: at each completion serve the newest waiter still within its deadline."""
    arrivals = [streams.arrival_time(n) for n in range(n_customers)]
    waits = [math.inf] * n_customers
    waiting: list[int] = []
    nxt = 0
    k = 0
    now = 0.0
    current = None
    while True:
        if current is None:
            if nxt >= n_customers:
                break
            current = nxt
            now = arrivals[nxt]
            nxt += 1
        waits[current] = now - arrivals[current]
        k += 1
        done = now + streams.service_duration(k)
        while nxt < n_customers and arrivals[nxt] < done:
            waiting.append(nxt)
            nxt += 1
        now = done
        eligible = [c for c in waiting if arrivals[c] + deadline > now]
        if eligible:
            current = max(eligible)
            waiting = [c for c in eligible if c != current]
        else:
            current = None
            waiting = []
    return waits


@pytest.fixture
def hand_streams():
    # arrivals 0, 0.2, 0.5, 0.9, 2.4; services 1.0, 0.5, 2.0
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    return Streams.from_arrays(params, [0.2, 0.3, 0.4, 1.5], [1.0, 0.5, 2.0])


# --- calendar ---------------------------------------------------------------------

def test_calendar_breaks_ties_by_kind_then_insertion():
    calendar = EventCalendar()
    calendar.schedule(EventRecord(1.0, EventKind.ARRIVAL, 5))
    calendar.schedule(EventRecord(1.0, EventKind.ABANDONMENT, 3))
    calendar.schedule(EventRecord(1.0, EventKind.SERVICE_COMPLETION, 1))
    calendar.schedule(EventRecord(1.0, EventKind.ARRIVAL, 6))
    calendar.schedule(EventRecord(0.5, EventKind.ARRIVAL, 4))
    assert len(calendar) == 5
    assert calendar.peek().customer == 4
    order = [calendar.pop() for _ in range(5)]
    assert [e.customer for e in order] == [4, 1, 3, 5, 6]
    assert calendar.is_empty()
    assert calendar.pop() is None


# --- hand replay ------------------------------------------------------------------

def test_hand_replay_lifo_and_strict_deadline(hand_streams):
    path = simulate_from_streams(hand_streams.params, hand_streams, 5)
    waits = [o.wait for o in path.outcomes]
    assert waits[0] == 0.0
    assert math.isinf(waits[1])
    # 0.5 + T == 1.5 exactly at the second completion: not eligible
    assert math.isinf(waits[2])
    assert waits[3] == pytest.approx(0.1)
    assert waits[4] == 0.0
    assert [o.served_rank for o in path.outcomes] == [0, None, None, 1, 2]
    assert path.outcomes[3].service_start == pytest.approx(1.0)
    assert path.served_count == 3
    assert path.abandoned_count == 2
    assert path.served_waits == pytest.approx([0.0, 0.1, 0.0])
    assert first_zero_wait_index(path) == 4


def test_hand_replay_eager_trace(hand_streams):
    path = simulate_from_streams(hand_streams.params, hand_streams, 5, record_trace=True)
    assert [n for _, n in path.queue_length_trace] == [1, 2, 3, 4, 3, 2, 0, 1, 0]
    assert path.abandoned_count == 2
    assert time_average_queue_length(path) == pytest.approx(5.6 / 4.4)


def test_hand_replay_matches_index_sets(hand_streams):
    result = tau_by_index_sets(hand_streams)
    assert result.tau1 == 2
    assert result.n_tau1 == 3
    assert result.tau == 4


def test_arrival_at_completion_instant_is_not_selected():
    # customer 1 arrives exactly when service 1 completes: the server is free first
    params = Parameters(lam=1.0, mu=1.0, deadline=5.0)
    streams = Streams.from_arrays(params, [1.0, 5.0], [1.0, 1.0, 1.0])
    path = simulate_from_streams(params, streams, 3)
    assert [o.wait for o in path.outcomes] == [0.0, 0.0, 0.0]


# --- oracle comparisons -----------------------------------------------------------

@pytest.mark.parametrize('lam, mu, deadline, seed', [
    (1.0, 2.0, 2.0, 1),
    (1.0, 1.0, 1.0, 2),
    (2.0, 1.0, 1.0, 3),
    (3.0, 0.5, 0.3, 4),
    (0.4, 2.5, 3.0, 5),
])
def test_matches_naive_replay(lam, mu, deadline, seed):
    params = Parameters(lam=lam, mu=mu, deadline=deadline)
    n = 3000
    streams = gen_streams(params, n, n, seed)
    path = simulate_from_streams(params, streams, n)
    expected = naive_replay(streams, deadline, n)
    assert [o.wait for o in path.outcomes] == expected


def test_eager_and_lazy_modes_agree():
    params = Parameters(lam=2.0, mu=1.5, deadline=0.7)
    lazy = simulate(params, 4000, seed=10)
    eager = simulate(params, 4000, seed=10, eager_abandonment=True)
    assert [o.wait for o in lazy.outcomes] == [o.wait for o in eager.outcomes]
    assert lazy.abandoned_count == eager.abandoned_count


def test_first_zero_wait_equals_index_set_tau():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        lam, mu = rng.uniform(0.2, 2.0, size=2)
        deadline = float(rng.uniform(0.1, 1.0))
        params = Parameters(lam=float(lam), mu=float(mu), deadline=deadline)
        n = 2000
        streams = gen_streams(params, 64, 64, seed=trial)
        path = simulate_from_streams(params, streams, n)
        tau = tau_by_index_sets(streams).tau
        observed = first_zero_wait_index(path)
        if observed is None:
            assert tau >= n
        else:
            assert observed == tau


@pytest.mark.slow
def test_first_zero_wait_equals_index_set_tau_across_parameter_box():
    rng = np.random.default_rng(2025)
    for trial in range(10_000):
        lam, mu = rng.uniform(0.2, 3.0, size=2)
        deadline = float(rng.uniform(0.1, 3.0))
        params = Parameters(lam=float(lam), mu=float(mu), deadline=deadline)
        streams = gen_streams(params, 64, 64, seed=50_000 + trial)
        result = tau_by_index_sets(streams)
        assert not result.undetermined
        path = simulate_from_streams(params, streams, int(result.tau) + 1)
        assert first_zero_wait_index(path) == result.tau, (trial, params.describe())


def test_simulation_is_deterministic():
    params = Parameters(lam=1.0, mu=1.0, deadline=2.0)
    a = simulate(params, 2000, seed=99)
    b = simulate(params, 2000, seed=99)
    assert [o.to_dict() for o in a.outcomes] == [o.to_dict() for o in b.outcomes]


def test_waits_never_exceed_deadline():
    params = Parameters(lam=3.0, mu=1.0, deadline=0.8)
    path = simulate(params, 5000, seed=5)
    waits = np.array(path.served_waits)
    assert np.all(waits >= 0.0)
    assert np.all(waits <= 0.8)
    assert path.abandoned_count > 0


# --- diagnostics ------------------------------------------------------------------

def test_transient_regime_is_flagged():
    params = Parameters(lam=2.0, mu=1.0)
    path = simulate(params, 300, seed=1)
    assert any('transient' in line for line in path.diagnostics)


def test_event_ceiling_truncates():
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    path = simulate(params, 1000, seed=1, max_events=10)
    assert path.truncated
    assert any('truncated' in line for line in path.diagnostics)


def test_served_waits_burn_in():
    params = Parameters(lam=1.0, mu=2.0, deadline=1.0)
    path = simulate(params, 500, seed=3)
    all_waits = path.served_waits
    assert served_waits(path, 0) == all_waits
    assert served_waits(path, 100) == all_waits[100:]
    assert served_waits(path, 10_000) == []
    with pytest.raises(ParameterError):
        served_waits(path, -1)
    with pytest.raises(ParameterError):
        zero_wait_fraction(path, 500)


def test_classical_zero_wait_fraction_is_one_minus_rho():
    params = Parameters(lam=1.0, mu=2.0)
    path = simulate(params, 50_000, seed=17)
    assert zero_wait_fraction(path, 1000) == pytest.approx(0.5, abs=0.02)


def test_replicated_zero_wait_fractions_vary_by_seed():
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    fractions = replicate_zero_wait(params, 2000, seeds=[1, 2, 3], burn_in=100)
    assert len(fractions) == 3
    assert len(set(fractions)) > 1
    assert all(0.0 < f < 1.0 for f in fractions)


@pytest.mark.slow
@pytest.mark.parametrize('lam, mu, deadline', [(1.0, 2.0, 2.0), (1.0, 1.0, 2.0), (2.0, 1.0, 1.0)])
def test_zero_wait_fraction_matches_return_mean(lam, mu, deadline):
    params = Parameters(lam=lam, mu=mu, deadline=deadline)
    burn_in = 10_000
    path = simulate(params, 110_000, seed=31)
    indicators = np.array([o.wait == 0.0 for o in path.outcomes[burn_in:]], dtype=np.float64)
    fraction, se = batch_means(indicators)
    estimate = estimate_M(params, 100_000, seed=32)
    expected = 1.0 / estimate.m_hat
    # delta method for 1/m_hat, 99% half width -> standard error
    se_expected = expected ** 2 * estimate.ci_half_width / 2.576
    assert abs(fraction - expected) < 4 * math.hypot(se, se_expected)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
