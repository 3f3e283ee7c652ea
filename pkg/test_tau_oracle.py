#!/usr/bin/env python3
"""Test the index-set regeneration procedure, the return-time estimates and busy periods."""

import logging
import math

import numpy as np
import pytest

from src.analytics import AnalyticLaw
from src.errors import ParameterError, ResourceCeilingError, UndeterminedTauError
from src.markov_chain import classical_return_mean
from src.model import Parameters
from src.simulator import simulate_from_streams
from src.stats import ks_critical_value, ks_distance
from src.streams import Streams, gen_streams, superpose_arrivals
from src.tau_oracle import (
    busy_period_from_streams,
    estimate_M,
    estimate_busy_periods,
    estimate_p0,
    estimate_tau2,
    m_upper_bound,
    p0_closed_form,
    sample_busy_period,
    tau2_expectation,
    tau2_from_streams,
    tau_by_index_sets,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

Z99 = 2.5758293035489


# --- index sets -------------------------------------------------------------------

def test_trace_of_hand_example():
    # arrivals 0.2, 0.5, 0.9, 2.4; service completions 1.0, 1.5
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    streams = Streams.from_arrays(params, [0.2, 0.3, 0.4, 1.5], [1.0, 0.5, 2.0])
    result = tau_by_index_sets(streams, record_trace=True)
    first, second = result.trace
    assert first.arrivals == (1, 2, 3)
    assert first.eligible == (1, 2, 3)
    assert first.selected == 3
    assert second.arrivals == ()
    assert second.eligible == ()
    assert second.selected is None
    assert result.to_dict() == {
        'tau1': 2, 'n_tau1': 3, 'tau': 4, 'services_used': 2, 'undetermined': False,
    }


def test_no_arrival_during_first_service_gives_tau_one():
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    streams = Streams.from_arrays(params, [2.0], [1.0])
    result = tau_by_index_sets(streams)
    assert (result.tau1, result.n_tau1, result.tau) == (1, 0, 1)


def test_expired_arrivals_are_dropped_at_selection():
    # customers 1 and 2 arrive early in a long first service and expire before it ends
    params = Parameters(lam=1.0, mu=1.0, deadline=0.5)
    streams = Streams.from_arrays(params, [0.1, 0.1, 5.0], [3.0])
    result = tau_by_index_sets(streams)
    assert (result.tau1, result.n_tau1, result.tau) == (1, 2, 3)


def test_deadline_override():
    params = Parameters(lam=1.0, mu=1.0, deadline=0.5)
    streams = Streams.from_arrays(params, [0.1, 0.1, 5.0], [3.0, 1.0, 1.0])
    # with T = 10 customer 2 is served second, then customer 1 third
    result = tau_by_index_sets(streams, deadline=10.0)
    assert result.tau1 == 3
    assert result.tau == 3


def test_ceiling_marks_result_undetermined():
    params = Parameters(lam=1.0, mu=1.0, deadline=10.0)
    streams = Streams.from_arrays(params, [0.1, 0.1, 0.1, 50.0], [1.0, 1.0, 1.0, 1.0])
    result = tau_by_index_sets(streams, max_services=2)
    assert result.undetermined
    assert math.isinf(result.tau)
    assert result.services_used == 2


def test_tau1_never_exceeds_tau2():
    rng = np.random.default_rng(7)
    for trial in range(300):
        lam, mu = rng.uniform(0.2, 2.0, size=2)
        deadline = float(rng.uniform(0.1, 0.5))
        params = Parameters(lam=float(lam), mu=float(mu), deadline=deadline)
        streams = gen_streams(params, 64, 64, seed=trial)
        assert tau_by_index_sets(streams).tau1 <= tau2_from_streams(streams)


def test_regeneration_splices_cycles():
    params = Parameters(lam=1.3, mu=1.0, deadline=0.8)
    a = gen_streams(params, 64, 64, seed=101)
    b = gen_streams(params, 64, 64, seed=202)
    ra = tau_by_index_sets(a)
    rb = tau_by_index_sets(b)
    tau_a, tau_b = int(ra.tau), int(rb.tau)

    path_a = simulate_from_streams(params, a, tau_a)
    path_b = simulate_from_streams(params, b, tau_b)

    x = np.concatenate([a.arrivals.values(tau_a), b.arrivals.values(max(tau_b - 1, 1))])
    y = np.concatenate([a.services.values(int(ra.tau1)), b.services.values(len(b.services))])
    spliced = simulate_from_streams(params, Streams.from_arrays(params, x, y), tau_a + tau_b)

    waits = [o.wait for o in spliced.outcomes]
    assert waits[:tau_a] == [o.wait for o in path_a.outcomes]
    assert waits[tau_a] == 0.0
    for got, want in zip(waits[tau_a:], [o.wait for o in path_b.outcomes]):
        if math.isinf(want):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(want, abs=1e-9)


# --- p0, tau2 and the bound on M ---------------------------------------------------

def test_closed_forms():
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    p0 = p0_closed_form(params)
    assert p0 == pytest.approx(0.5 * math.exp(-2.0))
    assert tau2_expectation(params) == pytest.approx(1.0 / p0)
    assert m_upper_bound(params) == pytest.approx(math.exp(2.0))
    with pytest.raises(ParameterError):
        p0_closed_form(Parameters(lam=1.0, mu=2.0))


@pytest.mark.parametrize('lam, mu, deadline', [(1.0, 1.0, 0.5), (0.5, 2.0, 0.3), (2.0, 1.0, 0.2)])
def test_p0_frequency_matches_closed_form(lam, mu, deadline):
    params = Parameters(lam=lam, mu=mu, deadline=deadline)
    p_hat, se = estimate_p0(params, 100_000, seed=5)
    assert abs(p_hat - p0_closed_form(params)) < 4 * se


def test_tau2_mean_matches_geometric_law():
    params = Parameters(lam=1.0, mu=1.0, deadline=0.3)
    mean, se = estimate_tau2(params, 4000, seed=8)
    assert abs(mean - tau2_expectation(params)) < 5 * se


# --- Monte-Carlo M ----------------------------------------------------------------

def test_estimate_respects_bound_and_law():
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    estimate = estimate_M(params, 5000, seed=1)
    assert 1.0 <= estimate.m_hat <= m_upper_bound(params)
    assert sum(estimate.q_hat.values()) == pytest.approx(1.0)
    assert estimate.m_hat == pytest.approx(
        sum(k * q for k, q in estimate.q_hat.items()), rel=1e-12)
    lo, hi = estimate.ci
    assert lo < estimate.m_hat < hi
    q = estimate.q_vector()
    assert q.size == estimate.max_tau
    assert q[0] == estimate.q_hat.get(1, 0.0)


def test_estimate_is_deterministic_and_parallel_invariant():
    params = Parameters(lam=2.0, mu=1.0, deadline=0.5)
    serial = estimate_M(params, 400, seed=3, threads=1)
    again = estimate_M(params, 400, seed=3, threads=1)
    parallel = estimate_M(params, 400, seed=3, threads=2)
    assert serial.m_hat == again.m_hat
    assert serial.q_hat == parallel.q_hat
    assert serial.m_hat == parallel.m_hat


def test_median_of_means_variant():
    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    estimate = estimate_M(params, 2000, seed=4, method='median_of_means')
    assert estimate.method == 'median_of_means'
    assert estimate.m_median_of_means is not None
    assert estimate.m_median_of_means == pytest.approx(estimate.m_hat, rel=0.2)


def test_classical_queue_return_mean():
    params = Parameters(lam=1.0, mu=2.0)
    estimate = estimate_M(params, 20_000, seed=6)
    expected = classical_return_mean(params)
    assert expected == pytest.approx(2.0, rel=1e-9)
    assert abs(estimate.m_hat - expected) < 4 * estimate.ci_half_width / Z99


def test_infinite_deadline_requires_stable_queue():
    with pytest.raises(ParameterError):
        estimate_M(Parameters(lam=1.0, mu=1.0), 100, seed=1)
    with pytest.raises(ParameterError):
        estimate_M(Parameters(lam=1.0, mu=1.0, deadline=1.0), 1, seed=1)


def test_undetermined_replication_is_an_error():
    params = Parameters(lam=3.0, mu=0.5, deadline=3.0)
    with pytest.raises(UndeterminedTauError):
        estimate_M(params, 200, seed=1, max_services=1)


@pytest.mark.slow
def test_return_mean_grows_with_deadline_and_arrival_rate():
    def interval(lam, deadline):
        est = estimate_M(Parameters(lam=lam, mu=1.0, deadline=deadline), 100_000, seed=11)
        return est.ci

    by_deadline = [interval(1.0, T) for T in (0.5, 1.0, 2.0)]
    by_rate = [interval(lam, 1.0) for lam in (0.5, 1.0, 2.0)]
    for series in (by_deadline, by_rate):
        for (_, hi), (lo, _) in zip(series, series[1:]):
            assert hi < lo
    _, hi = by_deadline[1]
    assert hi <= math.exp(2.0)


# --- coupling ---------------------------------------------------------------------

def test_tau_grows_with_deadline_on_same_streams():
    rng = np.random.default_rng(77)
    ladder = [0.2, 0.5, 1.0, 2.0]
    for trial in range(500):
        lam, mu = rng.uniform(0.2, 1.5, size=2)
        params = Parameters(lam=float(lam), mu=float(mu), deadline=1.0)
        streams = gen_streams(params, 64, 64, seed=trial)
        taus = [tau_by_index_sets(streams, deadline=T).tau for T in ladder]
        assert taus == sorted(taus), (trial, taus)


def test_deadline_beyond_first_busy_period_gives_classical_tau():
    rng = np.random.default_rng(78)
    for trial in range(300):
        mu = float(rng.uniform(0.5, 3.0))
        lam = float(rng.uniform(0.1, 0.9)) * mu
        params = Parameters(lam=lam, mu=mu)
        streams = gen_streams(params, 64, 64, seed=1000 + trial)
        classical = tau_by_index_sets(streams, deadline=math.inf)
        busy = streams.service_partial(classical.tau1)
        long_deadline = tau_by_index_sets(streams, deadline=1.01 * busy + 1e-9)
        assert long_deadline.tau == classical.tau
        assert long_deadline.tau1 == classical.tau1


def test_tau_grows_when_arrivals_are_superposed():
    rng = np.random.default_rng(79)
    checked = 0
    for trial in range(500):
        lam1 = float(rng.uniform(0.2, 1.0))
        lam2 = float(rng.uniform(0.1, 0.8))
        mu = float(rng.uniform(0.5, 2.0))
        deadline = float(rng.uniform(0.2, 1.0))
        base = gen_streams(Parameters(lam=lam1, mu=mu, deadline=deadline), 64, 64, seed=trial)
        extra = gen_streams(Parameters(lam=lam2, mu=mu, deadline=deadline), 64, 64,
                            seed=10_000 + trial)
        merged = superpose_arrivals(base, extra, horizon=400.0)
        try:
            richer = tau_by_index_sets(merged)
        except ResourceCeilingError:
            continue
        checked += 1
        plain = tau_by_index_sets(base)
        assert richer.tau1 >= plain.tau1
        assert richer.tau >= plain.tau
    assert checked >= 450


# --- busy periods -----------------------------------------------------------------

def test_busy_period_on_explicit_streams():
    params = Parameters(lam=1.0, mu=1.0)
    streams = Streams.from_arrays(params, [0.5, 2.0, 3.0], [1.0, 0.4, 2.0])
    # S^Y = 1.0, 1.4, 3.4 ; S^X = 0.5, 2.5, 5.5 -> first n with S^Y_n < S^X_n is 2
    sample = busy_period_from_streams(streams)
    assert sample.tau3 == 2
    assert sample.duration == pytest.approx(1.4)
    assert sample.finite


def test_stable_busy_period_mean():
    params = Parameters(lam=1.0, mu=2.0)
    batch = estimate_busy_periods(params, 5000, seed=12)
    assert batch.finite_fraction == 1.0
    durations = batch.durations()
    se = durations.std(ddof=1) / math.sqrt(durations.size)
    assert abs(durations.mean() - 1.0) < 5 * se
    law = AnalyticLaw(params=params)
    assert ks_distance(durations, law.cdf_series) < ks_critical_value(durations.size, 0.999)


@pytest.mark.slow
def test_stable_busy_period_law_matches_series():
    params = Parameters(lam=1.0, mu=2.0)
    batch = estimate_busy_periods(params, 50_000, seed=14)
    assert batch.finite_fraction == 1.0
    assert ks_distance(batch.durations(), AnalyticLaw(params=params).cdf_series) < 0.01


def test_unstable_busy_period_is_finite_with_probability_one_over_rho():
    params = Parameters(lam=2.0, mu=1.0)
    batch = estimate_busy_periods(params, 2000, seed=13, ceiling=10_000)
    assert batch.finite_fraction == pytest.approx(0.5, abs=0.05)
    assert batch.exhausted_count == len(batch.samples) - sum(s.finite for s in batch.samples)


def test_busy_sample_is_reproducible():
    params = Parameters(lam=1.0, mu=1.5)
    a = sample_busy_period(params, seed=5, replication=3)
    b = sample_busy_period(params, seed=5, replication=3)
    assert a == b


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
