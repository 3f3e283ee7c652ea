#!/usr/bin/env python3
"""Test the renewal iteration and chains with a prescribed return-time law."""

import logging

import numpy as np
import pytest

from src.errors import ParameterError
from src.markov_chain import (
    ReturnChain,
    as_return_law,
    chain_first_return,
    classical_embedded_chain,
    classical_return_mean,
    first_return_law,
    mean_return_time,
    renewal_iterate,
    stationary_distribution,
)
from src.model import Parameters
from src.tau_oracle import estimate_M

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def random_law(rng: np.random.Generator, size: int) -> np.ndarray:
    q = rng.random(size)
    return q / q.sum()


def test_return_law_forms():
    assert list(as_return_law({1: 0.25, 3: 0.75})) == [0.25, 0.0, 0.75]
    assert list(as_return_law([0.5, 0.5, 0.0])) == [0.5, 0.5]
    assert mean_return_time([0.5, 0.5]) == pytest.approx(1.5)


@pytest.mark.parametrize('q', [
    [0.5, 0.4],
    [-0.1, 1.1],
    [],
    {0: 1.0},
    {},
])
def test_invalid_return_laws(q):
    with pytest.raises(ParameterError):
        as_return_law(q)


def test_renewal_converges_to_inverse_mean():
    state = renewal_iterate([0.5, 0.5], 60)
    assert state.p00[0] == 1.0
    assert state.p00[1] == pytest.approx(0.5)
    assert state.p00[2] == pytest.approx(0.75)
    assert state.last == pytest.approx(2.0 / 3.0, abs=1e-6)
    assert state.n == 60


def test_renewal_rejects_negative_index():
    with pytest.raises(ParameterError):
        renewal_iterate([1.0], -1)


def test_geometric_law_is_memoryless():
    # q_k = (1 - a) a^(k-1): P^(n)_00 = 1 - a for every n >= 1
    a = 0.3
    q = (1 - a) * a ** np.arange(60)
    q[-1] += 1.0 - q.sum()
    state = renewal_iterate(q, 30)
    np.testing.assert_allclose(state.p00[1:], 1 - a, atol=1e-12)


def test_chain_rows_are_stochastic():
    chain = ReturnChain.from_return_law([0.2, 0.3, 0.1, 0.4])
    assert chain.states == 4
    np.testing.assert_allclose(chain.row_sums(), 1.0, atol=1e-15)
    assert chain.transition[3, 0] == pytest.approx(1.0)
    assert chain.transition[0, 1] == pytest.approx(0.8)


def test_chain_reproduces_random_return_laws():
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = random_law(rng, int(rng.integers(1, 15)))
        chain = ReturnChain.from_return_law(q)
        np.testing.assert_allclose(first_return_law(chain), q, rtol=0, atol=1e-12)
        for k in range(1, q.size + 1):
            assert abs(chain_first_return(chain, k) - q[k - 1]) < 1e-12


def test_chain_stationary_mass_at_zero_is_inverse_mean():
    q = [0.1, 0.2, 0.3, 0.4]
    pi = stationary_distribution(ReturnChain.from_return_law(q).transition)
    assert pi.sum() == pytest.approx(1.0)
    assert pi[0] == pytest.approx(1.0 / mean_return_time(q), rel=1e-12)


def test_first_return_index_must_be_positive():
    chain = ReturnChain.from_return_law([1.0])
    with pytest.raises(ParameterError):
        chain_first_return(chain, 0)


def test_empirical_return_law_feeds_the_renewal_limit():
    params = Parameters(lam=1.0, mu=1.0, deadline=0.5)
    estimate = estimate_M(params, 3000, seed=21)
    state = renewal_iterate(estimate.q_hat, 3000)
    assert state.last == pytest.approx(1.0 / estimate.m_hat, abs=1e-6)


def test_classical_chain_matches_geometric_queue_length():
    params = Parameters(lam=1.0, mu=3.0)
    P = classical_embedded_chain(params, truncation=80)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    pi = stationary_distribution(P)
    rho = params.rho
    expected = (1 - rho) * rho ** np.arange(10)
    np.testing.assert_allclose(pi[:10], expected, rtol=1e-9)
    assert classical_return_mean(params) == pytest.approx(1.0 / (1.0 - rho), rel=1e-9)


def test_classical_chain_needs_stable_queue():
    with pytest.raises(ParameterError):
        classical_embedded_chain(Parameters(lam=2.0, mu=1.0))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
