"""Renewal iteration for P(D_n = 0) and discrete-time chains with a prescribed return law."""

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from src.errors import ParameterError
from src.model import Parameters, validate

logger = logging.getLogger(__name__)

ReturnLaw = Union[Mapping[int, float], Sequence[float], np.ndarray]

NORMALIZATION_TOL = 1e-9


def as_return_law(q: ReturnLaw) -> np.ndarray:
    """
    Dense vector (q_1, ..., q_K) from a mapping k -> q_k or a sequence whose first
    entry is q_1. Trailing zeros are dropped.

    Raises:
        ParameterError: negative masses or a total away from 1
    """
    if isinstance(q, Mapping):
        if not q:
            raise ParameterError('q', "q must not be empty")
        if min(q) < 1:
            raise ParameterError('q', "return times start at k = 1")
        vec = np.zeros(max(q), dtype=np.float64)
        for k, mass in q.items():
            vec[k - 1] = mass
    else:
        vec = np.asarray(q, dtype=np.float64).ravel()
    if vec.size == 0 or np.any(vec < 0) or not np.all(np.isfinite(vec)):
        raise ParameterError('q', "q must be a nonempty vector of nonnegative masses")
    total = math.fsum(vec)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ParameterError('q', f"q must sum to 1 (sums to {total:.12g})")
    support = np.flatnonzero(vec > 0)
    return vec[:support[-1] + 1]


def mean_return_time(q: ReturnLaw) -> float:
    vec = as_return_law(q)
    return math.fsum(np.arange(1, vec.size + 1) * vec)


@dataclass
class RenewalState:
    """P^(n)_00 for n = 0..n."""

    p00: np.ndarray
    n: int

    @property
    def last(self) -> float:
        return float(self.p00[-1])


def renewal_iterate(q: ReturnLaw, n: int) -> RenewalState:
    """
    P^(n)_00 = sum_{k=1..n} q_k P^(n-k)_00 with P^(0)_00 = 1.

    Args:
        q: return-time law (finite support, sums to 1)
        n: last index to compute

    Returns:
        RenewalState with p00[0..n]
    """
    if n < 0:
        raise ParameterError('n', "n must be nonnegative")
    vec = as_return_law(q)
    K = vec.size
    p = np.zeros(n + 1, dtype=np.float64)
    p[0] = 1.0
    for i in range(1, n + 1):
        kmax = min(i, K)
        p[i] = float(np.dot(vec[:kmax], p[i - kmax:i][::-1]))
    np.clip(p, 0.0, 1.0, out=p)
    return RenewalState(p00=p, n=n)


@dataclass
class ReturnChain:
    """
    Chain on states 0..K-1 whose first return time to 0 has law q:

        P_i0 = q_{i+1} / (1 - sum_{k<=i} q_k),  P_{i,i+1} = 1 - P_i0.
    """

    q: np.ndarray
    transition: np.ndarray

    @classmethod
    def from_return_law(cls, q: ReturnLaw) -> "ReturnChain":
        vec = as_return_law(q)
        K = vec.size
        # 1 - sum_{k<=i} q_k, accumulated from the tail to keep small masses exact
        tail = np.cumsum(vec[::-1])[::-1]
        P = np.zeros((K, K), dtype=np.float64)
        for i in range(K):
            back = vec[i] / tail[i] if tail[i] > 0 else 1.0
            back = min(back, 1.0)
            P[i, 0] += back
            if i + 1 < K:
                P[i, i + 1] = 1.0 - back
        return cls(q=vec, transition=P)

    @property
    def states(self) -> int:
        return self.transition.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.transition.sum(axis=1)


def chain_first_return(chain: ReturnChain, k: int) -> float:
    """f^(k)_00: probability that the chain started at 0 first revisits 0 at step k."""
    if k < 1:
        raise ParameterError('k', "k must be at least 1")
    P = chain.transition
    v = np.zeros(chain.states, dtype=np.float64)
    v[0] = 1.0
    f = 0.0
    for _ in range(k):
        v = v @ P
        f = float(v[0])
        v[0] = 0.0
    return f


def first_return_law(chain: ReturnChain, k_max: Optional[int] = None) -> np.ndarray:
    """(f^(1)_00, ..., f^(k_max)_00) in one taboo sweep."""
    k_max = chain.states if k_max is None else k_max
    P = chain.transition
    v = np.zeros(chain.states, dtype=np.float64)
    v[0] = 1.0
    out = np.zeros(k_max, dtype=np.float64)
    for step in range(k_max):
        v = v @ P
        out[step] = v[0]
        v[0] = 0.0
    return out


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """pi P = pi with sum(pi) = 1, by a direct linear solve."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def classical_embedded_chain(params: Parameters, truncation: Optional[int] = None) -> np.ndarray:
    """
    Number of customers found by successive arrivals in the classical M/M/1 queue.

    From state i the next arrival finds j in 1..i+1 with probability
    beta alpha^(i+1-j) and 0 with probability alpha^(i+1), where
    alpha = mu / (lambda + mu) and beta = lambda / (lambda + mu). Mass that would
    leave the truncated state space stays at the top state.
    """
    params = validate(params)
    if params.lam >= params.mu:
        raise ParameterError('lambda', "the classical chain is positive recurrent only for lambda < mu")
    rho = params.rho
    if truncation is None:
        truncation = min(5000, int(math.ceil(math.log(1e-16) / math.log(rho))) + 20)
    alpha = params.mu / (params.lam + params.mu)
    beta = 1.0 - alpha
    N = truncation
    P = np.zeros((N + 1, N + 1), dtype=np.float64)
    for i in range(N + 1):
        for j in range(1, i + 2):
            P[i, min(j, N)] += beta * alpha ** (i + 1 - j)
        P[i, 0] += alpha ** (i + 1)
    return P


def classical_return_mean(params: Parameters, truncation: Optional[int] = None) -> float:
    """
    M(lambda, mu, inf): mean first return time to 0 of the classical embedded chain,
    1 / pi_0. Its reciprocal is the long-run fraction of arrivals finding the
    system empty.
    """
    pi = stationary_distribution(classical_embedded_chain(params, truncation))
    logger.debug(f"Classical chain: pi_0 = {pi[0]:.12g}")
    return 1.0 / float(pi[0])
