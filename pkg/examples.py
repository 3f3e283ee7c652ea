"""
Examples of using the reneging LIFO queue toolkit
"""

import math
from functools import partial

import numpy as np

from src.analytics import AnalyticLaw, log_busy_density
from src.markov_chain import renewal_iterate
from src.model import Parameters
from src.pipeline import ExperimentPipeline, RunConfig
from src.simulator import served_waits, simulate, zero_wait_fraction
from src.stats import classify_tail, ks_distance
from src.streams import gen_streams
from src.tau_oracle import estimate_M, m_upper_bound, p0_closed_form, tau_by_index_sets


def example_1_simulate():
    """Example 1: Simulate one sample path"""
    print("=" * 60)
    print("Example 1: Simulate a Sample Path")
    print("=" * 60)

    params = Parameters(lam=2.0, mu=1.0, deadline=1.0)
    path = simulate(params, 20_000, seed=1)

    print(f"\nParameters: {params.describe()}")
    print(f"Served: {path.served_count}")
    print(f"Abandoned: {path.abandoned_count}")
    print(f"Response rate: {path.response_rate:.3f}")
    print(f"Zero-wait fraction: {zero_wait_fraction(path, 2000):.4f}")
    return path


def example_2_regeneration():
    """Example 2: Regeneration time by index sets"""
    print("\n" + "=" * 60)
    print("Example 2: Regeneration Time")
    print("=" * 60)

    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    streams = gen_streams(params, 64, 64, seed=7)
    result = tau_by_index_sets(streams, record_trace=True)

    print(f"\ntau1 = {result.tau1}, tau = {result.tau}")
    for step in result.trace:
        print(f"  k={step.k}: N={list(step.arrivals)} J={list(step.eligible)} "
              f"j={step.selected}")

    print(f"\np0 = {p0_closed_form(params):.6f}")
    print(f"Bound on M: {m_upper_bound(params):.4f}")


def example_3_estimate_m():
    """Example 3: Monte-Carlo M and the renewal limit"""
    print("\n" + "=" * 60)
    print("Example 3: Estimate M")
    print("=" * 60)

    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    estimate = estimate_M(params, 20_000, seed=3)
    lo, hi = estimate.ci
    print(f"\nM = {estimate.m_hat:.4f}  [{lo:.4f}, {hi:.4f}]")

    state = renewal_iterate(estimate.q_hat, 500)
    print(f"P(D_n = 0) after 500 arrivals: {state.last:.6f} (1/M = {1 / estimate.m_hat:.6f})")
    return estimate


def example_4_limiting_law(estimate):
    """Example 4: Limiting waiting-time law"""
    print("\n" + "=" * 60)
    print("Example 4: Limiting Law F_T")
    print("=" * 60)

    params = Parameters(lam=1.0, mu=1.0, deadline=1.0)
    law = AnalyticLaw(params=params)
    m = estimate.m_hat
    print(f"\nAtom at zero: {law.limiting_atom(m):.5f}")
    for x in np.linspace(0.0, 1.0, 6):
        print(f"  F_T({x:.1f}) = {law.limiting_cdf(m, x):.6f}   f_rho = {law.density(x):.6f}")

    path = simulate(params, 60_000, seed=4)
    waits = served_waits(path, 10_000)
    ks = ks_distance(waits, lambda x: law.limiting_cdf(m, x))
    print(f"\nKS distance over {len(waits)} served waits: {ks:.4f}")


def example_5_tails():
    """Example 5: Busy-period tails"""
    print("\n" + "=" * 60)
    print("Example 5: Tail Classification")
    print("=" * 60)

    for lam, mu in [(1.0, 1.0), (1.0, 2.0)]:
        params = Parameters(lam=lam, mu=mu)
        law = AnalyticLaw(params=params)
        fit = classify_tail(partial(log_busy_density, params, law=law), law.tail_window)
        print(f"\nlambda={lam:g}, mu={mu:g}: {fit.kind} tail, "
              f"exponent {fit.exponent:.3f}, rate {fit.rate:.4f}")
        print(f"  total mass {law.total_mass():.8f}, "
              f"P(D < inf) = {law.cdf_series(math.inf):.4f}")


def main():
    """Run all examples"""
    example_1_simulate()
    example_2_regeneration()
    estimate = example_3_estimate_m()
    example_4_limiting_law(estimate)
    example_5_tails()

    print("\n" + "=" * 60)
    print("Saving Pipeline State")
    print("=" * 60)
    config = RunConfig(params=Parameters(lam=1.0, mu=2.0, deadline=2.0),
                       n_customers=20_000, replications=5_000)
    pipeline = ExperimentPipeline(config)
    summary = pipeline.compare()
    print(f"compare: ks={summary.ks:.4f} pass={summary.passed}")
    pipeline.save_state("pipeline_state.json")
    print("✓ State saved to pipeline_state.json")


if __name__ == "__main__":
    main()
