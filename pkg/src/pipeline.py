"""Experiment orchestration: simulation, regeneration estimates and analytic comparison."""

import json
import logging
import math
from datetime import datetime
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.analytics import AnalyticLaw
from src.config import settings
from src.errors import ParameterError, TransientRegimeError
from src.model import Parameters, SamplePath
from src.simulator import served_waits, simulate, zero_wait_fraction, zero_wait_indicators
from src.stats import batch_means, ks_distance
from src.tau_oracle import BusyPeriodBatch, ReturnLawEstimate, estimate_M, estimate_busy_periods

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """Everything one command needs; assembled from settings, a config file and flags."""

    model_config = ConfigDict(frozen=True)

    params: Parameters
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_customers: int = Field(default=100_000, gt=0)
    burn_in: Optional[int] = Field(default=None, ge=0)
    replications: int = Field(default=100_000, gt=1)
    confidence: float = Field(default_factory=lambda: settings.confidence, ge=0, lt=1)
    series_tol: float = Field(default_factory=lambda: settings.series_tol, gt=0, lt=1)
    quad_tol: float = Field(default_factory=lambda: settings.quad_tol, gt=0, lt=1)
    switch_point: float = Field(default_factory=lambda: settings.switch_point, gt=0)
    output_path: str = 'out.csv'
    format: Literal['csv', 'json'] = 'csv'
    m: Optional[float] = Field(default=None, ge=1)
    method: Literal['normal', 'median_of_means'] = 'normal'
    record_trace: bool = False
    samples: int = Field(default=10_000, gt=0)
    busy_ceiling: int = Field(default_factory=lambda: settings.busy_ceiling, gt=0)

    @model_validator(mode='after')
    def _burn_in_below_customers(self) -> "RunConfig":
        if self.burn_in is not None and self.burn_in >= self.n_customers:
            raise ValueError("burn_in must be smaller than n_customers")
        return self

    @property
    def effective_burn_in(self) -> int:
        """``burn_in``, or settings.burn_in capped at a tenth of the run."""
        if self.burn_in is not None:
            return self.burn_in
        return min(settings.burn_in, self.n_customers // 10)

    def analytic_law(self) -> AnalyticLaw:
        return AnalyticLaw(params=self.params, series_tol=self.series_tol,
                           quad_tol=self.quad_tol, switch_point=self.switch_point)


class CompareSummary(BaseModel):
    m_hat: float
    ci: tuple[float, float]
    ks: float
    n: int
    passed: bool = Field(serialization_alias='pass')
    zero_wait_fraction: float
    zero_wait_expected: float
    zero_wait_std_error: Optional[float] = None
    served: int
    abandoned: int
    advisories: list[str] = Field(default_factory=list)

    def to_dict(self) -> dict:
        return self.model_dump(by_alias=True)


class ExperimentPipeline:
    """Runs the steps behind every command and keeps a record of them."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.law = config.analytic_law()
        self.steps: list[dict] = []

    def _track(self, step: str, **details) -> None:
        record = {'step': step, 'at': datetime.now().isoformat(), **details}
        self.steps.append(record)
        logger.info(f"  → {step}: {details}")

    def run_simulation(self) -> SamplePath:
        cfg = self.config
        path = simulate(cfg.params, cfg.n_customers, cfg.seed, record_trace=cfg.record_trace)
        self._track('simulate', customers=cfg.n_customers, served=path.served_count,
                    abandoned=path.abandoned_count, truncated=path.truncated)
        return path

    def estimate_return_law(self) -> ReturnLawEstimate:
        cfg = self.config
        estimate = estimate_M(cfg.params, cfg.replications, cfg.seed,
                              confidence=cfg.confidence, method=cfg.method)
        self._track('estimate-m', m_hat=estimate.m_hat, ci_half_width=estimate.ci_half_width)
        return estimate

    def busy_sample(self) -> BusyPeriodBatch:
        cfg = self.config
        batch = estimate_busy_periods(cfg.params, cfg.samples, cfg.seed, cfg.busy_ceiling)
        self._track('busy-sample', samples=cfg.samples, finite_fraction=batch.finite_fraction)
        return batch

    def resolve_m(self) -> float:
        if self.config.m is not None:
            return self.config.m
        return self.estimate_return_law().m_hat

    def analytic_table(self, grid: list[float]) -> list[tuple[float, float, float]]:
        """(x, F_T(x), f_rho(x)) over the part of ``grid`` inside [0, T]."""
        T = self.config.params.deadline
        if not math.isfinite(T):
            raise ParameterError('deadline', "the analytic table needs a finite deadline")
        kept = sorted(x for x in grid if 0.0 <= x <= T)
        if len(kept) < len(grid):
            logger.warning(f"Trimmed {len(grid) - len(kept)} grid points outside [0, {T:g}]")
        if not kept:
            raise ParameterError('grid', "no grid point inside [0, T]")
        m = self.resolve_m()
        cdf = self.law.limiting_cdf(m, np.asarray(kept))
        rows = [(x, float(F), self.law.density(x)) for x, F in zip(kept, cdf)]
        self._track('analytic', points=len(rows), m=m)
        return rows

    def compare(self) -> CompareSummary:
        """
        Simulated served waits against the limiting law.

        Passes when the KS distance is below ``settings.ks_threshold`` on at least
        ``settings.min_compare_samples`` served waits.
        """
        cfg = self.config
        params = cfg.params
        if params.transient:
            raise TransientRegimeError(
                "T = inf with lambda > mu is transient: served waits have no limiting "
                "law to compare against"
            )
        if not params.finite_deadline:
            raise ParameterError('deadline', "compare needs a finite deadline")

        advisories: list[str] = []
        path = self.run_simulation()
        advisories.extend(path.diagnostics)
        burn_in = cfg.effective_burn_in
        waits = served_waits(path, burn_in)
        estimate = self.estimate_return_law()
        m_hat = estimate.m_hat

        ks = ks_distance(waits, lambda x: self.law.limiting_cdf(m_hat, x)) if waits else 1.0
        self._track('ks', distance=ks, samples=len(waits))

        zf = zero_wait_fraction(path, burn_in)
        indicators = zero_wait_indicators(path, burn_in)
        zf_se = batch_means(indicators)[1] if indicators.size >= 40 else None

        enough = len(waits) >= settings.min_compare_samples
        if not enough:
            advisories.append(
                f"only {len(waits)} served waits after burn-in; at least "
                f"{settings.min_compare_samples} are needed for a verdict"
            )
        passed = enough and ks < settings.ks_threshold and not path.truncated
        summary = CompareSummary(
            m_hat=m_hat,
            ci=estimate.ci,
            ks=ks,
            n=len(waits),
            passed=passed,
            zero_wait_fraction=zf,
            zero_wait_expected=1.0 / m_hat,
            zero_wait_std_error=zf_se,
            served=path.served_count,
            abandoned=path.abandoned_count,
            advisories=advisories,
        )
        self._track('compare', passed=passed)
        return summary

    def get_stats(self) -> dict:
        by_step: dict[str, int] = {}
        for record in self.steps:
            by_step[record['step']] = by_step.get(record['step'], 0) + 1
        return {
            'params': self.config.params.describe(),
            'total_steps': len(self.steps),
            'steps_by_kind': by_step,
            'steps': self.steps,
        }

    def save_state(self, filepath: str) -> None:
        """Save the step record to a JSON file."""
        state = {
            'config': json.loads(self.config.model_dump_json()),
            'stats': self.get_stats(),
            'saved_at': datetime.now().isoformat(),
        }
        with open(filepath, 'w') as f:
            json.dump(state, f, indent=2)

    def clear(self) -> None:
        self.steps = []
