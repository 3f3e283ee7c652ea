"""Experiment parameters and the per-customer data model shared by every module."""

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.errors import ParameterError

INF = math.inf

_FIELD_LABELS = {'lam': 'lambda', 'lambda': 'lambda', 'mu': 'mu', 'deadline': 'deadline'}


class Parameters(BaseModel):
    """
    One experiment: arrival rate, service rate and patience bound.

    ``deadline`` may be ``math.inf`` (the classical M/M/1 queue).
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(alias='lambda')
    mu: float
    deadline: float = INF

    @field_validator('lam', 'mu', 'deadline')
    @classmethod
    def _positive(cls, value: float, info) -> float:
        label = _FIELD_LABELS[info.field_name]
        if math.isnan(value) or value <= 0:
            raise ValueError(f"{label} must be positive")
        if label != 'deadline' and math.isinf(value):
            raise ValueError(f"{label} must be finite")
        return value

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @property
    def finite_deadline(self) -> bool:
        return math.isfinite(self.deadline)

    @property
    def critical(self) -> bool:
        return self.lam == self.mu

    @property
    def transient(self) -> bool:
        """T = inf with lambda > mu: a positive fraction of customers is never served."""
        return not self.finite_deadline and self.lam > self.mu

    def describe(self) -> str:
        return f"lambda={self.lam:g}, mu={self.mu:g}, T={self.deadline:g}, rho={self.rho:g}"


def validate(params: Union[Parameters, Mapping[str, Any]]) -> Parameters:
    """
    Check the parameter invariants.

    Accepts a ``Parameters`` instance (returned unchanged when valid) or a mapping
    with keys ``lambda``/``lam``, ``mu`` and ``deadline``.

    Raises:
        ParameterError: naming the first offending field
    """
    raw = params.model_dump() if isinstance(params, Parameters) else dict(params)
    try:
        checked = Parameters.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = str(first['loc'][0]) if first['loc'] else 'parameters'
        label = _FIELD_LABELS.get(loc, loc)
        message = first['msg'].removeprefix('Value error, ')
        if first['type'] == 'missing':
            message = f"{label} is required"
        raise ParameterError(label, message) from e
    return params if isinstance(params, Parameters) else checked


@dataclass(frozen=True, slots=True)
class CustomerOutcome:
    """What happened to the n-th customer: D_n and, when served, the service rank."""

    index: int
    arrival_time: float
    wait: float
    service_start: Optional[float] = None
    served_rank: Optional[int] = None

    @property
    def served(self) -> bool:
        return self.served_rank is not None

    def to_dict(self) -> dict:
        return {
            'index': self.index,
            'arrival_time': self.arrival_time,
            'wait': self.wait,
            'service_start': self.service_start,
            'served_rank': self.served_rank,
        }


@dataclass
class SamplePath:
    """Outcome of one simulation run."""

    params: Parameters
    outcomes: list[CustomerOutcome]
    queue_length_trace: Optional[list[tuple[float, int]]] = None
    truncated: bool = False
    diagnostics: list[str] = field(default_factory=list)

    @property
    def served_waits(self) -> list[float]:
        """W_m in served order."""
        served = [o for o in self.outcomes if o.served_rank is not None]
        served.sort(key=lambda o: o.served_rank)
        return [o.wait for o in served]

    @property
    def served_count(self) -> int:
        return sum(1 for o in self.outcomes if o.served_rank is not None)

    @property
    def abandoned_count(self) -> int:
        return len(self.outcomes) - self.served_count

    @property
    def response_rate(self) -> float:
        return self.served_count / len(self.outcomes) if self.outcomes else 0.0

    def summary(self) -> dict:
        return {
            'params': self.params.describe(),
            'customers': len(self.outcomes),
            'served': self.served_count,
            'abandoned': self.abandoned_count,
            'response_rate': self.response_rate,
            'truncated': self.truncated,
            'diagnostics': list(self.diagnostics),
        }
