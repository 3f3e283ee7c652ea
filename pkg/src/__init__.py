"""M/M/1 queue with deadline impatience and LIFO service: simulation and analytics."""

__version__ = "0.1.0"

from src.config import settings
from src.model import CustomerOutcome, Parameters, SamplePath, validate
from src.pipeline import ExperimentPipeline, RunConfig
from src.simulator import served_waits, simulate
from src.tau_oracle import estimate_M, tau_by_index_sets

__all__ = [
    "CustomerOutcome",
    "ExperimentPipeline",
    "Parameters",
    "RunConfig",
    "SamplePath",
    "estimate_M",
    "served_waits",
    "settings",
    "simulate",
    "tau_by_index_sets",
    "validate",
]
