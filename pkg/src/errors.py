"""Exceptions raised by the queue toolkit."""

from typing import Optional


class QueueModelError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(QueueModelError, ValueError):
    """An input is outside its admissible range."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


class ResourceCeilingError(QueueModelError):
    """A configured event, service or term limit was exhausted."""


class UndeterminedTauError(ResourceCeilingError):
    """The index-set procedure did not terminate below its ceiling."""

    def __init__(self, message: str, result: Optional[object] = None):
        super().__init__(message)
        self.result = result


class SeriesTruncationError(ResourceCeilingError):
    """A series ran out of terms before reaching its tolerance."""

    def __init__(self, message: str, achieved_tol: float):
        super().__init__(f"{message} (achieved tolerance {achieved_tol:.3e})")
        self.achieved_tol = achieved_tol


class TransientRegimeError(QueueModelError):
    """T = inf with lambda > mu: no stationary waiting-time law for the unserved mass."""
