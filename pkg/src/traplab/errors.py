"""Exception types raised across traplab."""

from __future__ import annotations


class TraplabError(Exception):
    """Base class for all traplab errors."""


class ParameterDomainError(TraplabError, ValueError):
    """A parameter lies outside its admissible domain."""

    def __init__(self, field: str, value, domain: str):
        self.field = field
        self.value = value
        self.domain = domain
        super().__init__(f"{field}={value!r} outside domain {domain}")


class HorizonTooSmallError(ParameterDomainError):
    def __init__(self, n):
        super().__init__("n", n, "n >= 2")


class RunawaySimulationError(TraplabError, RuntimeError):
    """Step budget exhausted; the walk is transient so this indicates a defect."""


class TrajectoryExhaustedError(TraplabError, LookupError):
    """A query falls beyond what the trajectory covers; extend the simulation."""


class PathExhaustedError(TraplabError, LookupError):
    """A first-passage level lies above the sampled subordinator path."""


class GridError(TraplabError, ValueError):
    """Time grid not strictly increasing from zero."""


class DataInsufficientError(TraplabError, ValueError):
    """Too few expected counts for a chi-square test, even after merging."""


class PartialResultError(TraplabError, RuntimeError):
    """Simulation budget exceeded; ``prefix`` carries what was covered."""

    def __init__(self, message: str, prefix):
        super().__init__(message)
        self.prefix = prefix
