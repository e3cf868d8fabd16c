"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations

from typing import Any


class SwarmOTError(Exception):
    """Base class for all errors raised by swarm_ot."""


class ValidationError(SwarmOTError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonPositiveCoefficient(ValidationError):
    """A utility coefficient on an active edge is not strictly positive and finite."""

    def __init__(self, edge: tuple[int, int], matrix: str, value: float):
        self.edge = edge
        self.matrix = matrix
        self.value = value
        super().__init__(f"{matrix}[{edge[0]}][{edge[1]}] = {value!r} must be finite and > 0")


class Infeasible(SwarmOTError):
    pass


class TooLarge(SwarmOTError):
    pass


class MaxIterationsExceeded(SwarmOTError):
    """The solver hit its iteration budget. Carries the final state and report."""

    def __init__(self, message: str, state: Any = None, report: Any = None):
        super().__init__(message)
        self.state = state
        self.report = report


class NotConverged(SwarmOTError):
    pass


class UnknownEntity(SwarmOTError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown entity"


class RevisitAttempt(SwarmOTError):
    pass


class EventMismatch(SwarmOTError):
    """A WaypointReached event does not match the agent's current assignment."""


class Stalled(SwarmOTError):
    pass


class WrongLength(SwarmOTError, ValueError):
    pass


class InvalidReading(SwarmOTError, ValueError):
    pass


class ScenarioError(SwarmOTError, ValueError):
    pass
