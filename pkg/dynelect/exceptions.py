"""Exceptions raised by dynelect."""

from __future__ import annotations


class DynelectError(Exception):
    """Base class for all dynelect errors."""


class ParameterError(DynelectError, ValueError):
    """Invalid parameters passed to a generator or operation."""


class ConstructionError(DynelectError):
    """A schedule cannot be built with the requested guarantee."""


class RoundRangeError(DynelectError, IndexError):
    """A round outside the schedule horizon was requested."""


class MalformedInputError(DynelectError):
    """An inbox violates the round clock."""


class LifecycleError(DynelectError):
    """A node was stepped outside its lifetime."""


class RankTieError(DynelectError):
    """Two ranks are equal in value and owner."""


class ScheduleRefusedError(DynelectError):
    """The engine refused to run a schedule that fails the D-guarantee."""

    def __init__(self, counterexample) -> None:
        super().__init__(
            f"Schedule violates the communication diameter: {counterexample}"
        )
        self.counterexample = counterexample


class ScheduleParseError(DynelectError):
    """A schedule file could not be parsed."""


class TraceParseError(DynelectError):
    """A trace file could not be parsed."""


class CampaignFailed(DynelectError):
    """One or more campaign seeds failed."""
