"""Run traces shared by the engine, the oracle and the file formats."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .const import DEFAULT_UNIFORM_BITS
from .protocol import Message, NodeState
from .schedule import Schedule


@dataclass(frozen=True)
class RoundRecord:
    """Everything that happened in one round."""

    round: int
    alive: tuple[int, ...]
    states: dict[int, NodeState]
    outbound: dict[int, Optional[Message]]
    inbox: dict[int, tuple[Message, ...]]


@dataclass
class Trace:
    """The complete, append-only record of a run."""

    schedule: Schedule
    master_seed: int
    uniform_bits: int = DEFAULT_UNIFORM_BITS
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def diameter(self) -> int:
        return self.schedule.diameter

    @property
    def horizon(self) -> int:
        return self.schedule.horizon

    def record(self, round_: int) -> RoundRecord:
        """Return the record of ``round_``."""
        return self.rounds[round_ - 1]

    def state(self, round_: int, node: int) -> NodeState | None:
        """Return the post-step state of ``node`` in ``round_``, or None."""
        if not 1 <= round_ <= len(self.rounds):
            return None
        return self.rounds[round_ - 1].states.get(node)

    def leader_history(self, node: int) -> list[tuple[int, Optional[int]]]:
        """Return (round, leader) for every round ``node`` was alive."""
        return [
            (record.round, record.states[node].leader)
            for record in self.rounds
            if node in record.states
        ]


@dataclass(frozen=True)
class Episode:
    """A maximal run of rounds in which a node has no leader."""

    node: int
    start: int
    end: Optional[int]
    departed: bool

    @property
    def length(self) -> Optional[int]:
        return None if self.end is None else self.end - self.start


def leaderless_episodes(trace: Trace) -> list[Episode]:
    """Return every leaderless episode, ordered by node then start round.

    ``end`` is the first round with a leader again; open episodes have no
    end and record whether the node left before the horizon.
    """
    episodes = []
    open_since: dict[int, int] = {}
    for record in trace.rounds:
        for node, state in record.states.items():
            if state.leader is None:
                open_since.setdefault(node, record.round)
            elif node in open_since:
                start = open_since.pop(node)
                episodes.append(Episode(node, start, record.round, False))
    for node, start in open_since.items():
        departed = trace.schedule.exit_round[node] < trace.horizon
        episodes.append(Episode(node, start, None, departed))
    episodes.sort(key=lambda episode: (episode.node, episode.start))
    return episodes
