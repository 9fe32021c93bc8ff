"""Per-node leader election state machine.

Every node runs the beep framework: a leader floods a timestamped beep each
round, everyone else adopts the leader named in the newest fresh beep and
starts a new election once beeps stop arriving. Elections run in phases of
2D rounds; in the first half active nodes flood exponential ranks and the
owner of the smallest rank elects itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Optional, Union

import numpy as np

from .const import DEFAULT_UNIFORM_BITS
from .exceptions import (
    LifecycleError,
    MalformedInputError,
    ParameterError,
    RankTieError,
)

_LOGGER = logging.getLogger(__name__)

MAX_UNIFORM_BITS = 64


class NodeStatus(str, Enum):
    """Protocol status of a node."""

    PASSIVE = "passive"
    ACTIVE = "active"
    FOLLOWER = "follower"
    LEADER = "leader"


class RankOrder(str, Enum):
    """Outcome of comparing two ranks."""

    A_SMALLER = "a-smaller"
    B_SMALLER = "b-smaller"


@dataclass(frozen=True)
class Rank:
    """An election ticket: Exp(2^p) built from ``uniform`` / 2^bits."""

    p: int
    uniform: int
    owner: int
    bits: int = field(default=DEFAULT_UNIFORM_BITS, compare=False)

    @property
    def value(self) -> float:
        """Return -ln(U / 2^b) / 2^p in binary64."""
        return math.ldexp(-math.log(self.uniform / 2**self.bits), -self.p)

    @property
    def sort_key(self) -> tuple[float, int]:
        """Return the total-order key: effective value, then owner id."""
        return (self.value, self.owner)


@dataclass(frozen=True)
class Beep:
    """A leader's heartbeat generated at round ``timestamp``."""

    leader: int
    timestamp: int

    def is_fresh(self, round_: int, diameter: int) -> bool:
        """Return True if the beep is at most D rounds old."""
        return round_ - self.timestamp <= diameter


Message = Union[Rank, Beep]


@dataclass(frozen=True)
class PhaseClock:
    """Phase arithmetic over the global round counter."""

    diameter: int

    @property
    def length(self) -> int:
        return 2 * self.diameter

    def phase_index(self, round_: int) -> int:
        return (round_ - 1) // self.length

    def phase_start(self, index: int) -> int:
        return index * self.length + 1

    def is_phase_start(self, round_: int) -> bool:
        return (round_ - 1) % self.length == 0

    def first_half(self, round_: int) -> bool:
        return (round_ - 1) % self.length < self.diameter

    def is_decision_round(self, round_: int) -> bool:
        """Return True in round s + D of a phase starting at s."""
        return (round_ - 1) % self.length == self.diameter

    def next_phase_start(self, round_: int) -> int:
        """Return the first phase start strictly after ``round_``."""
        return self.phase_start(self.phase_index(round_) + 1)

    def first_phase_start_at_or_after(self, round_: int) -> int:
        if self.is_phase_start(round_):
            return round_
        return self.next_phase_start(round_)


@dataclass(frozen=True)
class ProtocolParams:
    """Common knowledge shared by every node."""

    diameter: int
    uniform_bits: int = DEFAULT_UNIFORM_BITS

    def __post_init__(self) -> None:
        if self.diameter < 1:
            raise ParameterError(f"D must be positive, got {self.diameter}")
        if not 1 <= self.uniform_bits <= MAX_UNIFORM_BITS:
            raise ParameterError(
                f"uniform_bits must lie in 1..{MAX_UNIFORM_BITS}, "
                f"got {self.uniform_bits}"
            )

    @cached_property
    def clock(self) -> PhaseClock:
        return PhaseClock(self.diameter)


@dataclass(frozen=True)
class NodeState:
    """One node's protocol state after a step."""

    node_id: int
    status: NodeStatus
    entry_round: int
    passive_anchor: int
    leader: Optional[int] = None
    p: int = 0
    my_rank: Optional[Rank] = None
    best_rank: Optional[Rank] = None
    freshest_beep: Optional[Beep] = None
    election_from: Optional[int] = None

    def to_record(self) -> dict[str, Any]:
        """Return a JSON-ready mapping of the state."""
        return {
            "id": self.node_id,
            "status": self.status.value,
            "entry": self.entry_round,
            "anchor": self.passive_anchor,
            "leader": self.leader,
            "p": self.p,
            "my_rank": _rank_record(self.my_rank),
            "best_rank": _rank_record(self.best_rank),
            "beep": (
                None
                if self.freshest_beep is None
                else [self.freshest_beep.leader, self.freshest_beep.timestamp]
            ),
            "election_from": self.election_from,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> NodeState:
        """Rebuild a state from ``to_record`` output."""
        beep = record.get("beep")
        return cls(
            node_id=int(record["id"]),
            status=NodeStatus(record["status"]),
            entry_round=int(record["entry"]),
            passive_anchor=int(record["anchor"]),
            leader=record.get("leader"),
            p=int(record.get("p", 0)),
            my_rank=_rank_from_record(record.get("my_rank")),
            best_rank=_rank_from_record(record.get("best_rank")),
            freshest_beep=None if beep is None else Beep(int(beep[0]), int(beep[1])),
            election_from=record.get("election_from"),
        )


def _rank_record(rank: Rank | None) -> list[int] | None:
    if rank is None:
        return None
    return [rank.p, rank.uniform, rank.owner, rank.bits]


def _rank_from_record(values: list[int] | None) -> Rank | None:
    if values is None:
        return None
    p, uniform, owner, bits = values
    return Rank(int(p), int(uniform), int(owner), int(bits))


def draw_rank(
    p: int, owner: int, rng: np.random.Generator, bits: int = DEFAULT_UNIFORM_BITS
) -> Rank:
    """Draw a rank with rate 2^p; U is uniform on {1, ..., 2^b - 1}."""
    if p < 0:
        raise ParameterError(f"Phase count must be non-negative, got {p}")
    if not 1 <= bits <= MAX_UNIFORM_BITS:
        raise ParameterError(f"uniform bits must lie in 1..{MAX_UNIFORM_BITS}")
    high = (1 << bits) - 1
    uniform = int(rng.integers(1, high, endpoint=True, dtype=np.uint64))
    return Rank(p, uniform, owner, bits)


def compare_ranks(a: Rank, b: Rank) -> RankOrder:
    """Order two ranks by effective value, then by owner id."""
    key_a, key_b = a.sort_key, b.sort_key
    if key_a == key_b:
        raise RankTieError(f"Ranks {a} and {b} tie in value and owner")
    return RankOrder.A_SMALLER if key_a < key_b else RankOrder.B_SMALLER


def smallest_rank(ranks: Iterable[Rank | None]) -> Rank | None:
    """Return the minimum of the given ranks, ignoring None."""
    present = [rank for rank in ranks if rank is not None]
    if not present:
        return None
    return min(present, key=lambda rank: rank.sort_key)


def on_enter(node_id: int, round_: int, params: ProtocolParams) -> NodeState:
    """Return the passive state of a node entering at ``round_``."""
    return NodeState(
        node_id=node_id,
        status=NodeStatus.PASSIVE,
        entry_round=round_,
        passive_anchor=params.clock.first_phase_start_at_or_after(round_),
    )


def on_genesis(node_id: int, params: ProtocolParams) -> NodeState:
    """Return the state of a node present in round 1.

    No leader can exist before round 1, so these nodes compete in phase 0.
    """
    return NodeState(
        node_id=node_id,
        status=NodeStatus.ACTIVE,
        entry_round=1,
        passive_anchor=1,
        election_from=1,
    )


def _newest_beep(held: Beep | None, inbox: Iterable[Message]) -> Beep | None:
    beeps = [message for message in inbox if isinstance(message, Beep)]
    if held is not None:
        beeps.append(held)
    if not beeps:
        return None
    return max(beeps, key=lambda beep: (beep.timestamp, -beep.leader))


def step(
    state: NodeState,
    round_: int,
    inbox: Iterable[Message],
    rng: np.random.Generator,
    params: ProtocolParams,
) -> tuple[NodeState, Message | None]:
    """Run one round of local computation.

    ``inbox`` holds the messages broadcast by round-(r - 1) neighbors.
    Returns the new state and the single message to broadcast, if any.
    """
    inbox = list(inbox)
    if round_ < state.entry_round:
        raise LifecycleError(
            f"Node {state.node_id} stepped at round {round_} before entering "
            f"at round {state.entry_round}"
        )
    for message in inbox:
        if isinstance(message, Beep) and message.timestamp > round_:
            raise MalformedInputError(
                f"Beep from {message.leader} stamped {message.timestamp} "
                f"delivered at round {round_}"
            )

    clock = params.clock
    node_id = state.node_id

    # Beeps: keep only the newest fresh one.
    beep = _newest_beep(state.freshest_beep, inbox)
    if beep is not None and not beep.is_fresh(round_, params.diameter):
        beep = None
    state = replace(state, freshest_beep=beep)

    if beep is not None and state.status is not NodeStatus.LEADER:
        if not (state.status is NodeStatus.FOLLOWER and state.leader == beep.leader):
            _LOGGER.debug(
                "Node %s adopts leader %s at round %d", node_id, beep.leader, round_
            )
            state = replace(
                state,
                status=NodeStatus.FOLLOWER,
                leader=beep.leader,
                p=0,
                my_rank=None,
                best_rank=None,
                election_from=None,
            )

    if state.status is NodeStatus.LEADER:
        beep = Beep(node_id, round_)
        return replace(state, freshest_beep=beep), beep

    if state.status is NodeStatus.FOLLOWER and beep is None:
        _LOGGER.debug(
            "Node %s lost leader %s at round %d", node_id, state.leader, round_
        )
        state = replace(
            state,
            status=NodeStatus.ACTIVE,
            leader=None,
            p=0,
            my_rank=None,
            best_rank=None,
            election_from=clock.next_phase_start(round_),
        )

    if clock.is_phase_start(round_):
        if (
            state.status is NodeStatus.PASSIVE
            and round_ >= state.passive_anchor + clock.length
        ):
            state = replace(state, status=NodeStatus.ACTIVE, election_from=round_)
        competing = (
            state.status is NodeStatus.ACTIVE
            and state.election_from is not None
            and state.election_from <= round_
        )
        if competing:
            p = state.p if state.my_rank is None else state.p + 1
            rank = draw_rank(p, node_id, rng, params.uniform_bits)
            state = replace(state, p=p, my_rank=rank, best_rank=rank)
        else:
            state = replace(state, best_rank=None)

    if beep is None and (clock.first_half(round_) or clock.is_decision_round(round_)):
        heard = [message for message in inbox if isinstance(message, Rank)]
        if heard:
            state = replace(state, best_rank=smallest_rank([state.best_rank, *heard]))

    if (
        clock.is_decision_round(round_)
        and state.status is NodeStatus.ACTIVE
        and state.my_rank is not None
        and state.best_rank == state.my_rank
    ):
        _LOGGER.debug("Node %s elects itself at round %d", node_id, round_)
        beep = Beep(node_id, round_)
        state = replace(
            state, status=NodeStatus.LEADER, leader=node_id, freshest_beep=beep
        )
        return state, beep

    if beep is not None:
        return state, beep
    if clock.first_half(round_) and state.best_rank is not None:
        return state, state.best_rank
    return state, None
