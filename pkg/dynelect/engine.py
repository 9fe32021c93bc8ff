"""Synchronous round loop over a schedule.

Each round applies the committed snapshot (drop leavers, create entrants),
steps every alive node with the messages its round-(r - 1) neighbors
broadcast, and records everything in a Trace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .const import DEFAULT_UNIFORM_BITS
from .exceptions import ScheduleRefusedError
from .oracle import compute_potential
from .protocol import (
    Beep,
    Message,
    NodeState,
    NodeStatus,
    ProtocolParams,
    on_enter,
    on_genesis,
    step,
)
from .schedule import GraphSnapshot, Schedule, verify_comm_diameter
from .trace import Episode, RoundRecord, Trace, leaderless_episodes

_LOGGER = logging.getLogger(__name__)


class PhaseOutcome(str, Enum):
    """How a phase ended."""

    SUCCESSFUL = "successful"
    FAILED = "failed"
    IDLE = "idle"


@dataclass(frozen=True)
class PhaseRecord:
    """Outcome of one complete phase."""

    index: int
    start: int
    outcome: PhaseOutcome
    competitors: tuple[int, ...] = ()
    leader: Optional[int] = None


@dataclass(frozen=True)
class PotentialSample:
    """Potential of a phase-start cohort, and of the same cohort one phase later."""

    phase: int
    start: int
    reference: int
    cohort: tuple[int, ...]
    value: float
    next_value: Optional[float] = None


@dataclass
class RunStats:
    """Per-run summary of a trace."""

    seed: int
    horizon: int
    episodes: list[Episode]
    phases: list[PhaseRecord]
    potentials: list[PotentialSample]
    message_counts: dict[str, int]

    @property
    def max_termination(self) -> Optional[int]:
        """Return the longest completed leaderless episode, or None."""
        lengths = [e.length for e in self.episodes if e.length is not None]
        return max(lengths) if lengths else None

    @property
    def termination_time(self) -> int:
        """Return the longest episode, counting unfinished ones to the horizon."""
        longest = 0
        for episode in self.episodes:
            if episode.end is not None:
                longest = max(longest, episode.end - episode.start)
            elif not episode.departed:
                longest = max(longest, self.horizon - episode.start + 1)
        return longest

    @property
    def first_success_phase(self) -> Optional[int]:
        for phase in self.phases:
            if phase.outcome is PhaseOutcome.SUCCESSFUL:
                return phase.index
        return None

    @property
    def phases_to_success(self) -> Optional[int]:
        """Return the number of phases up to and including the first success."""
        first = self.first_success_phase
        return None if first is None else first + 1


def node_rng(master_seed: int, node_id: int) -> np.random.Generator:
    """Return the private stream of ``node_id`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, node_id]))


def deliver(
    snapshot: GraphSnapshot, outbounds: Mapping[int, Optional[Message]]
) -> dict[int, tuple[Message, ...]]:
    """Route round-r broadcasts to round-r neighbors, sorted by sender id.

    Nodes never receive their own broadcast.
    """
    if snapshot.complete:
        senders = sorted(
            node
            for node, message in outbounds.items()
            if message is not None and node in snapshot.vertices
        )
        return {
            node: tuple(outbounds[sender] for sender in senders if sender != node)
            for node in snapshot.vertices
        }
    inboxes = {}
    for node in snapshot.vertices:
        inboxes[node] = tuple(
            outbounds[neighbor]
            for neighbor in sorted(snapshot.neighbors(node))
            if outbounds.get(neighbor) is not None
        )
    return inboxes


def run(
    schedule: Schedule,
    master_seed: int,
    *,
    uniform_bits: int = DEFAULT_UNIFORM_BITS,
    allow_unverified: bool = False,
) -> Trace:
    """Run the protocol over ``schedule`` and return the full trace."""
    params = ProtocolParams(schedule.diameter, uniform_bits)
    if schedule.certification is None:
        counterexample = verify_comm_diameter(schedule)
        if counterexample is not None:
            if not allow_unverified:
                _LOGGER.error("Refusing schedule: %s", counterexample)
                raise ScheduleRefusedError(counterexample)
            _LOGGER.warning("Running unverified schedule: %s", counterexample)

    trace = Trace(schedule, master_seed, uniform_bits)
    states: dict[int, NodeState] = {}
    rngs: dict[int, np.random.Generator] = {}
    previous: GraphSnapshot | None = None
    outbound: dict[int, Optional[Message]] = {}

    for round_ in range(1, schedule.horizon + 1):
        snapshot = schedule.snapshot_at(round_)
        inboxes = deliver(previous, outbound) if previous is not None else {}

        for node in [node for node in states if node not in snapshot.vertices]:
            del states[node]
            del rngs[node]
        for node in sorted(set(snapshot.vertices) - set(states)):
            if round_ == 1:
                states[node] = on_genesis(node, params)
            else:
                states[node] = on_enter(node, round_, params)
            rngs[node] = node_rng(master_seed, node)

        outbound = {}
        received = {}
        for node in sorted(snapshot.vertices):
            inbox = inboxes.get(node, ())
            states[node], outbound[node] = step(
                states[node], round_, inbox, rngs[node], params
            )
            received[node] = inbox

        trace.rounds.append(
            RoundRecord(
                round=round_,
                alive=tuple(sorted(snapshot.vertices)),
                states=dict(states),
                outbound=outbound,
                inbox=received,
            )
        )
        previous = snapshot

    _LOGGER.debug(
        "Run seed=%d finished %d rounds over %d nodes",
        master_seed,
        schedule.horizon,
        len(schedule.entry_round),
    )
    return trace


def _competitors(trace: Trace, start: int) -> list[NodeState]:
    record = trace.record(start)
    return [
        state
        for state in record.states.values()
        if state.status is NodeStatus.ACTIVE
        and state.my_rank is not None
        and state.election_from is not None
        and state.election_from <= start
    ]


def _phase_record(trace: Trace, index: int, start: int) -> PhaseRecord:
    diameter = trace.diameter
    competitors = _competitors(trace, start)
    if not competitors:
        return PhaseRecord(index, start, PhaseOutcome.IDLE)

    ids = tuple(sorted(state.node_id for state in competitors))
    end = start + 2 * diameter - 1
    for round_ in range(start, start + diameter + 1):
        for node, state in trace.record(round_).states.items():
            if state.status is not NodeStatus.LEADER:
                continue
            before = trace.state(round_ - 1, node)
            if before is not None and before.status is NodeStatus.LEADER:
                continue
            if node in trace.record(end).states:
                return PhaseRecord(index, start, PhaseOutcome.SUCCESSFUL, ids, node)
    return PhaseRecord(index, start, PhaseOutcome.FAILED, ids)


def _potential_sample(trace: Trace, index: int, start: int) -> PotentialSample | None:
    competitors = _competitors(trace, start)
    if not competitors:
        return None
    reference = max(competitors, key=lambda state: (state.p, -state.node_id)).node_id
    cohort = frozenset(state.node_id for state in competitors)
    value = compute_potential(trace, start, reference, cohort)

    next_value = None
    following = start + 2 * trace.diameter
    if following <= trace.horizon:
        state = trace.state(following, reference)
        if state is not None and state.status is NodeStatus.ACTIVE:
            next_value = compute_potential(trace, following, reference, cohort)
    return PotentialSample(
        index, start, reference, tuple(sorted(cohort)), value, next_value
    )


def summarize(trace: Trace) -> RunStats:
    """Summarize a complete trace into per-run statistics."""
    params = ProtocolParams(trace.diameter, trace.uniform_bits)
    clock = params.clock

    phases = []
    potentials = []
    index = 0
    while clock.phase_start(index) + clock.length - 1 <= trace.horizon:
        start = clock.phase_start(index)
        phases.append(_phase_record(trace, index, start))
        sample = _potential_sample(trace, index, start)
        if sample is not None:
            potentials.append(sample)
        index += 1

    counts = {"rank": 0, "beep": 0}
    for record in trace.rounds:
        for message in record.outbound.values():
            if message is None:
                continue
            counts["beep" if isinstance(message, Beep) else "rank"] += 1

    return RunStats(
        seed=trace.master_seed,
        horizon=trace.horizon,
        episodes=leaderless_episodes(trace),
        phases=phases,
        potentials=potentials,
        message_counts=counts,
    )
