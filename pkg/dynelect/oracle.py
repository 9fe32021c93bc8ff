"""Trace checks for the leader election correctness conditions.

Every check is a pure function of a Trace and returns a list of Violations;
an empty list means the property held on every round of the run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .codec import fits_budget, message_bits
from .exceptions import ParameterError
from .protocol import Beep, NodeStatus
from .trace import Trace, leaderless_episodes

_LOGGER = logging.getLogger(__name__)


class ViolationKind(str, Enum):
    """Property a violation breaks."""

    AGREEMENT = "agreement"
    VALIDITY = "validity"
    STABILITY = "stability"
    TERMINATION = "termination"
    UNIQUENESS = "uniqueness"
    BUDGET = "budget"
    FRESHNESS = "freshness"


@dataclass(frozen=True)
class Violation:
    """One failed check, with the round and nodes to replay it."""

    kind: ViolationKind
    round: int
    nodes: tuple[int, ...]
    evidence: str

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "round": self.round,
            "nodes": list(self.nodes),
            "evidence": self.evidence,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> Violation:
        return cls(
            kind=ViolationKind(record["kind"]),
            round=int(record["round"]),
            nodes=tuple(int(node) for node in record["nodes"]),
            evidence=str(record["evidence"]),
        )


def check_agreement(trace: Trace) -> list[Violation]:
    """Flag every round in which alive nodes name different leaders."""
    violations = []
    for record in trace.rounds:
        holders = {
            node: state.leader
            for node, state in record.states.items()
            if state.leader is not None
        }
        leaders = set(holders.values())
        if len(leaders) > 1:
            violations.append(
                Violation(
                    ViolationKind.AGREEMENT,
                    record.round,
                    tuple(sorted(holders)),
                    f"leaders {sorted(leaders)} coexist",
                )
            )
    return violations


def _changes(trace: Trace) -> Iterable[tuple[int, int, Optional[int], Optional[int]]]:
    """Yield (round, node, before, after) for every leader variable change.

    A node's first round counts as a change from None.
    """
    previous: dict[int, Optional[int]] = {}
    for record in trace.rounds:
        for node in sorted(record.states):
            leader = record.states[node].leader
            before = previous.get(node)
            if leader != before:
                yield record.round, node, before, leader
            previous[node] = leader


def check_validity(trace: Trace, diameter: int | None = None) -> list[Violation]:
    """Flag adoptions of a node that was not leader in [r - D - 1, r]."""
    diameter = trace.diameter if diameter is None else diameter
    violations = []
    for round_, node, _before, after in _changes(trace):
        if after is None or after == node:
            continue
        window = range(max(1, round_ - diameter - 1), round_ + 1)
        was_leader = any(
            (state := trace.state(k, after)) is not None and state.leader == after
            for k in window
        )
        if not was_leader:
            violations.append(
                Violation(
                    ViolationKind.VALIDITY,
                    round_,
                    (node, after),
                    f"{node} adopted {after}, which was not leader in "
                    f"rounds {window.start}..{round_}",
                )
            )
    return violations


def check_stability(trace: Trace) -> list[Violation]:
    """Flag a node dropping leader v while v is still in the network."""
    violations = []
    for round_, node, before, after in _changes(trace):
        if before is None:
            continue
        if before in trace.record(round_).states:
            violations.append(
                Violation(
                    ViolationKind.STABILITY,
                    round_,
                    (node, before),
                    f"{node} switched from {before} to {after} while {before} "
                    "was alive",
                )
            )
    return violations


def check_termination(trace: Trace, bound_rounds: int) -> list[Violation]:
    """Flag leaderless episodes still open ``bound_rounds`` after they start.

    Episodes of nodes that leave before the deadline, or whose deadline lies
    past the horizon, are never flagged.
    """
    if bound_rounds < 0:
        raise ParameterError(f"bound_rounds must be non-negative, got {bound_rounds}")
    violations = []
    for episode in leaderless_episodes(trace):
        deadline = episode.start + bound_rounds
        if deadline > trace.horizon:
            continue
        state = trace.state(deadline, episode.node)
        if state is None:
            continue
        if state.leader is None:
            violations.append(
                Violation(
                    ViolationKind.TERMINATION,
                    deadline,
                    (episode.node,),
                    f"{episode.node} has no leader {bound_rounds} rounds after "
                    f"round {episode.start}",
                )
            )
    return violations


def check_unique_candidate(trace: Trace) -> list[Violation]:
    """Flag phases with two surviving competitors that each saw no smaller rank.

    A competitor is a node that drew a rank at the phase start. It counts as a
    candidate if it is alive at the decision round s + D and its best rank
    is still its own.
    """
    diameter = trace.diameter
    violations = []
    start = 1
    while start + diameter <= trace.horizon:
        decision = start + diameter
        candidates = []
        for node, state in trace.record(start).states.items():
            rank = state.my_rank
            if state.status is not NodeStatus.ACTIVE or rank is None:
                continue
            if state.election_from is None or state.election_from > start:
                continue
            later = trace.state(decision, node)
            if later is None:
                continue
            if later.my_rank == rank and later.best_rank == rank:
                candidates.append(node)
        if len(candidates) >= 2:
            violations.append(
                Violation(
                    ViolationKind.UNIQUENESS,
                    decision,
                    tuple(sorted(candidates)),
                    f"{len(candidates)} candidates survive the phase starting "
                    f"at round {start}",
                )
            )
        start += 2 * diameter
    return violations


def check_budget(trace: Trace) -> list[Violation]:
    """Flag broadcasts that do not fit the per-message bit budget."""
    violations = []
    for record in trace.rounds:
        for node, message in sorted(record.outbound.items()):
            if message is None:
                continue
            if not fits_budget(message, trace.horizon, trace.uniform_bits):
                violations.append(
                    Violation(
                        ViolationKind.BUDGET,
                        record.round,
                        (node,),
                        f"{message!r} needs {message_bits(message)} bits",
                    )
                )
    return violations


def check_freshness(trace: Trace) -> list[Violation]:
    """Flag broadcast beeps older than D rounds."""
    violations = []
    for record in trace.rounds:
        for node, message in sorted(record.outbound.items()):
            if not isinstance(message, Beep):
                continue
            if not message.is_fresh(record.round, trace.diameter):
                violations.append(
                    Violation(
                        ViolationKind.FRESHNESS,
                        record.round,
                        (node, message.leader),
                        f"{node} forwarded a beep stamped {message.timestamp}",
                    )
                )
    return violations


def check_all(trace: Trace, bound_rounds: int | None = None) -> list[Violation]:
    """Run every check; termination only when ``bound_rounds`` is given."""
    violations = (
        check_agreement(trace)
        + check_validity(trace)
        + check_stability(trace)
        + check_unique_candidate(trace)
        + check_budget(trace)
        + check_freshness(trace)
    )
    if bound_rounds is not None:
        violations += check_termination(trace, bound_rounds)
    if violations:
        _LOGGER.debug(
            "Seed %d produced %d violations", trace.master_seed, len(violations)
        )
    return violations


def compute_potential(
    trace: Trace, phase_start_round: int, reference: int, cohort: Iterable[int]
) -> float:
    """Return sum of 2^p_b / 2^p_ref over cohort members alive and active.

    Members that left or stopped competing contribute nothing.
    """
    anchor = trace.state(phase_start_round, reference)
    if anchor is None or anchor.status is not NodeStatus.ACTIVE:
        raise ParameterError(
            f"Reference {reference} is not alive and active at round "
            f"{phase_start_round}"
        )
    total = 0.0
    for member in cohort:
        state = trace.state(phase_start_round, member)
        if state is None or state.status is not NodeStatus.ACTIVE:
            continue
        total += math.ldexp(1.0, state.p - anchor.p)
    return total


def _never_led(trace: Trace, node: int, last_round: int) -> bool:
    return all(
        trace.record(round_).states[node].leader is None
        for round_ in range(1, last_round + 1)
    )


def leaderless_profile(trace: Trace, diameter: int, max_i: int) -> list[bool]:
    """Return, for i = 0..max_i, whether the run was still leaderless at iD.

    The run is leaderless at iD if some node present in every round 1..iD
    never set its leader variable during those rounds.
    """
    if max_i * diameter > trace.horizon:
        raise ParameterError(
            f"Trace horizon {trace.horizon} is shorter than {max_i} * {diameter}"
        )
    profile = [True]
    for i in range(1, max_i + 1):
        cutoff = i * diameter
        survivors = trace.schedule.alive_during(1, cutoff)
        profile.append(
            profile[-1]
            and any(_never_led(trace, node, cutoff) for node in sorted(survivors))
        )
    return profile


def curve_from_profiles(profiles: Sequence[Sequence[bool]]) -> list[float]:
    """Average per-run leaderless profiles into probabilities."""
    if not profiles:
        raise ParameterError("Need at least one run to estimate a curve")
    matrix = np.asarray(profiles, dtype=bool)
    return [float(value) for value in matrix.mean(axis=0)]


def lower_bound_curve(
    traces: Sequence[Trace], diameter: int, max_i: int | None = None
) -> list[float]:
    """Return, for i = 0..max_i, the fraction of runs still leaderless at iD.

    i = 0 is 1 by definition; the curve is non-increasing in i.
    """
    if not traces:
        raise ParameterError("lower_bound_curve needs at least one trace")
    if max_i is None:
        max_i = min(trace.horizon for trace in traces) // diameter
    return curve_from_profiles(
        [leaderless_profile(trace, diameter, max_i) for trace in traces]
    )
