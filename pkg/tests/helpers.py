"""Hand-built states and traces for oracle and report tests."""

from __future__ import annotations

from dynelect.protocol import NodeState, NodeStatus
from dynelect.schedule import GraphSnapshot, Schedule
from dynelect.trace import RoundRecord, Trace


def make_state(node, leader=None, status=None, entry=1, **kwargs):
    """Build a NodeState, deriving the status from the leader if not given."""
    if status is None:
        if leader is None:
            status = NodeStatus.ACTIVE
        elif leader == node:
            status = NodeStatus.LEADER
        else:
            status = NodeStatus.FOLLOWER
    return NodeState(
        node_id=node,
        status=status,
        entry_round=entry,
        passive_anchor=entry,
        leader=leader,
        **kwargs,
    )


def make_trace(diameter, rounds, outbound=None):
    """Build a trace by hand from per-round ``{node: NodeState | leader}`` maps.

    Every round's snapshot is the complete graph on the listed nodes. Plain
    leader values (ints or None) are turned into states with ``make_state``.
    """
    entry = {}
    snapshots = []
    for round_, nodes in enumerate(rounds, start=1):
        for node in nodes:
            entry.setdefault(node, round_)
        snapshots.append(GraphSnapshot(round_, frozenset(nodes), complete=True))
    schedule = Schedule.from_snapshots(
        max(len(nodes) for nodes in rounds),
        diameter,
        snapshots,
        certification="construction",
    )
    trace = Trace(schedule, 0)
    for round_, nodes in enumerate(rounds, start=1):
        states = {
            node: (
                value
                if isinstance(value, NodeState)
                else make_state(node, value, entry=entry[node])
            )
            for node, value in nodes.items()
        }
        messages = {node: None for node in nodes}
        if outbound and round_ in outbound:
            messages.update(outbound[round_])
        trace.rounds.append(
            RoundRecord(
                round=round_,
                alive=tuple(sorted(nodes)),
                states=states,
                outbound=messages,
                inbox={node: () for node in nodes},
            )
        )
    return trace
