"""Oblivious-adversary schedules for dynamic networks.

A schedule is the adversary's whole commitment: one graph snapshot per round
plus the rounds in which every node enters and leaves. It is built before the
first round and never changes afterwards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Any, Iterable, Sequence, Union

import networkx as nx
import numpy as np

from .const import (
    CERTIFIED_CONSTRUCTION,
    CERTIFIED_VERIFIED,
    EPOCH_TOPOLOGIES,
    GENERATOR_CHURN,
    GENERATOR_LOWER_BOUND,
    GENERATOR_STATIC,
    MAX_NODE_ID,
    MAX_TOPOLOGY_ATTEMPTS,
    STATIC_TOPOLOGIES,
    STREAM_CHURN,
    STREAM_IDS,
    STREAM_TOPOLOGY,
    TOPOLOGY_COMPLETE_AT_EPOCH,
)
from .exceptions import ConstructionError, ParameterError, RoundRangeError

_LOGGER = logging.getLogger(__name__)

NodeId = int
Edge = tuple[int, int]
Topology = Union[nx.Graph, Iterable[Edge], str]


def normalize_edge(u: NodeId, v: NodeId) -> Edge:
    """Return the edge as an ordered pair, rejecting self-loops."""
    if u == v:
        raise ConstructionError(f"Self-loop on node {u}")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class GraphSnapshot:
    """The committed graph G^r of one round.

    A ``complete`` snapshot connects every pair of its vertices; its explicit
    edge set stays empty.
    """

    round: int
    vertices: frozenset[NodeId]
    edges: frozenset[Edge] = frozenset()
    complete: bool = False

    def __post_init__(self) -> None:
        if self.round < 1:
            raise ConstructionError(
                f"Snapshot round must be positive, got {self.round}"
            )
        if self.complete and self.edges:
            raise ConstructionError(
                f"Complete snapshot for round {self.round} lists explicit edges"
            )
        for u, v in self.edges:
            if u >= v:
                raise ConstructionError(f"Edge ({u}, {v}) is not normalized")
            if u not in self.vertices or v not in self.vertices:
                raise ConstructionError(
                    f"Edge ({u}, {v}) in round {self.round} leaves the vertex set"
                )

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        """Return every edge, expanding complete snapshots."""
        if self.complete:
            return frozenset(combinations(sorted(self.vertices), 2))
        return self.edges

    @cached_property
    def adjacency(self) -> dict[NodeId, frozenset[NodeId]]:
        """Return the neighbor set of every vertex."""
        if self.complete:
            return {v: self.vertices - {v} for v in self.vertices}
        adjacency: dict[NodeId, set[NodeId]] = {v: set() for v in self.vertices}
        for u, v in self.edges:
            adjacency[u].add(v)
            adjacency[v].add(u)
        return {v: frozenset(neighbors) for v, neighbors in adjacency.items()}

    def neighbors(self, node: NodeId) -> frozenset[NodeId]:
        """Return the round neighbors of ``node``."""
        if node not in self.vertices:
            return frozenset()
        if self.complete:
            return self.vertices - {node}
        return self.adjacency[node]


@dataclass(frozen=True)
class Counterexample:
    """A flooding start point that misses a node it is owed."""

    source: NodeId
    round: int
    target: NodeId

    def __str__(self) -> str:
        return (
            f"token flooded by {self.source} from round {self.round} "
            f"did not reach {self.target}"
        )


@dataclass(frozen=True)
class Schedule:
    """A finite oblivious-adversary schedule."""

    n: int
    diameter: int
    horizon: int
    snapshots: tuple[GraphSnapshot, ...]
    entry_round: dict[NodeId, int]
    exit_round: dict[NodeId, int]
    generator: str = GENERATOR_STATIC
    seed: int | None = None
    params: dict[str, Any] = field(default_factory=dict)
    certification: str | None = None

    @classmethod
    def from_snapshots(
        cls,
        n: int,
        diameter: int,
        snapshots: Sequence[GraphSnapshot],
        *,
        generator: str = GENERATOR_STATIC,
        seed: int | None = None,
        params: dict[str, Any] | None = None,
        certification: str | None = None,
    ) -> Schedule:
        """Validate snapshots and derive every node's membership interval."""
        if n < 1 or diameter < 1:
            raise ParameterError(f"Need n >= 1 and D >= 1, got n={n}, D={diameter}")
        if not snapshots:
            raise ConstructionError("A schedule needs at least one round")

        entry: dict[NodeId, int] = {}
        exit_: dict[NodeId, int] = {}
        for expected, snapshot in enumerate(snapshots, start=1):
            if snapshot.round != expected:
                raise ConstructionError(
                    f"Snapshot {expected} is labelled round {snapshot.round}"
                )
            if len(snapshot.vertices) > n:
                raise ConstructionError(
                    f"Round {expected} has {len(snapshot.vertices)} vertices, n={n}"
                )
            for node in snapshot.vertices:
                if node < 1 or node > MAX_NODE_ID:
                    raise ConstructionError(f"Node id {node} outside the id space")
                if node not in entry:
                    entry[node] = expected
                elif exit_[node] != expected - 1:
                    raise ConstructionError(
                        f"Node {node} re-enters in round {expected}"
                    )
                exit_[node] = expected

        return cls(
            n=n,
            diameter=diameter,
            horizon=len(snapshots),
            snapshots=tuple(snapshots),
            entry_round=entry,
            exit_round=exit_,
            generator=generator,
            seed=seed,
            params=dict(params or {}),
            certification=certification,
        )

    @property
    def nodes(self) -> list[NodeId]:
        """Return every node id that ever appears, sorted."""
        return sorted(self.entry_round)

    def snapshot_at(self, round_: int) -> GraphSnapshot:
        """Return the committed snapshot for ``round_``."""
        if not 1 <= round_ <= self.horizon:
            raise RoundRangeError(
                f"Round {round_} outside the schedule horizon 1..{self.horizon}"
            )
        return self.snapshots[round_ - 1]

    def alive_during(self, first: int, last: int) -> frozenset[NodeId]:
        """Return V^[first, last], the nodes present in every round of the range."""
        return frozenset(
            node
            for node, entered in self.entry_round.items()
            if entered <= first and self.exit_round[node] >= last
        )

    def with_certification(self, certification: str | None) -> Schedule:
        """Return a copy carrying a different certification."""
        return Schedule(
            n=self.n,
            diameter=self.diameter,
            horizon=self.horizon,
            snapshots=self.snapshots,
            entry_round=self.entry_round,
            exit_round=self.exit_round,
            generator=self.generator,
            seed=self.seed,
            params=self.params,
            certification=certification,
        )


def snapshot_at(schedule: Schedule, round_: int) -> GraphSnapshot:
    """Return the committed snapshot of ``schedule`` for ``round_``."""
    return schedule.snapshot_at(round_)


def _stream(seed: int, stream: int) -> np.random.Generator:
    """Return an independent generator for one concern of a schedule seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


class _SequentialIds:
    """Fresh ids 1, 2, 3, ..."""

    def __init__(self) -> None:
        self._next = 1

    def draw(self) -> NodeId:
        node = self._next
        self._next += 1
        return node


class _RandomIds:
    """Ids drawn uniformly without replacement from {1, ..., space}."""

    def __init__(self, space: int, rng: np.random.Generator) -> None:
        self._space = space
        self._rng = rng
        self._used: set[NodeId] = set()

    def draw(self) -> NodeId:
        if len(self._used) >= self._space:
            raise ParameterError(f"Id space of size {self._space} exhausted")
        while True:
            node = int(self._rng.integers(1, self._space, endpoint=True))
            if node not in self._used:
                self._used.add(node)
                return node


def _epoch_topology(
    current: Sequence[NodeId], topology: str, window: int, rng: np.random.Generator
) -> tuple[frozenset[Edge], bool]:
    """Return (edges, complete) for the connected window of one epoch."""
    if topology == TOPOLOGY_COMPLETE_AT_EPOCH:
        return frozenset(), True

    bound = (window + 1) // 2
    size = len(current)
    if size <= 1:
        return frozenset(), False
    if bound <= 1:
        return frozenset(), True

    probability = min(1.0, math.sqrt(3.0 * math.log(size) / size))
    graph = None
    for _ in range(MAX_TOPOLOGY_ATTEMPTS):
        candidate = nx.gnp_random_graph(
            size, probability, seed=int(rng.integers(0, 2**32))
        )
        if nx.is_connected(candidate) and nx.diameter(candidate) <= bound:
            graph = candidate
            break
    if graph is None:
        # A hub adjacent to everyone caps the diameter at 2.
        graph = nx.gnp_random_graph(size, probability, seed=int(rng.integers(0, 2**32)))
        hub = int(rng.integers(0, size))
        graph.add_edges_from((hub, other) for other in range(size) if other != hub)
        _LOGGER.debug("Random epoch topology fell back to a hub around %s", hub)

    return (
        frozenset(normalize_edge(current[u], current[v]) for u, v in graph.edges),
        False,
    )


def _epoch_snapshots(
    n: int,
    diameter: int,
    horizon: int,
    churn_rate: float,
    topology: str,
    window: int,
    seed: int,
    ids: _SequentialIds | _RandomIds,
) -> list[GraphSnapshot]:
    """Build epochs of D rounds: edgeless rounds, then a connected window.

    Churn happens at the first window round of every epoch except round 1.
    ``current`` keeps creation order so removal draws map to the same slots
    regardless of how ids are assigned.
    """
    churn_rng = _stream(seed, STREAM_CHURN)
    topology_rng = _stream(seed, STREAM_TOPOLOGY)

    current = [ids.draw() for _ in range(n)]
    window_edges: frozenset[Edge] = frozenset()
    window_complete = False
    snapshots = []
    for round_ in range(1, horizon + 1):
        offset = (round_ - 1) % diameter
        in_window = offset >= diameter - window
        if offset == diameter - window:
            if round_ > 1:
                removed = churn_rng.random(len(current)) < churn_rate
                survivors = [node for node, gone in zip(current, removed) if not gone]
                current = survivors + [ids.draw() for _ in range(n - len(survivors))]
            window_edges, window_complete = _epoch_topology(
                current, topology, window, topology_rng
            )
        vertices = frozenset(current)
        if in_window:
            snapshots.append(
                GraphSnapshot(round_, vertices, window_edges, window_complete)
            )
        else:
            snapshots.append(GraphSnapshot(round_, vertices))
    return snapshots


def build_lower_bound_schedule(
    n: int, diameter: int, epochs: int, seed: int
) -> Schedule:
    """Build the lower-bound adversary's schedule.

    Rounds iD+1..(i+1)D-1 are edgeless. In round (i+1)D every node is removed
    with probability 1/2, fresh nodes refill the network to n, and the n
    nodes form a complete graph. Ids are unique and drawn uniformly from
    {1, ..., n^5}.
    """
    if n < 1 or diameter < 2 or epochs < 1:
        raise ParameterError(
            f"Need n >= 1, D >= 2, epochs >= 1; got n={n}, D={diameter}, "
            f"epochs={epochs}"
        )
    space = min(max(n**5, n * (epochs + 1)), MAX_NODE_ID)
    snapshots = _epoch_snapshots(
        n,
        diameter,
        epochs * diameter,
        churn_rate=0.5,
        topology=TOPOLOGY_COMPLETE_AT_EPOCH,
        window=1,
        seed=seed,
        ids=_RandomIds(space, _stream(seed, STREAM_IDS)),
    )
    _LOGGER.debug(
        "Built lower-bound schedule n=%d D=%d epochs=%d seed=%d",
        n,
        diameter,
        epochs,
        seed,
    )
    return Schedule.from_snapshots(
        n,
        diameter,
        snapshots,
        generator=GENERATOR_LOWER_BOUND,
        seed=seed,
        params={"epochs": epochs},
        certification=CERTIFIED_CONSTRUCTION,
    )


def build_churn_schedule(
    n: int,
    diameter: int,
    horizon: int,
    churn_rate: float,
    topology: str = TOPOLOGY_COMPLETE_AT_EPOCH,
    seed: int = 0,
    *,
    window: int | None = None,
) -> Schedule:
    """Build an epoch schedule with configurable churn and epoch topology."""
    if n < 1 or diameter < 1 or horizon < 1:
        raise ParameterError(
            f"Need n >= 1, D >= 1, horizon >= 1; got n={n}, D={diameter}, "
            f"horizon={horizon}"
        )
    if not 0.0 <= churn_rate <= 1.0:
        raise ParameterError(f"churn_rate must lie in [0, 1], got {churn_rate}")
    if topology not in EPOCH_TOPOLOGIES:
        raise ParameterError(f"Unknown epoch topology {topology!r}")
    if window is None:
        window = 1 if topology == TOPOLOGY_COMPLETE_AT_EPOCH else diameter
    if not 1 <= window <= diameter:
        raise ConstructionError(
            f"A connected window of {window} rounds never connects within D={diameter}"
        )

    snapshots = _epoch_snapshots(
        n,
        diameter,
        horizon,
        churn_rate=churn_rate,
        topology=topology,
        window=window,
        seed=seed,
        ids=_SequentialIds(),
    )
    schedule = Schedule.from_snapshots(
        n,
        diameter,
        snapshots,
        generator=GENERATOR_CHURN,
        seed=seed,
        params={"churn_rate": churn_rate, "topology": topology, "window": window},
    )
    if topology == TOPOLOGY_COMPLETE_AT_EPOCH:
        return schedule.with_certification(CERTIFIED_CONSTRUCTION)

    counterexample = verify_comm_diameter(schedule)
    if counterexample is not None:
        raise ConstructionError(
            f"Churn schedule fails the D-guarantee: {counterexample}"
        )
    return schedule.with_certification(CERTIFIED_VERIFIED)


def static_topology(name: str, n: int) -> nx.Graph:
    """Return a named topology on nodes 1..n."""
    nodes = range(1, n + 1)
    if name == "complete":
        return nx.complete_graph(nodes)
    if name == "path":
        return nx.path_graph(nodes)
    if name == "cycle":
        return nx.cycle_graph(nodes)
    if name == "star":
        return nx.star_graph(nodes)
    raise ParameterError(
        f"Unknown static topology {name!r}; expected one of {STATIC_TOPOLOGIES}"
    )


def build_static_schedule(
    n: int, diameter: int, horizon: int, topology: Topology
) -> Schedule:
    """Build a churn-free schedule that repeats one connected topology."""
    if n < 1 or diameter < 1 or horizon < 1:
        raise ParameterError(
            f"Need n >= 1, D >= 1, horizon >= 1; got n={n}, D={diameter}, "
            f"horizon={horizon}"
        )
    if isinstance(topology, str):
        graph = static_topology(topology, n)
    elif isinstance(topology, nx.Graph):
        graph = topology.copy()
    else:
        graph = nx.Graph()
        graph.add_edges_from(topology)
    graph.add_nodes_from(range(1, n + 1))

    vertices = frozenset(graph.nodes)
    if vertices != frozenset(range(1, n + 1)):
        raise ConstructionError(f"Static topology must use node ids 1..{n}")
    if not nx.is_connected(graph):
        raise ConstructionError("Static topology is not connected")
    graph_diameter = nx.diameter(graph)
    if graph_diameter > diameter:
        raise ConstructionError(
            f"Topology diameter {graph_diameter} exceeds D={diameter}"
        )

    edges = frozenset(normalize_edge(u, v) for u, v in graph.edges)
    complete = n >= 2 and len(edges) == n * (n - 1) // 2
    if complete:
        edges = frozenset()
    snapshots = [
        GraphSnapshot(round_, vertices, edges, complete)
        for round_ in range(1, horizon + 1)
    ]
    return Schedule.from_snapshots(
        n,
        diameter,
        snapshots,
        generator=GENERATOR_STATIC,
        params={"graph_diameter": graph_diameter},
        certification=CERTIFIED_CONSTRUCTION,
    )


def verify_comm_diameter(schedule: Schedule) -> Counterexample | None:
    """Check the bounded communication diameter by simulating floods.

    For every round r with r + D <= horizon and every source u in V^[r, r+D],
    a token flooded from u must be held by every node of V^[r, r+D] at round
    r + D. A node holds the token at round t if it held it at t - 1 or a
    round-(t - 1) neighbor holding it broadcast it. Returns the first
    violation, or None.
    """
    diameter = schedule.diameter
    for start in range(1, schedule.horizon - diameter + 1):
        end = start + diameter
        owed = sorted(schedule.alive_during(start, end))
        if len(owed) < 2:
            continue

        window_nodes = sorted(
            set().union(
                *(schedule.snapshot_at(t).vertices for t in range(start, end + 1))
            )
        )
        index = {node: i for i, node in enumerate(window_nodes)}
        size = len(window_nodes)

        held = np.zeros((len(owed), size), dtype=bool)
        for row, source in enumerate(owed):
            held[row, index[source]] = True

        for round_ in range(start, end):
            snapshot = schedule.snapshot_at(round_)
            present = np.zeros(size, dtype=bool)
            present[[index[v] for v in snapshot.vertices]] = True
            following = np.zeros(size, dtype=bool)
            upcoming = schedule.snapshot_at(round_ + 1).vertices
            following[[index[v] for v in upcoming]] = True

            senders = held & present
            if snapshot.complete:
                reached = np.outer(senders.any(axis=1), present)
            elif snapshot.edges:
                adjacency = np.zeros((size, size), dtype=np.int32)
                for u, v in snapshot.edges:
                    adjacency[index[u], index[v]] = 1
                    adjacency[index[v], index[u]] = 1
                reached = (senders.astype(np.int32) @ adjacency) > 0
            else:
                reached = np.zeros_like(held)
            held = (held | reached) & following

        targets = held[:, [index[v] for v in owed]]
        if not targets.all():
            row, column = np.argwhere(~targets)[0]
            counterexample = Counterexample(owed[row], start, owed[column])
            _LOGGER.debug("D-guarantee violated: %s", counterexample)
            return counterexample
    return None
