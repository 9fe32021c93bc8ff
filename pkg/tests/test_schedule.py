"""Test schedule generators and the communication diameter check."""

from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from dynelect.const import MAX_NODE_ID
from dynelect.exceptions import ConstructionError, ParameterError, RoundRangeError
from dynelect.schedule import (
    Counterexample,
    GraphSnapshot,
    Schedule,
    build_churn_schedule,
    build_lower_bound_schedule,
    build_static_schedule,
    normalize_edge,
    snapshot_at,
    verify_comm_diameter,
)


def _make_edgeless_schedule(nodes=(1, 2), diameter=2, horizon=4):
    """Create an uncertified schedule in which nobody ever talks."""
    return Schedule.from_snapshots(
        len(nodes),
        diameter,
        [GraphSnapshot(r, frozenset(nodes)) for r in range(1, horizon + 1)],
    )


def _flooding_oracle(schedule):
    """Reference check: flood every token hop by hop over plain sets."""
    diameter = schedule.diameter
    for start in range(1, schedule.horizon - diameter + 1):
        owed = sorted(schedule.alive_during(start, start + diameter))
        for source in owed:
            held = {source}
            for round_ in range(start, start + diameter):
                snapshot = schedule.snapshot_at(round_)
                reached = set(held)
                for node in held & snapshot.vertices:
                    reached |= snapshot.neighbors(node)
                held = reached & schedule.snapshot_at(round_ + 1).vertices
            for target in owed:
                if target not in held:
                    return Counterexample(source, start, target)
    return None


def _make_random_schedule(seed, n, diameter, horizon, probability):
    """Create a schedule of independent random graphs over fixed nodes."""
    rng = np.random.default_rng(seed)
    nodes = frozenset(range(1, n + 1))
    pairs = list(combinations(sorted(nodes), 2))
    snapshots = []
    for round_ in range(1, horizon + 1):
        keep = rng.random(len(pairs)) < probability
        edges = frozenset(pair for pair, kept in zip(pairs, keep) if kept)
        snapshots.append(GraphSnapshot(round_, nodes, edges))
    return Schedule.from_snapshots(n, diameter, snapshots)


class TestGraphSnapshot:
    """Test snapshot validation."""

    def test_self_loop_rejected(self):
        """Test that a self-loop cannot be normalized."""
        with pytest.raises(ConstructionError):
            normalize_edge(3, 3)

    def test_normalize_orders_endpoints(self):
        """Test that edges are stored smaller id first."""
        assert normalize_edge(5, 2) == (2, 5)

    def test_unnormalized_edge_rejected(self):
        """Test that a reversed edge is refused."""
        with pytest.raises(ConstructionError):
            GraphSnapshot(1, frozenset({1, 2}), frozenset({(2, 1)}))

    def test_edge_outside_vertices_rejected(self):
        """Test that edges must stay inside the vertex set."""
        with pytest.raises(ConstructionError):
            GraphSnapshot(1, frozenset({1, 2}), frozenset({(1, 3)}))

    def test_complete_with_edges_rejected(self):
        """Test that a complete snapshot cannot also list edges."""
        with pytest.raises(ConstructionError):
            GraphSnapshot(1, frozenset({1, 2}), frozenset({(1, 2)}), complete=True)

    def test_complete_neighbors(self):
        """Test that a complete snapshot connects every pair."""
        snapshot = GraphSnapshot(1, frozenset({1, 2, 3}), complete=True)
        assert snapshot.neighbors(2) == frozenset({1, 3})
        assert len(snapshot.edge_set) == 3
        assert snapshot.neighbors(9) == frozenset()


class TestSchedule:
    """Test schedule bookkeeping."""

    def test_membership_intervals(self):
        """Test that entry and exit rounds follow the snapshots."""
        snapshots = [
            GraphSnapshot(1, frozenset({1, 2})),
            GraphSnapshot(2, frozenset({2, 3})),
            GraphSnapshot(3, frozenset({2, 3})),
        ]
        schedule = Schedule.from_snapshots(2, 1, snapshots)
        assert schedule.entry_round == {1: 1, 2: 1, 3: 2}
        assert schedule.exit_round == {1: 1, 2: 3, 3: 3}
        assert schedule.alive_during(1, 3) == frozenset({2})

    def test_reentry_rejected(self):
        """Test that a node may not leave and come back."""
        snapshots = [
            GraphSnapshot(1, frozenset({1, 2})),
            GraphSnapshot(2, frozenset({1})),
            GraphSnapshot(3, frozenset({1, 2})),
        ]
        with pytest.raises(ConstructionError):
            Schedule.from_snapshots(2, 1, snapshots)

    def test_too_many_vertices_rejected(self):
        """Test that a round may not exceed n vertices."""
        with pytest.raises(ConstructionError):
            Schedule.from_snapshots(1, 1, [GraphSnapshot(1, frozenset({1, 2}))])

    def test_rounds_must_be_consecutive(self):
        """Test that snapshots are labelled 1..horizon in order."""
        with pytest.raises(ConstructionError):
            Schedule.from_snapshots(1, 1, [GraphSnapshot(2, frozenset({1}))])

    def test_snapshot_at_bounds(self, static_schedule):
        """Test the first, last and out-of-range rounds."""
        assert snapshot_at(static_schedule, 1).complete
        assert static_schedule.snapshot_at(12).round == 12
        with pytest.raises(RoundRangeError):
            static_schedule.snapshot_at(13)
        with pytest.raises(RoundRangeError):
            static_schedule.snapshot_at(0)


class TestStaticSchedule:
    """Test the churn-free generator."""

    def test_path_within_diameter(self):
        """Test that a path on five nodes fits D=4."""
        schedule = build_static_schedule(5, 4, 10, "path")
        assert schedule.snapshot_at(1).edges == frozenset(
            {(1, 2), (2, 3), (3, 4), (4, 5)}
        )
        assert schedule.params == {"graph_diameter": 4}
        assert verify_comm_diameter(schedule) is None

    def test_path_exceeding_diameter(self):
        """Test that a path on five nodes does not fit D=3."""
        with pytest.raises(ConstructionError):
            build_static_schedule(5, 3, 10, "path")

    def test_complete_graph(self):
        """Test that a complete graph is stored compactly."""
        schedule = build_static_schedule(8, 1, 5, "complete")
        assert all(s.complete and not s.edges for s in schedule.snapshots)
        assert schedule.certification == "construction"
        assert schedule.nodes == list(range(1, 9))

    def test_disconnected_rejected(self):
        """Test that a disconnected edge list is refused."""
        with pytest.raises(ConstructionError):
            build_static_schedule(4, 3, 5, [(1, 2), (3, 4)])

    def test_networkx_graph_accepted(self):
        """Test a caller-supplied networkx graph."""
        graph = nx.star_graph([1, 2, 3, 4])
        schedule = build_static_schedule(4, 2, 3, graph)
        assert schedule.snapshot_at(2).neighbors(1) == frozenset({2, 3, 4})

    def test_wrong_ids_rejected(self):
        """Test that node ids must be exactly 1..n."""
        with pytest.raises(ConstructionError):
            build_static_schedule(2, 2, 3, [(1, 5)])

    def test_unknown_topology(self):
        """Test that an unknown name is a parameter error."""
        with pytest.raises(ParameterError):
            build_static_schedule(4, 2, 3, "torus")

    def test_single_node(self):
        """Test that a single-node schedule trivially verifies."""
        schedule = build_static_schedule(1, 1, 4, "complete")
        assert verify_comm_diameter(schedule) is None
        assert schedule.snapshot_at(1).vertices == frozenset({1})


class TestLowerBoundSchedule:
    """Test the lower-bound adversary."""

    def test_epoch_structure(self):
        """Test edgeless rounds followed by a complete round."""
        schedule = build_lower_bound_schedule(4, 3, 1, seed=5)
        assert schedule.horizon == 3
        for round_ in (1, 2):
            snapshot = schedule.snapshot_at(round_)
            assert len(snapshot.vertices) == 4
            assert not snapshot.edge_set
        last = schedule.snapshot_at(3)
        assert len(last.vertices) == 4
        assert last.complete
        assert len(last.edge_set) == 6

    def test_single_node(self):
        """Test that n=1 yields one vertex and no edges per round."""
        schedule = build_lower_bound_schedule(1, 2, 1, seed=0)
        for snapshot in schedule.snapshots:
            assert len(snapshot.vertices) == 1
            assert not snapshot.edge_set

    def test_invalid_parameters(self):
        """Test that D=1 or zero epochs are refused."""
        with pytest.raises(ParameterError):
            build_lower_bound_schedule(4, 1, 2, seed=0)
        with pytest.raises(ParameterError):
            build_lower_bound_schedule(4, 3, 0, seed=0)

    def test_ids_unique_and_bounded(self):
        """Test that ids come from 1..n^5 and are never reused."""
        schedule = build_lower_bound_schedule(4, 3, 20, seed=11)
        assert all(1 <= node <= 4**5 for node in schedule.nodes)
        assert len(schedule.nodes) == len(set(schedule.nodes))

    def test_verifies(self):
        """Test that the adversary respects the communication diameter."""
        schedule = build_lower_bound_schedule(4, 3, 4, seed=2)
        assert verify_comm_diameter(schedule) is None
        assert schedule.certification == "construction"

    def test_deterministic(self):
        """Test that one seed always yields the same schedule."""
        first = build_lower_bound_schedule(6, 2, 10, seed=9)
        second = build_lower_bound_schedule(6, 2, 10, seed=9)
        assert first.snapshots == second.snapshots

    def test_survival_rate(self):
        """Test that nodes survive an epoch boundary about half the time."""
        diameter = 3
        schedule = build_lower_bound_schedule(4, diameter, 200, seed=17)
        survived = 0
        trials = 0
        for boundary in range(diameter, schedule.horizon + 1, diameter):
            before = schedule.snapshot_at(boundary - 1).vertices
            after = schedule.snapshot_at(boundary).vertices
            survived += len(before & after)
            trials += len(before)
        assert trials == 800
        assert abs(survived / trials - 0.5) <= 0.1


class TestChurnSchedule:
    """Test the configurable churn generator."""

    def test_no_churn(self):
        """Test that churn_rate=0 keeps the vertex set constant."""
        schedule = build_churn_schedule(5, 3, 12, 0.0, seed=1)
        assert {s.vertices for s in schedule.snapshots} == {frozenset(range(1, 6))}

    def test_full_churn(self):
        """Test that churn_rate=1 replaces every node at every boundary."""
        schedule = build_churn_schedule(3, 3, 9, 1.0, seed=1)
        for boundary in (3, 6, 9):
            before = schedule.snapshot_at(boundary - 1).vertices
            after = schedule.snapshot_at(boundary).vertices
            assert len(after) == 3
            assert not before & after
        assert schedule.snapshot_at(9).vertices == frozenset({10, 11, 12})

    def test_complete_at_epoch_certified(self):
        """Test that the complete-at-epoch construction is certified."""
        schedule = build_churn_schedule(6, 4, 16, 0.5, seed=3)
        assert schedule.certification == "construction"
        assert schedule.snapshot_at(4).complete
        assert not schedule.snapshot_at(5).edge_set

    def test_random_connected_verified(self):
        """Test that random epoch topologies pass verification."""
        schedule = build_churn_schedule(
            8, 4, 16, 0.25, "random-connected-at-epoch", seed=4
        )
        assert schedule.certification == "verified"
        assert verify_comm_diameter(schedule) is None

    def test_window_longer_than_diameter(self):
        """Test that an impossible window is a construction error."""
        with pytest.raises(ConstructionError):
            build_churn_schedule(4, 2, 8, 0.5, window=3)

    def test_invalid_churn_rate(self):
        """Test that churn rates outside [0, 1] are refused."""
        with pytest.raises(ParameterError):
            build_churn_schedule(4, 2, 8, 1.5)

    def test_ids_stay_in_range(self):
        """Test that sequential ids stay inside the id space."""
        schedule = build_churn_schedule(4, 2, 40, 1.0, seed=0)
        assert max(schedule.nodes) < MAX_NODE_ID


class TestVerifyCommDiameter:
    """Test the flooding check."""

    def test_edgeless_counterexample(self):
        """Test that two isolated nodes give the first counterexample."""
        counterexample = verify_comm_diameter(_make_edgeless_schedule())
        assert counterexample == Counterexample(1, 1, 2)
        assert "did not reach 2" in str(counterexample)

    def test_departed_source_not_owed(self):
        """Test that only nodes alive over the whole window are owed."""
        snapshots = [
            GraphSnapshot(1, frozenset({1, 2})),
            GraphSnapshot(2, frozenset({2})),
            GraphSnapshot(3, frozenset({2})),
        ]
        schedule = Schedule.from_snapshots(2, 1, snapshots)
        assert verify_comm_diameter(schedule) is None

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_flooding_oracle(self, seed):
        """Test agreement with the set-based oracle on small random schedules."""
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 9))
        diameter = int(rng.integers(1, 4))
        horizon = int(rng.integers(diameter + 1, 21))
        probability = float(rng.choice([0.1, 0.3, 0.6]))
        schedule = _make_random_schedule(seed, n, diameter, horizon, probability)
        assert verify_comm_diameter(schedule) == _flooding_oracle(schedule)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_oracle_on_churn(self, seed):
        """Test agreement with the oracle when nodes come and go."""
        schedule = build_lower_bound_schedule(5, 2, 8, seed=seed)
        assert _flooding_oracle(schedule) is None
        assert verify_comm_diameter(schedule) is None
