"""Test the per-node election state machine."""

import math
from collections import Counter

import numpy as np
import pytest

from dynelect.exceptions import (
    LifecycleError,
    MalformedInputError,
    ParameterError,
    RankTieError,
)
from dynelect.protocol import (
    Beep,
    NodeState,
    NodeStatus,
    PhaseClock,
    ProtocolParams,
    Rank,
    RankOrder,
    compare_ranks,
    draw_rank,
    on_enter,
    on_genesis,
    smallest_rank,
    step,
)

HALF = 1 << 63
TINY_UNIFORM = (1 << 64) - 1


def _rng(seed=0):
    return np.random.default_rng(seed)


def _make_follower(node=2, leader=7, beep_round=1, entry=1):
    """Create a follower holding a beep from ``leader``."""
    return NodeState(
        node_id=node,
        status=NodeStatus.FOLLOWER,
        entry_round=entry,
        passive_anchor=entry,
        leader=leader,
        freshest_beep=Beep(leader, beep_round),
    )


class TestPhaseClock:
    """Test phase arithmetic."""

    def test_phase_boundaries(self):
        """Test starts, halves and decision rounds for D=3."""
        clock = PhaseClock(3)
        assert clock.length == 6
        assert [r for r in range(1, 14) if clock.is_phase_start(r)] == [1, 7, 13]
        assert [r for r in range(1, 13) if clock.is_decision_round(r)] == [4, 10]
        assert [clock.first_half(r) for r in range(1, 7)] == [
            True,
            True,
            True,
            False,
            False,
            False,
        ]

    def test_next_phase_start(self):
        """Test that the next start is strictly later."""
        clock = PhaseClock(3)
        assert clock.next_phase_start(1) == 7
        assert clock.next_phase_start(6) == 7
        assert clock.next_phase_start(7) == 13
        assert clock.first_phase_start_at_or_after(7) == 7
        assert clock.first_phase_start_at_or_after(8) == 13
        assert clock.phase_index(12) == 1

    def test_invalid_params(self):
        """Test that D and uniform bits are validated."""
        with pytest.raises(ParameterError):
            ProtocolParams(0)
        with pytest.raises(ParameterError):
            ProtocolParams(2, uniform_bits=65)


class TestRanks:
    """Test rank values and ordering."""

    def test_value(self):
        """Test -ln(U / 2^b) / 2^p."""
        assert Rank(0, HALF, 1).value == pytest.approx(math.log(2))
        assert Rank(1, HALF, 1).value == pytest.approx(math.log(2) / 2)

    def test_value_halves_with_phase_count(self):
        """Test that one more phase halves the value for a fixed uniform."""
        for uniform in (1, 12345, HALF, TINY_UNIFORM):
            assert Rank(3, uniform, 1).value == pytest.approx(
                Rank(2, uniform, 1).value / 2
            )

    def test_compare_by_value(self):
        """Test that the smaller value wins."""
        small = Rank(0, TINY_UNIFORM, 9)
        large = Rank(0, 1, 1)
        assert compare_ranks(small, large) is RankOrder.A_SMALLER
        assert compare_ranks(large, small) is RankOrder.B_SMALLER

    def test_compare_ties_by_owner(self):
        """Test that equal values fall back to the smaller owner id."""
        assert compare_ranks(Rank(0, 99, 5), Rank(0, 99, 9)) is RankOrder.A_SMALLER

    def test_value_rounds_to_zero_near_top(self):
        """Test that U / 2^b rounding to 1 gives a zero value."""
        assert Rank(0, TINY_UNIFORM, 1).value == 0.0
        assert Rank(0, TINY_UNIFORM - 1, 1).value == 0.0

    def test_rounded_values_fall_back_to_owner(self):
        """Test that distinct uniforms with equal values order by owner id."""
        first = Rank(0, TINY_UNIFORM, 9)
        second = Rank(0, TINY_UNIFORM - 1, 4)
        assert compare_ranks(first, second) is RankOrder.B_SMALLER

    def test_compare_identical_raises(self):
        """Test that a full tie is an error."""
        with pytest.raises(RankTieError):
            compare_ranks(Rank(0, 99, 5), Rank(0, 99, 5))

    def test_compare_is_a_total_order(self):
        """Test antisymmetry and transitivity on random triples."""
        rng = _rng(4)
        for _ in range(2000):
            a, b, c = (
                draw_rank(int(rng.integers(0, 4)), owner, rng, bits=8)
                for owner in (1, 2, 3)
            )
            assert compare_ranks(a, b) is not compare_ranks(b, a)
            if (
                compare_ranks(a, b) is RankOrder.A_SMALLER
                and compare_ranks(b, c) is RankOrder.A_SMALLER
            ):
                assert compare_ranks(a, c) is RankOrder.A_SMALLER

    def test_smallest_rank_ignores_none(self):
        """Test the minimum helper."""
        small = Rank(0, TINY_UNIFORM, 9)
        assert smallest_rank([None, Rank(0, 1, 1), small]) == small
        assert smallest_rank([None]) is None


class TestDrawRank:
    """Test the rank distribution."""

    def test_deterministic(self):
        """Test that the same stream gives the same rank."""
        assert draw_rank(0, 1, _rng(3)) == draw_rank(0, 1, _rng(3))

    def test_uniform_range(self):
        """Test that one uniform bit always yields U=1."""
        rank = draw_rank(0, 1, _rng(), bits=1)
        assert rank.uniform == 1
        assert rank.value == pytest.approx(math.log(2))

    def test_negative_phase_count(self):
        """Test that p must be non-negative."""
        with pytest.raises(ParameterError):
            draw_rank(-1, 1, _rng())

    def test_mean_is_one(self):
        """Test that p=0 draws are Exp(1)."""
        rng = _rng(7)
        values = [draw_rank(0, 1, rng).value for _ in range(20000)]
        assert np.mean(values) == pytest.approx(1.0, abs=0.03)

    def test_minimum_probability(self):
        """Test that rates 1, 2 and 4 hold the minimum w.p. 1/7, 2/7 and 4/7."""
        rng = _rng(8)
        trials = 100_000
        wins = Counter(
            smallest_rank([draw_rank(p, p + 1, rng) for p in (0, 1, 2)]).owner
            for _ in range(trials)
        )
        for owner, expected in ((1, 1 / 7), (2, 2 / 7), (3, 4 / 7)):
            assert wins[owner] / trials == pytest.approx(expected, abs=0.01)


class TestLifecycle:
    """Test entry and genesis states."""

    def test_on_enter_is_passive(self):
        """Test that entrants start passive with no leader."""
        state = on_enter(5, 3, ProtocolParams(2))
        assert state.status is NodeStatus.PASSIVE
        assert state.leader is None
        assert state.p == 0
        assert state.passive_anchor == 5

    def test_on_enter_at_phase_start(self):
        """Test that entering on a boundary anchors to that boundary."""
        assert on_enter(5, 5, ProtocolParams(2)).passive_anchor == 5

    def test_on_genesis_competes(self):
        """Test that round-1 nodes compete in phase 0."""
        state = on_genesis(1, ProtocolParams(2))
        assert state.status is NodeStatus.ACTIVE
        assert state.election_from == 1

    def test_step_before_entry(self):
        """Test that a node cannot step before it exists."""
        params = ProtocolParams(2)
        with pytest.raises(LifecycleError):
            step(on_enter(5, 3, params), 2, (), _rng(), params)

    def test_beep_from_the_future(self):
        """Test that a beep stamped after the current round is malformed."""
        params = ProtocolParams(2)
        with pytest.raises(MalformedInputError):
            step(on_genesis(1, params), 2, [Beep(4, 3)], _rng(), params)

    def test_state_record(self):
        """Test that states survive their record form."""
        params = ProtocolParams(2)
        state, _ = step(on_genesis(1, params), 1, (), _rng(), params)
        assert NodeState.from_record(state.to_record()) == state


class TestStep:
    """Test single protocol steps."""

    def test_leader_beeps(self):
        """Test that a leader floods a fresh beep and keeps its variable."""
        params = ProtocolParams(3)
        leader = NodeState(
            node_id=4,
            status=NodeStatus.LEADER,
            entry_round=1,
            passive_anchor=1,
            leader=4,
        )
        state, outbound = step(leader, 9, (), _rng(), params)
        assert outbound == Beep(4, 9)
        assert state.leader == 4
        assert state.status is NodeStatus.LEADER

    def test_follower_forwards_newest_beep(self):
        """Test that a follower relays the newest beep it holds."""
        params = ProtocolParams(3)
        state, outbound = step(
            _make_follower(beep_round=2), 4, [Beep(7, 3)], _rng(), params
        )
        assert state.leader == 7
        assert outbound == Beep(7, 3)

    def test_follower_loses_leader(self):
        """Test that a beep older than D rounds clears the leader."""
        params = ProtocolParams(2)
        state, outbound = step(_make_follower(beep_round=1), 4, (), _rng(), params)
        assert state.leader is None
        assert state.status is NodeStatus.ACTIVE
        assert state.election_from == 5
        assert outbound is None

    def test_freshness_boundary_inclusive(self):
        """Test that a beep exactly D rounds old is still fresh."""
        params = ProtocolParams(2)
        state, outbound = step(_make_follower(beep_round=2), 4, (), _rng(), params)
        assert state.leader == 7
        assert outbound == Beep(7, 2)

    def test_passive_adopts_beep(self):
        """Test that an entrant adopts the leader of a fresh beep."""
        params = ProtocolParams(2)
        state, outbound = step(
            on_enter(5, 6, params), 6, [Beep(2, 5)], _rng(), params
        )
        assert state.status is NodeStatus.FOLLOWER
        assert state.leader == 2
        assert outbound == Beep(2, 5)

    def test_stale_beep_ignored(self):
        """Test that an active node ignores a stale beep and keeps competing."""
        params = ProtocolParams(2)
        rng = _rng()
        state, _ = step(on_genesis(1, params), 1, (), rng, params)
        state, outbound = step(state, 5, [Beep(9, 2)], rng, params)
        assert state.status is NodeStatus.ACTIVE
        assert state.leader is None
        assert state.p == 1
        assert outbound == state.my_rank

    def test_passive_waits_a_full_phase(self):
        """Test that an entrant competes only after a full observed phase."""
        params = ProtocolParams(2)
        rng = _rng()
        state = on_enter(5, 5, params)
        for round_ in range(5, 9):
            state, outbound = step(state, round_, (), rng, params)
            assert state.status is NodeStatus.PASSIVE
            assert outbound is None
        state, outbound = step(state, 9, (), rng, params)
        assert state.status is NodeStatus.ACTIVE
        assert state.election_from == 9
        assert state.my_rank is not None
        assert outbound == state.my_rank

    def test_single_node_elects_itself(self):
        """Test that an uncontested node leads after the first half."""
        params = ProtocolParams(1)
        rng = _rng()
        state, outbound = step(on_genesis(1, params), 1, (), rng, params)
        assert outbound == state.my_rank
        state, outbound = step(state, 2, (), rng, params)
        assert state.status is NodeStatus.LEADER
        assert state.leader == 1
        assert outbound == Beep(1, 2)

    def test_smaller_rank_blocks_election(self):
        """Test that hearing a smaller rank forwards it and prevents election."""
        params = ProtocolParams(2)
        rng = _rng()
        smaller = Rank(0, TINY_UNIFORM, 99)
        state, _ = step(on_genesis(1, params), 1, (), rng, params)
        state, outbound = step(state, 2, [smaller], rng, params)
        assert state.best_rank == smaller
        assert outbound == smaller
        state, outbound = step(state, 3, (), rng, params)
        assert state.status is NodeStatus.ACTIVE
        assert state.leader is None
        assert outbound is None

    def test_single_message_per_round(self):
        """Test that step returns at most one message."""
        params = ProtocolParams(2)
        state, outbound = step(
            on_genesis(1, params),
            1,
            [Rank(0, 5, 3), Beep(8, 1), Rank(0, 6, 4)],
            _rng(),
            params,
        )
        assert outbound == Beep(8, 1)
        assert state.leader == 8
