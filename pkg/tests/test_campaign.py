"""Test the seeded campaign coordinator."""

import pytest

from dynelect.campaign import (
    CampaignCoordinator,
    SeedJob,
    build_schedule,
    jobs_for_config,
    run_seed,
    termination_bound,
)
from dynelect.config import build_config
from dynelect.exceptions import CampaignFailed, ParameterError


def _make_job(seed=1, **kwargs):
    """Create a small static job."""
    values = {
        "seed": seed,
        "n": 4,
        "diameter": 2,
        "generator": "static",
        "horizon": 12,
        "bound_rounds": 8,
    }
    values.update(kwargs)
    return SeedJob(**values)


def _make_config(**kwargs):
    raw = {"generator": "static", "n": [3, 4], "D": [2], "seeds": 3, "horizon": 12}
    raw.update(kwargs)
    return build_config(raw)


def test_termination_bound():
    """Test c * D * ceil(log2 n) with log2 n at least 1."""
    assert termination_bound(16, 3, 14) == 168
    assert termination_bound(5, 2, 1) == 6
    assert termination_bound(1, 2, 1.5) == 3


def test_build_schedule_generators():
    """Test that each generator is dispatched."""
    assert build_schedule(_make_job()).generator == "static"
    churn = build_schedule(_make_job(generator="churn", churn_rate=0.0))
    assert churn.generator == "churn"
    lower = build_schedule(_make_job(generator="lower-bound", epochs=3, horizon=None))
    assert lower.horizon == 6


def test_build_schedule_needs_horizon():
    """Test that churn and static jobs need a horizon."""
    with pytest.raises(ParameterError):
        build_schedule(_make_job(generator="churn", horizon=None))


def test_run_seed():
    """Test one clean static seed."""
    result = run_seed(_make_job())
    assert result.violations == []
    assert result.stats.first_success_phase == 0
    assert result.trace is None
    assert result.profile is None


def test_run_seed_keeps_trace_and_profile():
    """Test the optional trace and leaderless profile."""
    job = _make_job(
        generator="lower-bound", epochs=3, horizon=None, keep_trace=True, profile_rows=2
    )
    result = run_seed(job)
    assert result.trace is not None
    assert len(result.profile) == 3
    assert result.profile[0] is True


def test_jobs_for_config():
    """Test one job per (cell, seed)."""
    jobs = jobs_for_config(_make_config())
    assert [(job.n, job.seed) for job in jobs] == [
        (3, 0),
        (3, 1),
        (3, 2),
        (4, 0),
        (4, 1),
        (4, 2),
    ]
    assert jobs[0].bound_rounds == termination_bound(3, 2, 14)


def test_jobs_for_config_default_horizon():
    """Test that a missing horizon is derived per cell."""
    config = _make_config(horizon=None)
    jobs = jobs_for_config(config, horizon_for=lambda n, d, bound: bound + d)
    assert jobs[0].horizon == termination_bound(3, 2, 14) + 2
    assert jobs_for_config(config, with_termination=False)[0].bound_rounds is None


def test_coordinator_inline():
    """Test an inline campaign sorted by cell then seed."""
    results = CampaignCoordinator(jobs_for_config(_make_config()), workers=1).run()
    assert [(r.n, r.seed) for r in results] == [
        (3, 0),
        (3, 1),
        (3, 2),
        (4, 0),
        (4, 1),
        (4, 2),
    ]
    assert all(result.violations == [] for result in results)


def test_coordinator_process_pool_matches_inline():
    """Test that worker processes give the same results as inline runs."""
    jobs = jobs_for_config(_make_config(seeds=2))
    inline = CampaignCoordinator(jobs, workers=1).run()
    pooled = CampaignCoordinator(jobs, workers=2).run()
    assert [r.stats.termination_time for r in pooled] == [
        r.stats.termination_time for r in inline
    ]
    assert [r.stats.message_counts for r in pooled] == [
        r.stats.message_counts for r in inline
    ]


def test_coordinator_rejects_zero_workers():
    """Test that at least one worker is required."""
    with pytest.raises(ParameterError):
        CampaignCoordinator([], workers=0)


@pytest.mark.asyncio
async def test_async_run_wraps_failures():
    """Test that a failing seed fails the campaign with its cause."""
    jobs = [_make_job(), _make_job(seed=2, generator="churn", horizon=None)]
    coordinator = CampaignCoordinator(jobs)
    with pytest.raises(CampaignFailed, match="Error running campaign") as err:
        await coordinator.async_run()
    assert isinstance(err.value.__cause__, ParameterError)


@pytest.mark.asyncio
async def test_async_run_empty():
    """Test that an empty campaign returns no results."""
    assert await CampaignCoordinator([]).async_run() == []
