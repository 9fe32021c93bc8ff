"""Seeded campaign coordinator."""

from __future__ import annotations

import asyncio
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .config import ExperimentConfig
from .const import (
    DEFAULT_CHURN_RATE,
    DEFAULT_UNIFORM_BITS,
    GENERATOR_CHURN,
    GENERATOR_LOWER_BOUND,
    GENERATOR_STATIC,
    TOPOLOGY_COMPLETE_AT_EPOCH,
)
from .engine import RunStats, run, summarize
from .exceptions import CampaignFailed, ParameterError
from .oracle import Violation, check_all, leaderless_profile
from .schedule import (
    Schedule,
    build_churn_schedule,
    build_lower_bound_schedule,
    build_static_schedule,
)
from .trace import Trace

_LOGGER = logging.getLogger(__name__)


def termination_bound(n: int, diameter: int, coefficient: float) -> int:
    """Return ceil(c * D * ceil(log2 n)), with log2 n at least 1."""
    log_n = max(1, math.ceil(math.log2(n)))
    return math.ceil(coefficient * diameter * log_n)


@dataclass(frozen=True)
class SeedJob:
    """Everything one worker needs to run one seed."""

    seed: int
    n: int
    diameter: int
    generator: str
    churn_rate: float = DEFAULT_CHURN_RATE
    epochs: int = 1
    topology: Optional[str] = None
    horizon: Optional[int] = None
    uniform_bits: int = DEFAULT_UNIFORM_BITS
    checks: bool = True
    bound_rounds: Optional[int] = None
    profile_rows: int = 0
    schedule: Optional[Schedule] = None
    keep_trace: bool = False


@dataclass
class SeedResult:
    """What one seed produced."""

    seed: int
    n: int
    diameter: int
    stats: RunStats
    violations: list[Violation] = field(default_factory=list)
    profile: Optional[list[bool]] = None
    trace: Optional[Trace] = None


def build_schedule(job: SeedJob) -> Schedule:
    """Return the job's schedule, generating it from the job's seed if needed."""
    if job.schedule is not None:
        return job.schedule
    if job.generator == GENERATOR_LOWER_BOUND:
        return build_lower_bound_schedule(job.n, job.diameter, job.epochs, job.seed)
    if job.horizon is None:
        raise ParameterError(f"Generator {job.generator!r} needs a horizon")
    if job.generator == GENERATOR_CHURN:
        return build_churn_schedule(
            job.n,
            job.diameter,
            job.horizon,
            job.churn_rate,
            job.topology or TOPOLOGY_COMPLETE_AT_EPOCH,
            job.seed,
        )
    if job.generator == GENERATOR_STATIC:
        return build_static_schedule(
            job.n, job.diameter, job.horizon, job.topology or "complete"
        )
    raise ParameterError(f"Unknown generator {job.generator!r}")


def run_seed(job: SeedJob) -> SeedResult:
    """Run one seed; module-level so process pools can pickle it."""
    schedule = build_schedule(job)
    trace = run(schedule, job.seed, uniform_bits=job.uniform_bits)
    result = SeedResult(job.seed, job.n, job.diameter, summarize(trace))
    if job.checks:
        result.violations = check_all(trace, job.bound_rounds)
    if job.profile_rows:
        result.profile = leaderless_profile(trace, job.diameter, job.profile_rows)
    if job.keep_trace:
        result.trace = trace
    return result


def jobs_for_config(
    config: ExperimentConfig,
    *,
    horizon_for: Optional[Callable[[int, int, int], int]] = None,
    schedule: Schedule | None = None,
    profile_rows: int = 0,
    with_termination: bool = True,
) -> list[SeedJob]:
    """Expand a config into one job per (cell, seed)."""
    jobs = []
    for n, diameter in config.cells:
        bound = termination_bound(n, diameter, config.bound_coefficient)
        horizon = config.horizon
        if horizon is None and horizon_for is not None:
            horizon = horizon_for(n, diameter, bound)
        for seed in config.seed_list:
            jobs.append(
                SeedJob(
                    seed=seed,
                    n=n,
                    diameter=diameter,
                    generator=config.generator,
                    churn_rate=config.churn_rate,
                    epochs=config.epochs,
                    topology=config.topology,
                    horizon=horizon,
                    uniform_bits=config.uniform_bits,
                    checks=config.checks,
                    bound_rounds=bound if with_termination else None,
                    profile_rows=profile_rows,
                    schedule=schedule,
                )
            )
    return jobs


class CampaignCoordinator:
    """Run seeded jobs inline or on a process pool and collect the results."""

    def __init__(self, jobs: Sequence[SeedJob], workers: int = 1) -> None:
        """Initialize."""
        if workers < 1:
            raise ParameterError(f"workers must be at least 1, got {workers}")
        self.jobs = list(jobs)
        self.workers = workers

    async def _gather(self) -> list[SeedResult | BaseException]:
        """Dispatch every job and return results or exceptions in job order."""
        if self.workers == 1:
            results: list[SeedResult | BaseException] = []
            for job in self.jobs:
                try:
                    results.append(run_seed(job))
                except Exception as err:  # pylint: disable=broad-except
                    results.append(err)
            return results

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            tasks = [loop.run_in_executor(pool, run_seed, job) for job in self.jobs]
            return await asyncio.gather(*tasks, return_exceptions=True)

    async def async_run(self) -> list[SeedResult]:
        """Run the campaign; results are sorted by cell, then seed."""
        _LOGGER.info(
            "Starting campaign of %d runs on %d worker(s)", len(self.jobs), self.workers
        )
        results = await self._gather()

        failures = [
            (job, result)
            for job, result in zip(self.jobs, results)
            if isinstance(result, BaseException)
        ]
        for job, err in failures:
            _LOGGER.error(
                "Seed %d (n=%d, D=%d) failed: %s", job.seed, job.n, job.diameter, err
            )
        if failures:
            first = failures[0][1]
            raise CampaignFailed(f"Error running campaign: {first}") from first

        done = sorted(
            results, key=lambda result: (result.diameter, result.n, result.seed)
        )
        _LOGGER.info(
            "Campaign finished: %d runs, %d violations",
            len(done),
            sum(len(result.violations) for result in done),
        )
        return done

    def run(self) -> list[SeedResult]:
        """Run the campaign to completion from synchronous code."""
        return asyncio.run(self.async_run())
