"""Statistic columns for the scaling and lower-bound tables."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import groupby
from typing import Any, Optional, Sequence

import numpy as np

from .campaign import SeedResult
from .oracle import ViolationKind

_LOGGER = logging.getLogger(__name__)


@dataclass
class ScalingCell:
    """All runs of one (n, D) cell."""

    n: int
    diameter: int
    results: list[SeedResult]

    @cached_property
    def termination_times(self) -> np.ndarray:
        return np.array(
            [result.stats.termination_time for result in self.results], dtype=float
        )

    @cached_property
    def phases_to_success(self) -> np.ndarray:
        return np.array(
            [
                result.stats.phases_to_success
                for result in self.results
                if result.stats.phases_to_success is not None
            ],
            dtype=float,
        )


class StatisticColumn:
    """Base class for table columns."""

    column_key: str = ""

    def value(self, cell: Any) -> Any:
        """Return the column value for ``cell``, or None without data."""
        value = self._extract_value(cell)
        if value is None:
            _LOGGER.debug("No data for column %s", self.column_key)
        return value

    def _extract_value(self, cell: Any) -> Any:
        """Extract value from the cell - to be implemented by subclasses."""
        raise NotImplementedError


class NodeCountColumn(StatisticColumn):
    column_key = "n"

    def _extract_value(self, cell: ScalingCell) -> int:
        return cell.n


class DiameterColumn(StatisticColumn):
    column_key = "D"

    def _extract_value(self, cell: ScalingCell) -> int:
        return cell.diameter


class SeedCountColumn(StatisticColumn):
    column_key = "seeds"

    def _extract_value(self, cell: ScalingCell) -> int:
        return len(cell.results)


class P99TerminationColumn(StatisticColumn):
    """99th percentile of the per-run termination time, in rounds."""

    column_key = "p99_termination"

    def _extract_value(self, cell: ScalingCell) -> Optional[float]:
        if not cell.termination_times.size:
            return None
        return float(np.percentile(cell.termination_times, 99, method="higher"))


class MeanPhasesColumn(StatisticColumn):
    """Mean number of phases up to the first successful one."""

    column_key = "mean_phases_to_success"

    def _extract_value(self, cell: ScalingCell) -> Optional[float]:
        if not cell.phases_to_success.size:
            return None
        return round(float(cell.phases_to_success.mean()), 6)


class FittedRatioColumn(StatisticColumn):
    """p99 termination divided by D * log2 n."""

    column_key = "ratio_p99_to_d_log_n"

    def _extract_value(self, cell: ScalingCell) -> Optional[float]:
        p99 = P99TerminationColumn().value(cell)
        if p99 is None:
            return None
        return round(p99 / (cell.diameter * max(1.0, math.log2(cell.n))), 6)


class TerminationPassColumn(StatisticColumn):
    """Fraction of runs without a termination violation."""

    column_key = "termination_pass_rate"

    def _extract_value(self, cell: ScalingCell) -> Optional[float]:
        if not cell.results:
            return None
        passed = sum(
            not any(v.kind is ViolationKind.TERMINATION for v in result.violations)
            for result in cell.results
        )
        return round(passed / len(cell.results), 6)


class SafetyViolationColumn(StatisticColumn):
    """Violations other than termination, summed over the cell."""

    column_key = "safety_violations"

    def _extract_value(self, cell: ScalingCell) -> int:
        return sum(
            1
            for result in cell.results
            for violation in result.violations
            if violation.kind is not ViolationKind.TERMINATION
        )


SCALING_COLUMNS: tuple[StatisticColumn, ...] = (
    NodeCountColumn(),
    DiameterColumn(),
    SeedCountColumn(),
    P99TerminationColumn(),
    MeanPhasesColumn(),
    FittedRatioColumn(),
    TerminationPassColumn(),
    SafetyViolationColumn(),
)


def scaling_cells(results: Sequence[SeedResult]) -> list[ScalingCell]:
    """Group results into cells ordered by D, then n."""

    def key(result: SeedResult) -> tuple[int, int]:
        return (result.diameter, result.n)

    return [
        ScalingCell(n, diameter, list(group))
        for (diameter, n), group in groupby(sorted(results, key=key), key=key)
    ]


def scaling_rows(results: Sequence[SeedResult]) -> list[dict[str, Any]]:
    """Return one table row per (n, D) cell."""
    return [
        {column.column_key: column.value(cell) for column in SCALING_COLUMNS}
        for cell in scaling_cells(results)
    ]


@dataclass(frozen=True)
class CurvePoint:
    """One row of the lower-bound table."""

    i: int
    empirical: float
    runs: int


class RowIndexColumn(StatisticColumn):
    column_key = "i"

    def _extract_value(self, cell: CurvePoint) -> int:
        return cell.i


class EmpiricalColumn(StatisticColumn):
    """Fraction of runs with a leaderless survivor at round iD."""

    column_key = "empirical"

    def _extract_value(self, cell: CurvePoint) -> float:
        return round(cell.empirical, 6)


class AnalyticalBoundColumn(StatisticColumn):
    """The adversary's guarantee 2^-(2i+1)."""

    column_key = "bound"

    def _extract_value(self, cell: CurvePoint) -> float:
        return math.ldexp(1.0, -(2 * cell.i + 1))


class StandardErrorColumn(StatisticColumn):
    """Binomial standard error of the empirical column."""

    column_key = "stderr"

    def _extract_value(self, cell: CurvePoint) -> Optional[float]:
        if cell.runs < 1:
            return None
        p = cell.empirical
        return round(math.sqrt(p * (1.0 - p) / cell.runs), 6)


LOWER_BOUND_COLUMNS: tuple[StatisticColumn, ...] = (
    RowIndexColumn(),
    EmpiricalColumn(),
    AnalyticalBoundColumn(),
    StandardErrorColumn(),
)


def lower_bound_rows(curve: Sequence[float], runs: int) -> list[dict[str, Any]]:
    """Return one table row per i of a lower-bound curve."""
    return [
        {
            column.column_key: column.value(CurvePoint(i, value, runs))
            for column in LOWER_BOUND_COLUMNS
        }
        for i, value in enumerate(curve)
    ]


def column_keys(columns: Sequence[StatisticColumn]) -> list[str]:
    return [column.column_key for column in columns]
