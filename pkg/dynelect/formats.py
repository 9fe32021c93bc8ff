"""Line-delimited file formats.

Every line is one JSON envelope ``{"type": ..., "data": ...}`` written with
sorted keys and no insignificant whitespace, so serializing a parsed file
reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Type

from .codec import from_hex, to_hex
from .const import (
    RECORD_HEADER,
    RECORD_NODE,
    RECORD_ROUND,
    RECORD_VIOLATION,
    SCHEDULE_FORMAT,
    TRACE_FORMAT,
)
from .engine import deliver
from .exceptions import (
    ConstructionError,
    DynelectError,
    ParameterError,
    ScheduleParseError,
    TraceParseError,
)
from .oracle import Violation
from .protocol import NodeState
from .schedule import GraphSnapshot, Schedule, verify_comm_diameter
from .trace import RoundRecord, Trace

_LOGGER = logging.getLogger(__name__)


def _envelope(record_type: str, data: Any) -> str:
    return json.dumps(
        {"type": record_type, "data": data}, sort_keys=True, separators=(",", ":")
    )


def _records(
    text: str, error: Type[DynelectError]
) -> Iterable[tuple[int, str, dict[str, Any]]]:
    """Yield (line number, type, data) for every non-blank line."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            envelope = json.loads(line)
        except json.JSONDecodeError as err:
            raise error(f"Line {lineno}: invalid JSON: {err}") from err
        if not isinstance(envelope, dict):
            raise error(f"Line {lineno}: expected an object envelope")
        record_type = envelope.get("type")
        data = envelope.get("data")
        if not isinstance(record_type, str) or not isinstance(data, dict):
            raise error(f"Line {lineno}: envelope needs a type and an object payload")
        yield lineno, record_type, data


def dump_schedule(schedule: Schedule) -> str:
    """Serialize a schedule: one header record, then one record per round."""
    lines = [
        _envelope(
            RECORD_HEADER,
            {
                "format": SCHEDULE_FORMAT,
                "n": schedule.n,
                "D": schedule.diameter,
                "horizon": schedule.horizon,
                "generator": schedule.generator,
                "seed": schedule.seed,
                "certification": schedule.certification,
                "params": schedule.params,
            },
        )
    ]
    for snapshot in schedule.snapshots:
        lines.append(
            _envelope(
                RECORD_ROUND,
                {
                    "round": snapshot.round,
                    "vertices": sorted(snapshot.vertices),
                    "edges": [list(edge) for edge in sorted(snapshot.edges)],
                    "complete": snapshot.complete,
                },
            )
        )
    return "\n".join(lines) + "\n"


def load_schedule(text: str) -> Schedule:
    """Parse ``dump_schedule`` output.

    A certification claimed by the header is re-checked; a claim the
    schedule fails is dropped, so ``run`` refuses it.
    """
    header = None
    snapshots = []
    for lineno, record_type, data in _records(text, ScheduleParseError):
        if record_type == RECORD_HEADER:
            if header is not None:
                raise ScheduleParseError(f"Line {lineno}: duplicate header")
            if data.get("format") != SCHEDULE_FORMAT:
                raise ScheduleParseError(
                    f"Line {lineno}: unsupported format {data.get('format')!r}"
                )
            header = data
        elif record_type == RECORD_ROUND:
            if header is None:
                raise ScheduleParseError(f"Line {lineno}: round before header")
            try:
                snapshots.append(
                    GraphSnapshot(
                        round=int(data["round"]),
                        vertices=frozenset(int(v) for v in data["vertices"]),
                        edges=frozenset(
                            (int(u), int(v)) for u, v in data.get("edges", [])
                        ),
                        complete=bool(data.get("complete", False)),
                    )
                )
            except (KeyError, TypeError, ValueError, ConstructionError) as err:
                raise ScheduleParseError(
                    f"Line {lineno}: bad round record: {err}"
                ) from err
        else:
            raise ScheduleParseError(
                f"Line {lineno}: unexpected record {record_type!r}"
            )

    if header is None:
        raise ScheduleParseError("Schedule file has no header")
    try:
        horizon = int(header["horizon"])
        schedule = Schedule.from_snapshots(
            int(header["n"]),
            int(header["D"]),
            snapshots,
            generator=header.get("generator"),
            seed=header.get("seed"),
            params=header.get("params") or {},
            certification=header.get("certification"),
        )
    except (KeyError, TypeError, ValueError, ConstructionError, ParameterError) as err:
        raise ScheduleParseError(f"Invalid schedule: {err}") from err
    if schedule.horizon != horizon:
        raise ScheduleParseError(
            f"Header declares {horizon} rounds, file has {schedule.horizon}"
        )
    if schedule.certification is not None:
        counterexample = verify_comm_diameter(schedule)
        if counterexample is not None:
            _LOGGER.warning(
                "Schedule claims %s certification but fails the D-guarantee: %s",
                schedule.certification,
                counterexample,
            )
            return schedule.with_certification(None)
    return schedule


def write_schedule(schedule: Schedule, path: str | Path) -> Path:
    """Write a schedule file and return its path."""
    path = Path(path)
    path.write_text(dump_schedule(schedule), encoding="utf-8")
    _LOGGER.info("Wrote %d-round schedule to %s", schedule.horizon, path)
    return path


def read_schedule(path: str | Path) -> Schedule:
    """Read a schedule file."""
    return load_schedule(Path(path).read_text(encoding="utf-8"))


def dump_trace(trace: Trace) -> str:
    """Serialize a trace: a header, then one record per (round, node)."""
    lines = [
        _envelope(
            RECORD_HEADER,
            {
                "format": TRACE_FORMAT,
                "D": trace.diameter,
                "horizon": trace.horizon,
                "master_seed": trace.master_seed,
                "uniform_bits": trace.uniform_bits,
            },
        )
    ]
    for record in trace.rounds:
        for node in record.alive:
            lines.append(
                _envelope(
                    RECORD_NODE,
                    {
                        "round": record.round,
                        "state": record.states[node].to_record(),
                        "out": to_hex(record.outbound[node]),
                    },
                )
            )
    return "\n".join(lines) + "\n"


def load_trace(text: str, schedule: Schedule) -> Trace:
    """Parse ``dump_trace`` output; inboxes are re-derived from the schedule."""
    header = None
    per_round: dict[int, dict[int, tuple[NodeState, Any]]] = {}
    for lineno, record_type, data in _records(text, TraceParseError):
        if record_type == RECORD_HEADER:
            if data.get("format") != TRACE_FORMAT:
                raise TraceParseError(
                    f"Line {lineno}: unsupported format {data.get('format')!r}"
                )
            header = data
        elif record_type == RECORD_NODE:
            if header is None:
                raise TraceParseError(f"Line {lineno}: node record before header")
            try:
                round_ = int(data["round"])
                state = NodeState.from_record(data["state"])
                message = from_hex(data.get("out"), int(header["uniform_bits"]))
            except (KeyError, TypeError, ValueError, ParameterError) as err:
                raise TraceParseError(f"Line {lineno}: bad node record: {err}") from err
            per_round.setdefault(round_, {})[state.node_id] = (state, message)
        else:
            raise TraceParseError(f"Line {lineno}: unexpected record {record_type!r}")

    if header is None:
        raise TraceParseError("Trace file has no header")
    if (
        int(header["horizon"]) != schedule.horizon
        or int(header["D"]) != schedule.diameter
    ):
        raise TraceParseError("Trace header does not match the schedule")

    trace = Trace(schedule, int(header["master_seed"]), int(header["uniform_bits"]))
    previous = None
    outbound: dict[int, Any] = {}
    for round_ in range(1, schedule.horizon + 1):
        snapshot = schedule.snapshot_at(round_)
        entries = per_round.get(round_, {})
        if set(entries) != set(snapshot.vertices):
            raise TraceParseError(
                f"Round {round_}: trace nodes differ from the schedule's vertices"
            )
        inboxes = deliver(previous, outbound) if previous is not None else {}
        outbound = {node: entries[node][1] for node in sorted(entries)}
        trace.rounds.append(
            RoundRecord(
                round=round_,
                alive=tuple(sorted(entries)),
                states={node: entries[node][0] for node in sorted(entries)},
                outbound=outbound,
                inbox={node: inboxes.get(node, ()) for node in sorted(entries)},
            )
        )
        previous = snapshot
    return trace


def write_trace(trace: Trace, path: str | Path) -> Path:
    """Write a trace file and return its path."""
    path = Path(path)
    path.write_text(dump_trace(trace), encoding="utf-8")
    _LOGGER.info("Wrote trace for seed %d to %s", trace.master_seed, path)
    return path


def read_trace(path: str | Path, schedule: Schedule) -> Trace:
    """Read a trace file recorded over ``schedule``."""
    return load_trace(Path(path).read_text(encoding="utf-8"), schedule)


def dump_violations(entries: Iterable[tuple[int | None, Violation]]) -> str:
    """Serialize (seed, violation) pairs as violation records."""
    lines = []
    for seed, violation in entries:
        data = violation.to_record()
        data["seed"] = seed
        lines.append(_envelope(RECORD_VIOLATION, data))
    return "".join(line + "\n" for line in lines)


def load_violations(text: str) -> list[tuple[int | None, Violation]]:
    """Parse ``dump_violations`` output."""
    entries = []
    for lineno, record_type, data in _records(text, TraceParseError):
        if record_type != RECORD_VIOLATION:
            raise TraceParseError(f"Line {lineno}: unexpected record {record_type!r}")
        try:
            entries.append((data.get("seed"), Violation.from_record(data)))
        except (KeyError, TypeError, ValueError) as err:
            raise TraceParseError(f"Line {lineno}: bad violation: {err}") from err
    return entries


def write_stats_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Mapping[str, Any]],
    config_hash: str,
) -> Path:
    """Write a statistics table with a trailing ``config_hash`` column."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=[*columns, "config_hash"])
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "config_hash": config_hash})
    _LOGGER.info("Wrote statistics to %s", path)
    return path


def sidecar_path(path: str | Path) -> Path:
    """Return the JSON sidecar path next to a statistics file."""
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(
    path: str | Path, config: Mapping[str, Any], config_hash: str
) -> Path:
    """Write the full config and its hash next to a statistics file."""
    target = sidecar_path(path)
    target.write_text(
        json.dumps(
            {"config": dict(config), "config_hash": config_hash},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return target
