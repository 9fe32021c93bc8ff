"""Command line entry point: generate, run, scaling, lowerbound, verify."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .campaign import (
    CampaignCoordinator,
    SeedJob,
    SeedResult,
    build_schedule,
    jobs_for_config,
    termination_bound,
)
from .config import (
    ExperimentConfig,
    build_config,
    config_hash,
    load_config_file,
    merge_config,
    worker_count,
)
from .const import (
    DEFAULT_LOWER_BOUND_ROWS,
    EPOCH_TOPOLOGIES,
    EXIT_IO,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_USAGE,
    EXIT_VALIDATION,
    EXIT_VIOLATION,
    GENERATOR_CHURN,
    GENERATOR_LOWER_BOUND,
    GENERATOR_STATIC,
    GENERATORS,
    MIN_SCALING_D_VALUES,
    MIN_SCALING_N_VALUES,
    MIN_SCALING_SEEDS,
    SCHEDULE_SUFFIX,
    STATIC_TOPOLOGIES,
    VERSION,
)
from .engine import PhaseOutcome
from .exceptions import (
    CampaignFailed,
    ConstructionError,
    DynelectError,
    LifecycleError,
    MalformedInputError,
    ParameterError,
    RankTieError,
    RoundRangeError,
    ScheduleParseError,
    ScheduleRefusedError,
    TraceParseError,
)
from .formats import (
    dump_violations,
    read_schedule,
    read_trace,
    write_schedule,
    write_sidecar,
    write_stats_csv,
    write_trace,
)
from .oracle import Violation, ViolationKind, check_all, curve_from_profiles
from .report import (
    LOWER_BOUND_COLUMNS,
    SCALING_COLUMNS,
    column_keys,
    lower_bound_rows,
    scaling_rows,
)
from .schedule import Schedule, verify_comm_diameter

_LOGGER = logging.getLogger(__name__)

RUN_COLUMNS = [
    "seed",
    "termination_time",
    "max_termination",
    "first_success_phase",
    "successful_phases",
    "failed_phases",
    "rank_messages",
    "beep_messages",
    "violations",
]

_EXIT_CODES: tuple[tuple[type[BaseException], int], ...] = (
    (ScheduleParseError, EXIT_PARSE),
    (TraceParseError, EXIT_PARSE),
    (ParameterError, EXIT_VALIDATION),
    (ConstructionError, EXIT_VALIDATION),
    (ScheduleRefusedError, EXIT_VALIDATION),
    (RoundRangeError, EXIT_VALIDATION),
    (MalformedInputError, EXIT_VALIDATION),
    (LifecycleError, EXIT_VALIDATION),
    (RankTieError, EXIT_VALIDATION),
    (OSError, EXIT_IO),
)


def exit_code_for(err: BaseException) -> int:
    """Map an exception to its documented exit code."""
    if isinstance(err, CampaignFailed) and err.__cause__ is not None:
        return exit_code_for(err.__cause__)
    for error_type, code in _EXIT_CODES:
        if isinstance(err, error_type):
            return code
    return EXIT_VALIDATION


def default_horizon(n: int, diameter: int, bound: int) -> int:
    """Return the run length used when none is configured: bound + 4D."""
    return bound + 4 * diameter


def _run_campaign(jobs: Sequence[SeedJob]) -> list[SeedResult]:
    return CampaignCoordinator(jobs, worker_count()).run()


def _safety_violations(results: Sequence[SeedResult]) -> list[tuple[int, Violation]]:
    return [
        (result.seed, violation)
        for result in results
        for violation in result.violations
        if violation.kind is not ViolationKind.TERMINATION
    ]


def _write_violations(out: Path, entries: Sequence[tuple[int, Violation]]) -> Path:
    target = out.with_name(out.name + ".violations.jsonl")
    target.write_text(dump_violations(entries), encoding="utf-8")
    _LOGGER.info("Wrote %d violation records to %s", len(entries), target)
    return target


def schedule_file_name(job: SeedJob) -> str:
    stem = f"schedule-{job.generator}-n{job.n}-D{job.diameter}-seed{job.seed}"
    return stem + SCHEDULE_SUFFIX


def _schedule_paths(config: ExperimentConfig) -> list[tuple[SeedJob, Path]]:
    out = Path(config.out or ".")
    jobs = jobs_for_config(config, horizon_for=default_horizon, with_termination=False)
    if len(jobs) == 1 and out.suffix:
        return [(jobs[0], out)]
    if out.suffix == SCHEDULE_SUFFIX:
        raise ParameterError(
            f"{len(jobs)} schedules cannot share the file {out}; "
            "pass a directory or a single seed"
        )
    out.mkdir(parents=True, exist_ok=True)
    return [(job, out / schedule_file_name(job)) for job in jobs]


def cmd_generate(config: ExperimentConfig) -> list[Path]:
    """Write one schedule file per (cell, seed)."""
    written = []
    for job, path in _schedule_paths(config):
        schedule = build_schedule(job)
        if schedule.certification is None:
            counterexample = verify_comm_diameter(schedule)
            if counterexample is not None:
                raise ConstructionError(
                    f"Generated schedule fails the D-guarantee: {counterexample}"
                )
        written.append(write_schedule(schedule, path))
    return written


def cmd_run(config: ExperimentConfig, schedule: Schedule | None = None) -> int:
    """Run every seed over one schedule file and write per-seed statistics."""
    if schedule is None:
        if config.schedule is None:
            raise ParameterError("run needs --schedule")
        schedule = read_schedule(config.schedule)
    bound = termination_bound(schedule.n, schedule.diameter, config.bound_coefficient)
    jobs = [
        SeedJob(
            seed=seed,
            n=schedule.n,
            diameter=schedule.diameter,
            generator=schedule.generator or GENERATOR_STATIC,
            uniform_bits=config.uniform_bits,
            checks=config.checks,
            bound_rounds=bound,
            schedule=schedule,
            keep_trace=config.trace_out is not None,
        )
        for seed in config.seed_list
    ]
    results = _run_campaign(jobs)

    if config.trace_out is not None:
        trace_dir = Path(config.trace_out)
        trace_dir.mkdir(parents=True, exist_ok=True)
        for result in results:
            write_trace(result.trace, trace_dir / f"trace-seed{result.seed}.jsonl")

    rows = []
    for result in results:
        stats = result.stats
        outcomes = [phase.outcome for phase in stats.phases]
        rows.append(
            {
                "seed": result.seed,
                "termination_time": stats.termination_time,
                "max_termination": stats.max_termination,
                "first_success_phase": stats.first_success_phase,
                "successful_phases": outcomes.count(PhaseOutcome.SUCCESSFUL),
                "failed_phases": outcomes.count(PhaseOutcome.FAILED),
                "rank_messages": stats.message_counts["rank"],
                "beep_messages": stats.message_counts["beep"],
                "violations": len(result.violations),
            }
        )

    violations = [
        (result.seed, violation)
        for result in results
        for violation in result.violations
    ]
    if config.out is not None:
        out = Path(config.out)
        digest = config_hash(config)
        write_stats_csv(out, RUN_COLUMNS, rows, digest)
        write_sidecar(out, config.to_record(), digest)
        if violations:
            _write_violations(out, violations)

    for seed, violation in violations:
        print(
            f"seed {seed}: {violation.kind.value} at round {violation.round}: "
            f"{violation.evidence}"
        )
    print(f"{len(results)} runs, {len(violations)} violations")
    if config.checks and violations:
        return EXIT_VIOLATION
    return EXIT_OK


def check_scaling_config(config: ExperimentConfig) -> None:
    """Refuse scaling campaigns too small to say anything."""
    if config.seeds < MIN_SCALING_SEEDS:
        raise ParameterError(
            f"Scaling needs at least {MIN_SCALING_SEEDS} seeds per cell, "
            f"got {config.seeds}"
        )
    if len(set(config.n)) < MIN_SCALING_N_VALUES:
        raise ParameterError(
            f"Scaling needs at least {MIN_SCALING_N_VALUES} values of n"
        )
    if len(set(config.D)) < MIN_SCALING_D_VALUES:
        raise ParameterError(
            f"Scaling needs at least {MIN_SCALING_D_VALUES} values of D"
        )


def scaling_table(config: ExperimentConfig) -> tuple[list[dict[str, Any]], int]:
    """Run a scaling campaign; return its rows and the safety violation count."""
    if config.generator == GENERATOR_LOWER_BOUND:
        raise ParameterError("Scaling runs on churn or static schedules")
    results = _run_campaign(jobs_for_config(config, horizon_for=default_horizon))
    return scaling_rows(results), len(_safety_violations(results))


def cmd_scaling(config: ExperimentConfig) -> int:
    """Run the termination scaling experiment and write its table."""
    check_scaling_config(config)
    rows, safety = scaling_table(config)
    _emit_table(config, column_keys(SCALING_COLUMNS), rows)
    return EXIT_VIOLATION if config.checks and safety else EXIT_OK


def lower_bound_table(config: ExperimentConfig, rows: int) -> list[dict[str, Any]]:
    """Run the lower-bound adversary and return one row per (cell, i)."""
    if config.generator != GENERATOR_LOWER_BOUND:
        raise ParameterError("lowerbound needs the lower-bound generator")
    if config.epochs < rows:
        raise ParameterError(
            f"{rows} curve rows need at least {rows} epochs, got {config.epochs}"
        )
    results = _run_campaign(
        jobs_for_config(config, profile_rows=rows, with_termination=False)
    )
    table = []
    for n, diameter in config.cells:
        profiles = [
            result.profile
            for result in results
            if result.n == n and result.diameter == diameter
        ]
        curve = curve_from_profiles(profiles)
        for row in lower_bound_rows(curve, len(profiles)):
            table.append({"n": n, "D": diameter, **row})
    return table


def cmd_lowerbound(
    config: ExperimentConfig, rows: int = DEFAULT_LOWER_BOUND_ROWS
) -> int:
    """Estimate the lower-bound curve next to its analytical bound."""
    table = lower_bound_table(config, rows)
    _emit_table(config, ["n", "D", *column_keys(LOWER_BOUND_COLUMNS)], table)
    return EXIT_OK


def cmd_verify(
    schedule_path: str | Path,
    trace_path: str | Path | None = None,
    bound_coefficient: float | None = None,
) -> int:
    """Check a schedule file, and optionally re-check a trace recorded on it."""
    schedule = read_schedule(schedule_path)
    counterexample = verify_comm_diameter(schedule)
    if counterexample is not None:
        print(f"D-guarantee violated: {counterexample}")
        return EXIT_VIOLATION
    print(
        f"schedule ok: n={schedule.n} D={schedule.diameter} "
        f"horizon={schedule.horizon}"
    )
    if trace_path is None:
        return EXIT_OK

    trace = read_trace(trace_path, schedule)
    bound = None
    if bound_coefficient is not None:
        bound = termination_bound(schedule.n, schedule.diameter, bound_coefficient)
    violations = check_all(trace, bound)
    for violation in violations:
        print(
            f"{violation.kind.value} at round {violation.round}: "
            f"{violation.evidence}"
        )
    print(f"trace seed {trace.master_seed}: {len(violations)} violations")
    return EXIT_VIOLATION if violations else EXIT_OK


def _emit_table(
    config: ExperimentConfig, columns: list[str], rows: list[dict[str, Any]]
) -> None:
    if config.out is not None:
        digest = config_hash(config)
        write_stats_csv(config.out, columns, rows, digest)
        write_sidecar(config.out, config.to_record(), digest)
    print(",".join(columns))
    for row in rows:
        print(",".join("" if row[key] is None else str(row[key]) for key in columns))


def _add_campaign_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--n", type=int, nargs="+", help="node counts")
    parser.add_argument("--d", type=int, nargs="+", dest="D", help="diameters D")
    parser.add_argument("--seeds", type=int, help="number of seeds per cell")
    parser.add_argument(
        "--seed-start", "--seed", type=int, dest="seed_start", help="first seed"
    )
    parser.add_argument("--epochs", type=int, help="lower-bound epochs")
    parser.add_argument("--churn", type=float, dest="churn_rate", help="churn rate")
    parser.add_argument(
        "--topology",
        choices=STATIC_TOPOLOGIES + EPOCH_TOPOLOGIES,
        help="static or epoch topology",
    )
    parser.add_argument("--horizon", type=int, help="rounds per run")
    parser.add_argument(
        "--bound-coefficient",
        type=float,
        dest="bound_coefficient",
        help="c in the termination bound c * D * ceil(log2 n)",
    )
    parser.add_argument("--uniform-bits", type=int, dest="uniform_bits")
    parser.add_argument(
        "--checks", choices=("on", "off"), help="run the trace oracle"
    )
    parser.add_argument("--out", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser."""
    parser = argparse.ArgumentParser(
        prog="dynelect",
        description="Leader election under adversarial churn: schedules, runs "
        "and trace checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="enable debug logging"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="write schedule files")
    generate.add_argument("--generator", choices=GENERATORS)
    _add_campaign_flags(generate)

    run = commands.add_parser("run", help="run seeds over a schedule file")
    run.add_argument("--schedule", required=True)
    run.add_argument("--trace-out", dest="trace_out", help="directory for traces")
    _add_campaign_flags(run)

    scaling = commands.add_parser("scaling", help="termination scaling table")
    scaling.add_argument("--generator", choices=(GENERATOR_CHURN, GENERATOR_STATIC))
    _add_campaign_flags(scaling)

    lowerbound = commands.add_parser("lowerbound", help="lower-bound curve table")
    lowerbound.add_argument(
        "--rows", type=int, default=DEFAULT_LOWER_BOUND_ROWS, help="largest i"
    )
    _add_campaign_flags(lowerbound)

    verify = commands.add_parser("verify", help="check a schedule and a trace")
    verify.add_argument("--schedule", required=True)
    verify.add_argument("--trace")
    verify.add_argument("--bound-coefficient", type=float, dest="bound_coefficient")
    return parser


_CONFIG_FLAGS = (
    "n",
    "D",
    "seeds",
    "seed_start",
    "epochs",
    "churn_rate",
    "topology",
    "horizon",
    "bound_coefficient",
    "uniform_bits",
    "out",
    "schedule",
    "trace_out",
)


def config_from_args(
    args: argparse.Namespace,
    generator: Optional[str] = None,
    defaults: Optional[dict[str, Any]] = None,
) -> ExperimentConfig:
    """Merge ``--config`` with the explicit flags and validate the result.

    ``defaults`` sit below the config file, which sits below the flags.
    """
    file_values = dict(defaults or {})
    if args.config:
        file_values.update(load_config_file(args.config))
    overrides = {key: getattr(args, key, None) for key in _CONFIG_FLAGS}
    overrides["generator"] = getattr(args, "generator", None) or generator
    if getattr(args, "checks", None) is not None:
        overrides["checks"] = args.checks == "on"
    return build_config(merge_config(file_values, overrides))


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "verify":
        return cmd_verify(args.schedule, args.trace, args.bound_coefficient)
    if args.command == "generate":
        config = config_from_args(args, defaults={"seeds": 1})
        for path in cmd_generate(config):
            print(path)
        return EXIT_OK
    if args.command == "run":
        schedule = read_schedule(args.schedule)
        config = config_from_args(args, schedule.generator or GENERATOR_STATIC)
        return cmd_run(config, schedule)
    if args.command == "scaling":
        return cmd_scaling(config_from_args(args, GENERATOR_CHURN))
    return cmd_lowerbound(config_from_args(args, GENERATOR_LOWER_BOUND), args.rows)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code in (0, None) else EXIT_USAGE

    logging.basicConfig(
        level=logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger("dynelect").setLevel(
        logging.DEBUG if args.verbose else logging.INFO
    )

    try:
        return _dispatch(args)
    except (DynelectError, OSError) as err:
        code = exit_code_for(err)
        _LOGGER.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return code
