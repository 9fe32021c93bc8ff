"""Experiment configuration."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import voluptuous as vol

from .const import (
    DEFAULT_BOUND_COEFFICIENT,
    DEFAULT_CHURN_RATE,
    DEFAULT_EPOCHS,
    DEFAULT_SEED_START,
    DEFAULT_SEEDS,
    DEFAULT_UNIFORM_BITS,
    EPOCH_TOPOLOGIES,
    GENERATOR_CHURN,
    GENERATOR_STATIC,
    GENERATORS,
    STATIC_TOPOLOGIES,
    WORKERS_ENV,
)
from .exceptions import ParameterError

_LOGGER = logging.getLogger(__name__)

CONF_GENERATOR = "generator"
CONF_N = "n"
CONF_D = "D"
CONF_SEEDS = "seeds"
CONF_SEED_START = "seed_start"
CONF_BOUND_COEFFICIENT = "bound_coefficient"
CONF_CHURN_RATE = "churn_rate"
CONF_EPOCHS = "epochs"
CONF_TOPOLOGY = "topology"
CONF_HORIZON = "horizon"
CONF_UNIFORM_BITS = "uniform_bits"
CONF_CHECKS = "checks"
CONF_OUT = "out"
CONF_SCHEDULE = "schedule"
CONF_TRACE_OUT = "trace_out"


def _int_list(value: Any) -> list[int]:
    """Accept one positive int or a list of them."""
    values = value if isinstance(value, (list, tuple)) else [value]
    if not values:
        raise vol.Invalid("expected at least one value")
    return [vol.All(vol.Coerce(int), vol.Range(min=1))(item) for item in values]


EXPERIMENT_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_GENERATOR): vol.In(GENERATORS),
        vol.Optional(CONF_N, default=[16]): _int_list,
        vol.Optional(CONF_D, default=[4]): _int_list,
        vol.Optional(CONF_SEEDS, default=DEFAULT_SEEDS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_SEED_START, default=DEFAULT_SEED_START): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional(
            CONF_BOUND_COEFFICIENT, default=DEFAULT_BOUND_COEFFICIENT
        ): vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False)),
        vol.Optional(CONF_CHURN_RATE, default=DEFAULT_CHURN_RATE): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, max=1.0)
        ),
        vol.Optional(CONF_EPOCHS, default=DEFAULT_EPOCHS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_TOPOLOGY, default=None): vol.Any(
            None, vol.In(STATIC_TOPOLOGIES + EPOCH_TOPOLOGIES)
        ),
        vol.Optional(CONF_HORIZON, default=None): vol.Any(
            None, vol.All(vol.Coerce(int), vol.Range(min=1))
        ),
        vol.Optional(CONF_UNIFORM_BITS, default=DEFAULT_UNIFORM_BITS): vol.All(
            vol.Coerce(int), vol.Range(min=1, max=64)
        ),
        vol.Optional(CONF_CHECKS, default=True): vol.Boolean(),
        vol.Optional(CONF_OUT, default=None): vol.Any(None, str),
        vol.Optional(CONF_SCHEDULE, default=None): vol.Any(None, str),
        vol.Optional(CONF_TRACE_OUT, default=None): vol.Any(None, str),
    }
)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment configuration."""

    generator: str
    n: tuple[int, ...]
    D: tuple[int, ...]
    seeds: int = DEFAULT_SEEDS
    seed_start: int = DEFAULT_SEED_START
    bound_coefficient: float = float(DEFAULT_BOUND_COEFFICIENT)
    churn_rate: float = DEFAULT_CHURN_RATE
    epochs: int = DEFAULT_EPOCHS
    topology: Optional[str] = None
    horizon: Optional[int] = None
    uniform_bits: int = DEFAULT_UNIFORM_BITS
    checks: bool = True
    out: Optional[str] = None
    schedule: Optional[str] = None
    trace_out: Optional[str] = None

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seed_start, self.seed_start + self.seeds))

    @property
    def cells(self) -> list[tuple[int, int]]:
        """Return every (n, D) pair, ordered by D then n."""
        return [(n, d) for d in self.D for n in self.n]

    @property
    def resolved_topology(self) -> str:
        """Return the topology, defaulting per generator."""
        if self.topology is not None:
            return self.topology
        if self.generator == GENERATOR_STATIC:
            return "complete"
        return EPOCH_TOPOLOGIES[0]

    def to_record(self) -> dict[str, Any]:
        record = asdict(self)
        record["n"] = list(self.n)
        record["D"] = list(self.D)
        return record


def build_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate ``raw`` and return an ExperimentConfig."""
    try:
        data = EXPERIMENT_SCHEMA(dict(raw))
    except vol.Invalid as err:
        raise ParameterError(f"Invalid experiment config: {err}") from err

    topology = data[CONF_TOPOLOGY]
    if topology is not None:
        allowed = {
            GENERATOR_STATIC: STATIC_TOPOLOGIES,
            GENERATOR_CHURN: EPOCH_TOPOLOGIES,
        }.get(data[CONF_GENERATOR], ())
        if topology not in allowed:
            raise ParameterError(
                f"Topology {topology!r} does not apply to generator "
                f"{data[CONF_GENERATOR]!r}"
            )

    return ExperimentConfig(
        generator=data[CONF_GENERATOR],
        n=tuple(data[CONF_N]),
        D=tuple(data[CONF_D]),
        seeds=data[CONF_SEEDS],
        seed_start=data[CONF_SEED_START],
        bound_coefficient=data[CONF_BOUND_COEFFICIENT],
        churn_rate=data[CONF_CHURN_RATE],
        epochs=data[CONF_EPOCHS],
        topology=topology,
        horizon=data[CONF_HORIZON],
        uniform_bits=data[CONF_UNIFORM_BITS],
        checks=data[CONF_CHECKS],
        out=data[CONF_OUT],
        schedule=data[CONF_SCHEDULE],
        trace_out=data[CONF_TRACE_OUT],
    )


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a JSON config file into a raw mapping."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ParameterError(f"Config file {path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ParameterError(f"Config file {path} must hold a JSON object")
    return raw


def merge_config(
    file_values: Mapping[str, Any], overrides: Mapping[str, Any]
) -> dict[str, Any]:
    """Overlay explicitly given values on top of file values."""
    merged = dict(file_values)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    return merged


def config_hash(config: ExperimentConfig) -> str:
    """Return the SHA-256 of the canonical JSON of ``config``."""
    canonical = json.dumps(config.to_record(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def worker_count(environ: Mapping[str, str] | None = None) -> int:
    """Return the worker count from the environment; 1 means inline."""
    environ = os.environ if environ is None else environ
    raw = environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        workers = int(raw)
    except ValueError as err:
        raise ParameterError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from err
    if workers < 1:
        raise ParameterError(f"{WORKERS_ENV} must be at least 1, got {workers}")
    return workers
