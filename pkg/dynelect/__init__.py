"""Leader election for dynamic networks under adversarial churn."""

from .const import VERSION
from .engine import run, summarize
from .exceptions import DynelectError
from .oracle import check_all
from .protocol import NodeState, NodeStatus, ProtocolParams, step
from .schedule import (
    GraphSnapshot,
    Schedule,
    build_churn_schedule,
    build_lower_bound_schedule,
    build_static_schedule,
    verify_comm_diameter,
)
from .trace import Trace

__version__ = VERSION

__all__ = [
    "DynelectError",
    "GraphSnapshot",
    "NodeState",
    "NodeStatus",
    "ProtocolParams",
    "Schedule",
    "Trace",
    "build_churn_schedule",
    "build_lower_bound_schedule",
    "build_static_schedule",
    "check_all",
    "run",
    "step",
    "summarize",
    "verify_comm_diameter",
]
