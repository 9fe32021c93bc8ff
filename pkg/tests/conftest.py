"""Shared fixtures for the dynelect tests."""

from __future__ import annotations

import pytest

from dynelect.engine import run
from dynelect.schedule import build_static_schedule


@pytest.fixture
def static_schedule():
    """Four nodes on a complete graph, D=2, twelve rounds."""
    return build_static_schedule(4, 2, 12, "complete")


@pytest.fixture
def static_trace(static_schedule):
    """A protocol run over the static complete schedule."""
    return run(static_schedule, 3)
