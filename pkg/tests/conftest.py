"""Test configuration: importable helpers and common fixtures."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from builders import make_scenario, straight_map, straight_states, track  # noqa: E402


@pytest.fixture
def free_road():
    ego = track(straight_states(0.0, 0.0, 10.0, 91))
    return make_scenario([ego], straight_map(edge_ys=(-5.0, 5.0)), goal=(100.0, 0.0))


CRITERIA: dict[int, str] = {}


@pytest.fixture
def record_criterion():
    """Stores one verdict line per acceptance criterion for the end-of-run summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        CRITERIA[number] = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        print(CRITERIA[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
