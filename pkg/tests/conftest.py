from __future__ import annotations

import numpy as np
import pytest

from gpuenergy.telemetry import DeviceId, SampleSeries


def make_series(
    start_ms: int = 0,
    end_ms: int = 60_000,
    power: float = 100.0,
    step_ms: int = 100,
    cap: float = 250.0,
    device: DeviceId = DeviceId(),
) -> SampleSeries:
    """Constant-power series with samples at start, start+step, ..., end (inclusive)."""
    ts = np.arange(start_ms, end_ms + 1, step_ms, dtype=np.int64)
    return SampleSeries(device, ts, np.full(ts.size, power), cap)


@pytest.fixture
def constant_series():
    return make_series


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
