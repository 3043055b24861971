from pathlib import Path

import numpy as np
import pytest

from hero_mux.geometry import Pose, UnitRotation
from hero_mux.sim import load_scenario, run_scenario

SCENARIO_DIR = Path(__file__).parent / "scenarios"
GOLDEN_DIR = Path(__file__).parent / "golden"

_runs = {}


def scenario_run(ref):
    """Run a scenario once per test session and share the telemetry."""
    key = str(ref)
    if key not in _runs:
        cfg = load_scenario(ref)
        _runs[key] = (cfg, run_scenario(cfg))
    return _runs[key]


def random_pose(rng, scale=10.0):
    return Pose(rng.uniform(-scale, scale, 3), UnitRotation(rng.normal(size=4)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
