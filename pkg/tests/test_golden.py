"""Bundled scenario metrics must match the committed golden files exactly.

Regenerate after an intended behavior change with::

    HERO_MUX_REGEN_GOLDEN=1 pytest tests/test_golden.py
"""

import os

import pytest

from hero_mux.metrics import compute_metrics
from hero_mux.sim import bundled_scenarios
from tests.conftest import GOLDEN_DIR, scenario_run


@pytest.mark.parametrize("name", bundled_scenarios())
def test_metrics_match_golden(name):
    cfg, tel = scenario_run(name)
    text = compute_metrics(tel).to_json()
    path = GOLDEN_DIR / f"{name}.json"
    if os.environ.get("HERO_MUX_REGEN_GOLDEN"):
        path.write_text(text)
    assert path.read_text() == text
    assert not tel.violations
