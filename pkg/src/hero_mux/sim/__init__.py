"""Scenario simulator: trajectories, synthetic sensors, failure injection and the tick loop."""

from hero_mux.sim.engine import run_scenario
from hero_mux.sim.scenario import ConfigError, ScenarioConfig, bundled_scenarios, load_scenario, parse_scenario

__all__ = ["ConfigError", "ScenarioConfig", "bundled_scenarios", "load_scenario", "parse_scenario", "run_scenario"]
