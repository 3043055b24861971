import json

import pytest

from hero_mux.sim import ConfigError, bundled_scenarios, load_scenario, parse_scenario
from hero_mux.sim.engine import run_scenario
from hero_mux.streams import StreamState

BASE = {
    "name": "t", "seed": 1, "duration": 2.0,
    "trajectory": {"kind": "hover"},
    "streams": [{"id": "a", "kind": "pose", "rate": 20}],
    "ranking": ["a"],
}


def _with(**changes):
    return json.loads(json.dumps({**BASE, **changes}))


def test_bundled_scenarios_validate():
    names = bundled_scenarios()
    assert {"hover", "fig7_reinit", "fig8_dual_vio", "all_fail_land", "dust_tunnel"} <= set(names)
    for name in names:
        cfg = load_scenario(name)
        assert cfg.name == name


def test_seed_override_and_defaults():
    cfg = parse_scenario(_with(), seed=99)
    assert cfg.seed == 99 and cfg.tick_rate == 100 and cfg.n_ticks == 201
    assert cfg.checks["a"].nominal_rate == 20


@pytest.mark.parametrize("data, path", [
    (_with(streams=[{"id": "a", "kind": "pose", "rate": -1}]), "$.streams[0].rate"),
    (_with(streams=[{"id": "a", "kind": "bogus", "rate": 20}]), "$.streams[0].kind"),
    (_with(ranking=["a", "b"]), "$.ranking"),
    (_with(ranking=[]), "$.ranking"),
    (_with(streams=[{"id": "a", "kind": "pose", "rate": 30}]), "$.streams[0].rate"),
    (_with(failures=[{"stream": "zz", "t_start": 0.5, "t_end": 1.0, "mode": "gap"}]), "$.failures[0].stream"),
    (_with(failures=[{"stream": "a", "t_start": 1.5, "t_end": 1.0, "mode": "gap"}]), "$.failures[0]"),
    (_with(unknown=1), "$"),
    ({k: v for k, v in BASE.items() if k != "seed"}, "$"),
])
def test_config_errors_carry_field_path(data, path):
    with pytest.raises(ConfigError) as err:
        parse_scenario(data)
    assert str(err.value).startswith(path)


def test_trajectory_faster_than_platform_rejected():
    data = _with(trajectory={"kind": "line", "speed": 5.0})
    with pytest.raises(ConfigError, match="trajectory"):
        parse_scenario(data)


def test_gap_withholds_all_messages():
    cfg = parse_scenario(_with(duration=3.0, failures=[
        {"stream": "a", "t_start": 1.0, "t_end": 1.5, "mode": "gap"}]))
    tel = run_scenario(cfg)
    for row in tel.rows:
        if 1.0 <= row["stamp"] < 1.5:
            assert row["a_raw_px"] is None


def test_reinitializing_stream_emits_nothing():
    cfg = parse_scenario(_with(duration=6.0, failures=[
        {"stream": "a", "t_start": 1.0, "t_end": 1.5, "mode": "gap"}]))
    tel = run_scenario(cfg)
    for row in tel.rows:
        if row["a_state"] == StreamState.REINITIALIZING.value:
            assert row["a_raw_px"] is None
    assert len(tel.events_of("reinit_command")) == 1
    assert tel.rows[-1]["a_epoch"] == 1
