"""Scenario configuration: JSON loading, validation and bundled scenarios."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema

from hero_mux.health import CheckConfig
from hero_mux.mobility import BehaviorConfig
from hero_mux.sim.sensors import FailureEvent, ImuSpec, RangerSpec, StreamSpec
from hero_mux.sim.trajectory import TrajectorySpec
from hero_mux.sim.vehicle import VehicleConfig
from hero_mux.streams import LifecycleConfig, SensorStats

RESERVED_SOURCES = ("imu", "ranger")


class ConfigError(ValueError):
    """Invalid scenario; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration: float
    trajectory: TrajectorySpec
    streams: tuple[StreamSpec, ...]
    ranking: tuple[str, ...]
    checks: dict[str, CheckConfig]
    vote: CheckConfig
    tick_rate: float = 100.0
    v_max: float = 3.0
    imu: ImuSpec = field(default_factory=ImuSpec)
    imu_bias_rw: tuple[float, float] = (1e-4, 1e-5)
    ranger: Optional[RangerSpec] = None
    lifecycle: LifecycleConfig = field(default_factory=LifecycleConfig)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    failures: tuple[FailureEvent, ...] = ()
    preempt: bool = False
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * self.tick_rate)) + 1

    def stream(self, stream_id: str) -> StreamSpec:
        for s in self.streams:
            if s.stream_id == stream_id:
                return s
        raise KeyError(stream_id)


def _schema() -> dict:
    text = resources.files("hero_mux.sim").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _build(cls, data: Optional[dict], **extra):
    kwargs = {f.name: data[f.name] for f in fields(cls) if data and f.name in data}
    kwargs.update(extra)
    return cls(**kwargs)


def _integral_ratio(a: float, b: float) -> bool:
    r = a / b
    return abs(r - round(r)) < 1e-9 and round(r) >= 1


def parse_scenario(data: dict, seed: Optional[int] = None) -> ScenarioConfig:
    """Validate a scenario document and build its config.

    Raises :class:`ConfigError` naming the JSON path of the first problem.
    """
    data = copy.deepcopy(data)
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err.absolute_path), err.message)
    if seed is not None:
        data["seed"] = int(seed)

    tick = float(data.get("tick_rate", 100.0))
    v_max = float(data.get("platform", {}).get("v_max", 3.0))
    duration = float(data["duration"])

    traj_data = dict(data["trajectory"])
    for key in ("start", "direction", "center"):
        if key in traj_data:
            traj_data[key] = tuple(traj_data[key])
    if "waypoints" in traj_data:
        traj_data["waypoints"] = tuple(tuple(w) for w in traj_data["waypoints"])
    try:
        trajectory = TrajectorySpec(duration=duration, **traj_data)
    except ValueError as exc:
        raise ConfigError("$.trajectory", str(exc)) from None
    if trajectory.max_speed > v_max:
        raise ConfigError("$.trajectory", f"speed {trajectory.max_speed:.3f} m/s exceeds platform v_max {v_max}")

    default_checks = dict(data.get("checks", {}))
    streams, checks, seen = [], {}, set()
    for i, sd in enumerate(data["streams"]):
        sid = sd["id"]
        if sid in seen or sid in RESERVED_SOURCES:
            raise ConfigError(_path(["streams", i, "id"]), f"duplicate or reserved stream id {sid!r}")
        seen.add(sid)
        rate = float(sd["rate"])
        if not _integral_ratio(tick, rate):
            raise ConfigError(_path(["streams", i, "rate"]), f"tick_rate {tick} must be a multiple of {rate}")
        if "reset_period" in sd and not _integral_ratio(sd["reset_period"] * rate, 1.0):
            raise ConfigError(_path(["streams", i, "reset_period"]), "must be a whole number of stream periods")
        stats = SensorStats(**{"output_rate": rate, **sd.get("stats", {})})
        spec_kwargs = {k: sd[k] for k in ("pos_sigma", "att_sigma", "vel_sigma", "reset_period") if k in sd}
        streams.append(StreamSpec(sid, sd["kind"], rate, stats=stats, **spec_kwargs))
        merged = {"nominal_rate": rate, "v_max": v_max, **default_checks, **sd.get("checks", {})}
        try:
            checks[sid] = CheckConfig(**merged)
        except ValueError as exc:
            raise ConfigError(_path(["streams", i, "checks"]), str(exc)) from None

    ranking = tuple(data["ranking"])
    if sorted(ranking) != sorted(seen) or len(set(ranking)) != len(ranking):
        raise ConfigError("$.ranking", f"must list each stream exactly once, got {list(ranking)}")

    imu_d = data.get("imu", {})
    imu = _build(ImuSpec, {k: (tuple(v) if isinstance(v, list) else v) for k, v in imu_d.items()})
    if not _integral_ratio(imu.rate, tick):
        raise ConfigError("$.imu.rate", f"must be a multiple of tick_rate {tick}")
    ranger = None
    if "ranger" in data:
        ranger = _build(RangerSpec, data["ranger"])
        if not _integral_ratio(tick, ranger.rate):
            raise ConfigError("$.ranger.rate", f"tick_rate {tick} must be a multiple of {ranger.rate}")

    failures = []
    known = seen | set(RESERVED_SOURCES)
    for i, fd in enumerate(data.get("failures", [])):
        p = ["failures", i]
        if fd["stream"] not in known:
            raise ConfigError(_path(p + ["stream"]), f"unknown stream {fd['stream']!r}")
        if not (fd["t_start"] < fd["t_end"] <= duration + 1e-9):
            raise ConfigError(_path(p), "need t_start < t_end <= duration")
        failures.append(FailureEvent(
            stream_id=fd["stream"], t_start=float(fd["t_start"]), t_end=float(fd["t_end"]), mode=fd["mode"],
            offset=tuple(fd.get("offset", (0.0, 0.0, 0.0))), rate=float(fd.get("rate", 0.0)),
            bias=tuple(fd.get("bias", (0.0, 0.0, 0.0))), stats=dict(fd.get("stats", {}))))

    vote_d = {"v_max": v_max, **default_checks, **data.get("vote", {})}
    behavior = _build(BehaviorConfig, data.get("behavior"))
    vehicle = _build(VehicleConfig, data.get("vehicle"), v_max=v_max)
    return ScenarioConfig(
        name=data["name"], seed=int(data["seed"]), duration=duration, trajectory=trajectory,
        streams=tuple(streams), ranking=ranking, checks=checks, vote=CheckConfig(**vote_d),
        tick_rate=tick, v_max=v_max, imu=imu,
        imu_bias_rw=(float(imu_d.get("accel_bias_rw", 1e-4)), float(imu_d.get("gyro_bias_rw", 1e-5))),
        ranger=ranger, lifecycle=_build(LifecycleConfig, data.get("lifecycle")), behavior=behavior,
        vehicle=vehicle, failures=tuple(failures), preempt=bool(data.get("preempt", False)), raw=data)


def bundled_scenarios() -> list[str]:
    root = resources.files("hero_mux.sim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref: Union[str, Path], seed: Optional[int] = None) -> ScenarioConfig:
    """Load a scenario by bundled name or file path."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError("$", f"cannot read {path}: {exc}") from None
    elif str(ref) in bundled_scenarios():
        text = resources.files("hero_mux.sim").joinpath("scenarios", f"{ref}.json").read_text()
    else:
        raise ConfigError("$", f"no scenario file or bundled scenario named {ref!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("$", "scenario must be a JSON object")
    return parse_scenario(data, seed)


def with_overrides(cfg: ScenarioConfig, **changes: Any) -> ScenarioConfig:
    """Re-parse the scenario document with top-level fields replaced."""
    return parse_scenario({**cfg.raw, **changes})
