"""Quality-to-service mapping and the behavior state machine."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Callable, Optional, Protocol

import numpy as np

from hero_mux.state import RobotState, StateQuality


class MobilityService(IntEnum):
    """Capability classes, ordered from least to most capable."""

    OPEN_LOOP_LAND = 0
    ATTITUDE = 1
    CLOSED_LOOP_Z = 2
    LOCAL = 3
    GLOBAL = 4

    @property
    def label(self) -> str:
        return _SERVICE_LABELS[self]


_SERVICE_LABELS = {
    MobilityService.OPEN_LOOP_LAND: "OpenLoopLand",
    MobilityService.ATTITUDE: "Attitude",
    MobilityService.CLOSED_LOOP_Z: "ClosedLoopZ",
    MobilityService.LOCAL: "Local",
    MobilityService.GLOBAL: "Global",
}


class Behavior(str, Enum):
    TAKE_OFF = "TakeOff"
    WAYPOINT_NAV = "WaypointNav"
    VELOCITY_HOLD = "VelocityHold"
    HOVER_Z = "HoverZ"
    ATTITUDE_HOVER = "AttitudeHover"
    ATTITUDE_LAND = "AttitudeLand"
    LANDED = "Landed"


def map_quality_to_service(q: StateQuality) -> MobilityService:
    p, gz, vxy, vz, att = q.bits()
    if not att:
        return MobilityService.OPEN_LOOP_LAND
    if p and gz and vxy and vz:
        return MobilityService.GLOBAL
    if vxy:
        return MobilityService.LOCAL
    if gz or vz:
        return MobilityService.CLOSED_LOOP_Z
    return MobilityService.ATTITUDE


class Reference(Protocol):
    """Time-parameterized mission reference."""

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return world-frame position, velocity and acceleration at ``t``."""


@dataclass(frozen=True)
class BehaviorConfig:
    safety_timeout: float = 3.0
    descent_rate: float = 0.3
    landing_rate_limit: float = 0.5
    ground_threshold: float = 0.05
    takeoff_rate: float = 0.5
    kp: float = 1.0
    kv: float = 2.0
    kz: float = 1.0
    a_max: float = 3.0


@dataclass(frozen=True)
class BehaviorState:
    active: Behavior = Behavior.WAYPOINT_NAV
    dead_reckon_since: Optional[float] = None
    hold_altitude: Optional[float] = None
    takeoff_altitude: Optional[float] = None


@dataclass(frozen=True)
class ControlCommand:
    """World-frame acceleration request plus the state blocks it closes loops on.

    A ``None`` axis group is open loop: the vehicle keeps a level attitude
    horizontally, or holds hover thrust vertically (descending at
    ``descent_rate`` when set).
    """

    accel_xy: Optional[np.ndarray] = None
    accel_z: Optional[float] = None
    descent_rate: Optional[float] = None
    loops: frozenset = frozenset()

    def loops_label(self) -> str:
        return "|".join(sorted(self.loops))


def _clip(a: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(a))
    return a if n <= limit else a * (limit / n)


def behavior_step(b: BehaviorState, service: MobilityService, state: RobotState,
                  mission: Callable[[float], tuple], now: float,
                  cfg: BehaviorConfig = BehaviorConfig(), touchdown: bool = False,
                  quality: Optional[StateQuality] = None) -> tuple[BehaviorState, ControlCommand]:
    """Choose the behavior for ``service`` and compute its control command.

    ``touchdown`` reports ground contact and ends an attitude landing.
    ``quality`` refines which vertical loops may close when the service
    alone does not pin them down; without it the service's nominal
    requirements are assumed.
    """
    if quality is None:
        gz_ok = vz_ok = service >= MobilityService.LOCAL
        if service is MobilityService.CLOSED_LOOP_Z:
            gz_ok = vz_ok = True
    else:
        _, gz_ok, _, vz_ok, _ = quality.bits()

    if b.active is Behavior.LANDED:
        return b, ControlCommand(descent_rate=cfg.descent_rate)
    if b.active is Behavior.ATTITUDE_LAND or service is MobilityService.OPEN_LOOP_LAND:
        if touchdown or (b.active is Behavior.ATTITUDE_LAND and gz_ok
                         and service is not MobilityService.OPEN_LOOP_LAND
                         and state.p[2] <= cfg.ground_threshold):
            return replace(b, active=Behavior.LANDED), ControlCommand(descent_rate=cfg.descent_rate)
        loops = frozenset() if service is MobilityService.OPEN_LOOP_LAND else frozenset({"att"})
        return (replace(b, active=Behavior.ATTITUDE_LAND),
                ControlCommand(descent_rate=cfg.descent_rate, loops=loops))

    if service >= MobilityService.LOCAL:
        b = replace(b, dead_reckon_since=None, hold_altitude=None)
    elif b.dead_reckon_since is None:
        b = replace(b, dead_reckon_since=now, hold_altitude=float(state.p[2]))
    elif now - b.dead_reckon_since >= cfg.safety_timeout - 1e-9:
        return (replace(b, active=Behavior.ATTITUDE_LAND),
                ControlCommand(descent_rate=cfg.descent_rate, loops=frozenset({"att"})))

    v_world = state.v_world
    if service is MobilityService.GLOBAL:
        if b.active is Behavior.TAKE_OFF:
            target = b.takeoff_altitude if b.takeoff_altitude is not None else mission(now)[0][2]
            if state.p[2] < target - cfg.ground_threshold:
                az = cfg.kv * (cfg.takeoff_rate - v_world[2])
                return b, ControlCommand(accel_xy=-cfg.kv * v_world[:2], accel_z=float(az),
                                         loops=frozenset({"p", "gz", "vxy", "vz", "att"}))
        p_ref, v_ref, a_ref = mission(now)
        a = a_ref + cfg.kv * (v_ref - v_world) + cfg.kp * (p_ref - state.p)
        a = _clip(a, cfg.a_max)
        return (replace(b, active=Behavior.WAYPOINT_NAV),
                ControlCommand(accel_xy=a[:2], accel_z=float(a[2]),
                               loops=frozenset({"p", "gz", "vxy", "vz", "att"})))

    if b.active is Behavior.TAKE_OFF:
        # a take-off without position quality is abandoned for a landing
        return (replace(b, active=Behavior.ATTITUDE_LAND),
                ControlCommand(descent_rate=cfg.descent_rate, loops=frozenset({"att"})))

    az, vloops = _vertical_hold(b, state, v_world, gz_ok, vz_ok, cfg)
    if service is MobilityService.LOCAL:
        axy = _clip(-cfg.kv * v_world[:2], cfg.a_max)
        return (replace(b, active=Behavior.VELOCITY_HOLD),
                ControlCommand(accel_xy=axy, accel_z=az, loops=frozenset({"vxy", "att"}) | vloops))
    if service is MobilityService.CLOSED_LOOP_Z:
        return (replace(b, active=Behavior.HOVER_Z),
                ControlCommand(accel_z=az, loops=frozenset({"att"}) | vloops))
    return replace(b, active=Behavior.ATTITUDE_HOVER), ControlCommand(loops=frozenset({"att"}))


def _vertical_hold(b: BehaviorState, state: RobotState, v_world: np.ndarray, gz_ok: bool, vz_ok: bool,
                   cfg: BehaviorConfig) -> tuple[Optional[float], frozenset]:
    az = 0.0
    loops = set()
    if gz_ok:
        hold = b.hold_altitude if b.hold_altitude is not None else float(state.p[2])
        az += cfg.kz * (hold - state.p[2])
        loops.add("gz")
    if vz_ok:
        az -= cfg.kv * v_world[2]
        loops.add("vz")
    if not loops:
        return None, frozenset()
    return float(np.clip(az, -cfg.a_max, cfg.a_max)), frozenset(loops)
