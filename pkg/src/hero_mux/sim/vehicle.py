"""Kinematic multirotor stand-in driven by control commands.

The vehicle holds a level attitude and realizes commanded world-frame
accelerations directly. Open-loop axes follow simple drag and thrust
responses. Acceleration and yaw rate are held constant over each
integration step, so the IMU samples taken at step starts describe the
motion exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from hero_mux.geometry import UnitRotation
from hero_mux.mobility import ControlCommand
from hero_mux.state import RobotState


@dataclass(frozen=True)
class VehicleConfig:
    drag_tau: float = 1.0
    thrust_tau: float = 0.5
    a_max: float = 4.0
    v_max: float = 3.0


@dataclass
class Vehicle:
    p: np.ndarray
    v: np.ndarray
    yaw: float = 0.0
    cfg: VehicleConfig = field(default_factory=VehicleConfig)
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate: float = 0.0
    on_ground: bool = False
    touchdown_speed: Optional[float] = None

    def apply(self, cmd: Optional[ControlCommand], yaw_rate: float = 0.0,
              feedforward: Optional[np.ndarray] = None) -> None:
        """Set the acceleration and yaw rate held until the next command."""
        if cmd is None:
            a = np.zeros(3) if feedforward is None else np.asarray(feedforward, dtype=float)
        else:
            a = np.empty(3)
            if cmd.accel_xy is not None:
                a[:2] = cmd.accel_xy
            else:
                a[:2] = -self.v[:2] / self.cfg.drag_tau
            if cmd.accel_z is not None:
                a[2] = cmd.accel_z
            elif cmd.descent_rate is not None:
                a[2] = (-cmd.descent_rate - self.v[2]) / self.cfg.thrust_tau
            else:
                a[2] = -self.v[2] / self.cfg.thrust_tau
        n = float(np.linalg.norm(a))
        if n > self.cfg.a_max:
            a *= self.cfg.a_max / n
        if self.on_ground:
            a = np.zeros(3)
            yaw_rate = 0.0
        self.a = a
        self.yaw_rate = yaw_rate

    def state(self, t: float) -> RobotState:
        r = UnitRotation.from_ypr(self.yaw)
        rt = r.matrix().T
        return RobotState(stamp=t, p=self.p, r=r, v=rt @ self.v,
                          w=np.array([0.0, 0.0, self.yaw_rate]), a=rt @ self.a)

    def limit_speed(self, dt: float) -> None:
        """Trim the held acceleration so the speed after ``dt`` stays within ``v_max``.

        Call before sampling the state for a step so IMU and motion agree.
        """
        if np.linalg.norm(self.v + self.a * dt) > self.cfg.v_max:
            self.a = self.a * _speed_limit_scale(self.v, self.a, dt, self.cfg.v_max)

    def integrate(self, dt: float) -> None:
        if self.on_ground:
            return
        a = self.a
        v_next = self.v + a * dt
        p_next = self.p + self.v * dt + 0.5 * a * dt * dt
        if p_next[2] <= 0.0 and self.v[2] <= 0.0:
            self.touchdown_speed = float(-v_next[2])
            self.p = np.array([p_next[0], p_next[1], 0.0])
            self.v = np.zeros(3)
            self.a = np.zeros(3)
            self.yaw_rate = 0.0
            self.on_ground = True
            return
        self.p = p_next
        self.v = v_next
        self.yaw += self.yaw_rate * dt


def _speed_limit_scale(v: np.ndarray, a: np.ndarray, dt: float, v_max: float) -> float:
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(v + mid * a * dt) > v_max:
            hi = mid
        else:
            lo = mid
    return lo
