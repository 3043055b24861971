"""Analytic reference trajectories with exactly consistent derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from hero_mux.geometry import UnitRotation
from hero_mux.state import RobotState


class OutOfRange(ValueError):
    pass


class TrajectoryKind(str, Enum):
    HOVER = "hover"
    LINE = "line"
    CIRCLE = "circle"
    TUNNEL = "tunnel"


@dataclass(frozen=True)
class TrajectorySpec:
    """Reference motion of the vehicle.

    ``hover`` holds ``start``; ``line`` moves from ``start`` along
    ``direction`` at ``speed``; ``circle`` orbits ``center`` with ``radius``
    and ``period`` facing along the tangent; ``tunnel`` visits
    ``waypoints`` stopping at each, with peak speed ``speed``.
    """

    kind: TrajectoryKind
    duration: float
    start: tuple = (0.0, 0.0, 1.5)
    direction: tuple = (1.0, 0.0, 0.0)
    speed: float = 0.5
    center: tuple = (0.0, 0.0, 1.5)
    radius: float = 2.0
    period: float = 20.0
    waypoints: tuple = ()
    yaw: Optional[float] = None
    _segments: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TrajectoryKind(self.kind))
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.kind is TrajectoryKind.TUNNEL:
            pts = [np.asarray(w, dtype=float) for w in self.waypoints]
            if len(pts) < 2:
                raise ValueError("tunnel needs at least two waypoints")
            segs, t0 = [], 0.0
            for a, b in zip(pts[:-1], pts[1:]):
                length = float(np.linalg.norm(b - a))
                # peak speed of the quintic blend is 1.875 * length / T
                T = 1.875 * length / self.speed if length > 0 else 0.0
                segs.append((t0, T, a, b))
                t0 += T
            object.__setattr__(self, "_segments", tuple(segs))

    @property
    def max_speed(self) -> float:
        if self.kind is TrajectoryKind.HOVER:
            return 0.0
        if self.kind is TrajectoryKind.CIRCLE:
            return 2 * math.pi * self.radius / self.period
        return self.speed

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
        """World-frame ``(p, v, a, yaw, yaw_rate)`` at time ``t``."""
        if not 0.0 <= t <= self.duration + 1e-9:
            raise OutOfRange(f"t={t} outside [0, {self.duration}]")
        zero = np.zeros(3)
        if self.kind is TrajectoryKind.HOVER:
            return np.array(self.start, dtype=float), zero, zero.copy(), self.yaw or 0.0, 0.0
        if self.kind is TrajectoryKind.LINE:
            d = np.asarray(self.direction, dtype=float)
            d = d / np.linalg.norm(d)
            yaw = self.yaw if self.yaw is not None else math.atan2(d[1], d[0])
            return np.asarray(self.start, dtype=float) + d * self.speed * t, d * self.speed, zero, yaw, 0.0
        if self.kind is TrajectoryKind.CIRCLE:
            w = 2 * math.pi / self.period
            th = w * t
            c, s = math.cos(th), math.sin(th)
            r = self.radius
            p = np.asarray(self.center, dtype=float) + np.array([r * c, r * s, 0.0])
            v = np.array([-r * w * s, r * w * c, 0.0])
            a = np.array([-r * w * w * c, -r * w * w * s, 0.0])
            yaw = self.yaw if self.yaw is not None else th + math.pi / 2
            return p, v, a, yaw, (0.0 if self.yaw is not None else w)
        return self._tunnel(t)

    def _tunnel(self, t: float):
        yaw = self.yaw or 0.0
        for t0, T, a, b in self._segments:
            if T > 0 and t < t0 + T:
                tau = max(0.0, (t - t0) / T)
                s = tau ** 3 * (10 - 15 * tau + 6 * tau * tau)
                ds = 30 * tau * tau * (1 - tau) ** 2 / T
                dds = 60 * tau * (1 - 3 * tau + 2 * tau * tau) / (T * T)
                d = b - a
                return a + s * d, ds * d, dds * d, yaw, 0.0
        return np.asarray(self._segments[-1][3], dtype=float), np.zeros(3), np.zeros(3), yaw, 0.0


def ground_truth(spec: TrajectorySpec, t: float) -> RobotState:
    """Reference state at ``t`` with body-frame rates."""
    p, v, a, yaw, yaw_rate = spec.sample(t)
    r = UnitRotation.from_ypr(yaw)
    rt = r.matrix().T
    return RobotState(stamp=t, p=p, r=r, v=rt @ v, w=np.array([0.0, 0.0, yaw_rate]), a=rt @ a)


def reference(spec: TrajectorySpec):
    """Mission reference ``t -> (p, v, a)`` clamped to the trajectory duration."""
    def ref(t: float):
        p, v, a, _, _ = spec.sample(min(max(t, 0.0), spec.duration))
        return p, v, a
    return ref
