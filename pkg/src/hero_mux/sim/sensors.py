"""Synthetic odometry, IMU and height-ranger measurements with failure injection."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from hero_mux.fusion import GRAVITY, ImuSample
from hero_mux.geometry import Pose, UnitRotation, between
from hero_mux.state import CovarianceBlock, RobotState
from hero_mux.streams import OdometryMessage, SensorStats, StreamKind


class FailureMode(str, Enum):
    GAP = "gap"
    JUMP = "jump"
    DIVERGENCE = "divergence"
    DRIFT = "drift"
    SENSOR_DEGRADE = "sensor_degrade"


@dataclass(frozen=True)
class FailureEvent:
    """An injected failure active on ``[t_start, t_end)``.

    ``offset`` (m) parameterizes jumps, ``rate`` (m^2/s) covariance growth,
    ``bias`` (m/s, body frame) drift and ``stats`` the sensor overrides.
    """

    stream_id: str
    t_start: float
    t_end: float
    mode: FailureMode
    offset: tuple = (0.0, 0.0, 0.0)
    rate: float = 0.0
    bias: tuple = (0.0, 0.0, 0.0)
    stats: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FailureMode(self.mode))
        if not self.t_start < self.t_end:
            raise ValueError("failure needs t_start < t_end")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class StreamSpec:
    stream_id: str
    kind: StreamKind = StreamKind.POSE
    rate: float = 20.0
    pos_sigma: float = 0.01
    att_sigma: float = 0.002
    vel_sigma: float = 0.02
    reset_period: Optional[float] = None
    stats: SensorStats = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StreamKind(self.kind))
        if self.stats is None:
            object.__setattr__(self, "stats", SensorStats(output_rate=self.rate))


@dataclass(frozen=True)
class ImuSpec:
    rate: float = 200.0
    accel_sigma: float = 0.02
    gyro_sigma: float = 0.002
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RangerSpec:
    rate: float = 20.0
    sigma: float = 0.01


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named source, stable under adding sources."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def _since(ev: FailureEvent, epoch_start: float, t: float) -> float:
    return t - max(ev.t_start, epoch_start)


def simulate_stream(gt: RobotState, spec: StreamSpec, active_failures: Sequence[FailureEvent],
                    epoch_origin: Pose, rng: np.random.Generator, epoch: int = 0,
                    epoch_start: float = 0.0) -> Optional[OdometryMessage]:
    """One odometry sample of ``spec`` at ``gt.stamp``, or ``None`` during a gap.

    Noise is drawn before the gap decision so a gap never shifts the noise
    sequence of later samples. Jumps persist until the stream restarts;
    drift and divergence accumulate from the later of the failure onset and
    the current epoch start.
    """
    t = gt.stamp
    n_pos = rng.normal(0.0, spec.pos_sigma, 3)
    n_att = rng.normal(0.0, spec.att_sigma, 3)
    n_vel = rng.normal(0.0, spec.vel_sigma, 3)

    failures = [f for f in active_failures if f.active(t)]
    if any(f.mode is FailureMode.GAP for f in failures):
        return None

    local = between(epoch_origin, gt.pose)
    offset = np.zeros(3)
    vel_bias = np.zeros(3)
    extra_var = 0.0
    stats = spec.stats
    for f in failures:
        if f.mode is FailureMode.JUMP and epoch_start <= f.t_start:
            offset += np.asarray(f.offset, dtype=float)
        elif f.mode is FailureMode.DRIFT:
            b = np.asarray(f.bias, dtype=float)
            offset += b * _since(f, epoch_start, t)
            vel_bias += b
        elif f.mode is FailureMode.DIVERGENCE:
            extra_var += f.rate * _since(f, epoch_start, t) / 3.0
        elif f.mode is FailureMode.SENSOR_DEGRADE:
            stats = SensorStats(**{**stats.__dict__, **f.stats})

    pose = velocity = angular = None
    if spec.kind is not StreamKind.VELOCITY:
        pose = Pose(local.t + offset + n_pos, local.r * UnitRotation.from_rotvec(n_att))
    if spec.kind is not StreamKind.POSE:
        velocity = gt.v + vel_bias + n_vel
        angular = gt.w.copy()
    cov = CovarianceBlock(np.eye(3) * (spec.pos_sigma ** 2 + extra_var), np.eye(3) * spec.vel_sigma ** 2)
    return OdometryMessage(spec.stream_id, t, pose=pose, velocity=velocity, angular_velocity=angular,
                           covariance=cov, sensor_stats=stats, init_epoch=epoch)


def simulate_imu(gt: RobotState, spec: ImuSpec, rng: np.random.Generator) -> ImuSample:
    """Gyro and specific-force sample (body frame) with constant bias and white noise."""
    n_g = rng.normal(0.0, spec.gyro_sigma, 3)
    n_a = rng.normal(0.0, spec.accel_sigma, 3)
    gyro = gt.w + np.asarray(spec.gyro_bias, dtype=float) + n_g
    accel = gt.a - gt.r.matrix().T @ GRAVITY + np.asarray(spec.accel_bias, dtype=float) + n_a
    return ImuSample(gt.stamp, gyro, accel)


def simulate_range(gt: RobotState, spec: RangerSpec, rng: np.random.Generator) -> float:
    """Downward slant range to a flat floor at z = 0."""
    n = rng.normal(0.0, spec.sigma)
    cos_tilt = gt.r.matrix()[2, 2]
    return float(max(gt.p[2], 0.0) / cos_tilt + n)
