"""Loosely coupled error-state EKF fusing pose odometry with an IMU.

Error state ordering (15): ``dp, dv, dtheta, db_g, db_a``. Attitude errors
are local (body-frame) small angles: ``R_true = R * Exp(dtheta)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from hero_mux.geometry import Pose, UnitRotation, compose, inverse, left_jacobian_inv, skew
from hero_mux.state import CovarianceBlock, RobotState, validate_psd

GRAVITY = np.array([0.0, 0.0, -9.81])
DT_MAX = 0.1

P_, V_, TH_, BG_, BA_ = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)
_I3 = np.eye(3)
_I15 = np.eye(15)


class InvalidDt(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class ImuSample:
    stamp: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float).reshape(3))
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.gyro)) and np.all(np.isfinite(self.accel))):
            raise ValueError("IMU sample must be finite")


@dataclass(frozen=True)
class ProcessNoise:
    """Continuous-time noise densities of the IMU model."""

    accel: float = 0.02          # m/s^2/sqrt(Hz)
    gyro: float = 0.002          # rad/s/sqrt(Hz)
    accel_bias_rw: float = 1e-4  # m/s^3/sqrt(Hz)
    gyro_bias_rw: float = 1e-5   # rad/s^2/sqrt(Hz)


@dataclass(eq=False)
class FilterState:
    """Nominal state, error covariance and the measurement frame.

    ``frame`` maps the current stream-local measurement frame into the
    filter's world frame; it is replaced by :func:`reset_from` whenever the
    fused odometry source restarts.
    """

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: UnitRotation = field(default_factory=UnitRotation)
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    P: np.ndarray = field(default_factory=lambda: default_covariance())
    frame: Pose = field(default_factory=Pose)
    stamp: float = 0.0
    last_gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_accel: np.ndarray = field(default_factory=lambda: -GRAVITY.copy())
    last_innovation: Optional[np.ndarray] = None

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.r)

    def robot_state(self) -> RobotState:
        """Full state with body-frame rates taken from the last IMU sample."""
        rt = self.r.matrix().T
        return RobotState(
            stamp=self.stamp,
            p=self.p,
            r=self.r,
            v=rt @ self.v,
            w=self.last_gyro - self.gyro_bias,
            a=self.last_accel - self.accel_bias + rt @ GRAVITY,
        )

    def copy(self) -> "FilterState":
        return replace(self, p=self.p.copy(), v=self.v.copy(), gyro_bias=self.gyro_bias.copy(),
                       accel_bias=self.accel_bias.copy(), P=self.P.copy())


def default_covariance(pos: float = 1e-4, vel: float = 1e-4, att: float = 1e-6,
                       gyro_bias: float = 1e-8, accel_bias: float = 1e-6) -> np.ndarray:
    return np.diag(np.repeat([pos, vel, att, gyro_bias, accel_bias], 3)).astype(float)


def transition(s: FilterState, imu: ImuSample, dt: float) -> np.ndarray:
    """First-order error-state transition matrix over ``dt``."""
    return _transition(s.r.matrix(), imu.accel - s.accel_bias,
                       UnitRotation.from_rotvec((imu.gyro - s.gyro_bias) * dt), dt)


@lru_cache(maxsize=16)
def _transition_base(dt: float) -> np.ndarray:
    F = _I15.copy()
    F[P_, V_] = _I3 * dt
    F[TH_, BG_] = -_I3 * dt
    F.flags.writeable = False
    return F


def _transition(R: np.ndarray, acc: np.ndarray, step: UnitRotation, dt: float) -> np.ndarray:
    F = _transition_base(dt).copy()
    F[V_, TH_] = (-dt * R) @ skew(acc)
    F[V_, BA_] = -dt * R
    F[P_, TH_] = 0.5 * dt * F[V_, TH_]
    F[P_, BA_] = 0.5 * dt * F[V_, BA_]
    F[TH_, TH_] = step.matrix().T
    return F


def predict(s: FilterState, imu: ImuSample, dt: float, noise: ProcessNoise = ProcessNoise()) -> FilterState:
    """Strapdown propagation of the nominal state and its covariance."""
    if not 0.0 < dt <= DT_MAX:
        raise InvalidDt(f"dt={dt!r} outside (0, {DT_MAX}]")
    R = s.r.matrix()
    acc = imu.accel - s.accel_bias
    a_world = R @ acc + GRAVITY
    p = s.p + (s.v + (0.5 * dt) * a_world) * dt
    v = s.v + a_world * dt
    step = UnitRotation.from_rotvec((imu.gyro - s.gyro_bias) * dt)
    r = s.r * step

    F = _transition(R, acc, step, dt)
    P = F @ s.P @ F.T
    P += _process_cov(noise, dt)
    P = 0.5 * (P + P.T)
    out = copy.copy(s)
    out.p, out.v, out.r, out.P = p, v, r, P
    out.stamp = imu.stamp + dt
    out.last_gyro, out.last_accel = imu.gyro, imu.accel
    return out


@lru_cache(maxsize=64)
def _process_cov(noise: ProcessNoise, dt: float) -> np.ndarray:
    Q = np.diag(np.repeat([0.0, noise.accel ** 2, noise.gyro ** 2, noise.gyro_bias_rw ** 2,
                           noise.accel_bias_rw ** 2], 3) * dt)
    Q.flags.writeable = False
    return Q


def pose_residual(s: FilterState, meas: Pose, dx: Optional[np.ndarray] = None) -> np.ndarray:
    """Measurement residual ``[p_m - p, Log(R^T R_m)]`` of the (perturbed) state."""
    p, r = s.p, s.r
    if dx is not None:
        p = p + dx[P_]
        r = r * UnitRotation.from_rotvec(dx[TH_])
    return np.concatenate((meas.t - p, (r.inverse() * meas.r).rotvec()))


def pose_jacobian(s: FilterState, meas: Pose) -> np.ndarray:
    """``H`` such that ``residual(dx) ~= residual(0) - H dx``."""
    return _jacobian_at(pose_residual(s, meas))


def _jacobian_at(residual: np.ndarray) -> np.ndarray:
    H = np.zeros((6, 15))
    H[0:3, P_] = _I3
    H[3:6, TH_] = left_jacobian_inv(residual[3:])
    return H


def _inject(s: FilterState, dx: np.ndarray, P: np.ndarray, position_axes=(0, 1, 2)) -> FilterState:
    p = s.p.copy()
    for i in position_axes:
        p[i] += dx[i]
    r = s.r * UnitRotation.from_rotvec(dx[TH_])
    G = _I15.copy()
    G[TH_, TH_] = _I3 - skew(0.5 * dx[TH_])
    P = G @ P @ G.T
    P = 0.5 * (P + P.T)
    return replace(s, p=p, v=s.v + dx[V_], r=r, gyro_bias=s.gyro_bias + dx[BG_],
                   accel_bias=s.accel_bias + dx[BA_], P=P)


def _kalman(s: FilterState, H: np.ndarray, y: np.ndarray, Rm: np.ndarray, zero_rows=()) -> tuple[np.ndarray, np.ndarray]:
    PHt = s.P @ H.T
    S = H @ PHt + Rm
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("innovation covariance is not positive definite") from exc
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    if zero_rows:
        K[list(zero_rows), :] = 0.0
    IKH = _I15 - K @ H
    P = IKH @ s.P @ IKH.T + K @ Rm @ K.T
    return K @ y, P


def update_pose(s: FilterState, meas: Pose, meas_cov: CovarianceBlock,
                att_var: Optional[float] = 1e-4) -> FilterState:
    """Fuse a world-frame pose; ``att_var=None`` fuses position only."""
    validate_psd(meas_cov.position, "measurement covariance")
    y = pose_residual(s, meas)
    H = _jacobian_at(y)
    if att_var is None:
        y, H, Rm = y[:3], H[:3], meas_cov.position
    else:
        Rm = np.zeros((6, 6))
        Rm[:3, :3] = meas_cov.position
        Rm[3:, 3:] = _I3 * att_var
    dx, P = _kalman(s, H, y, Rm)
    out = _inject(s, dx, P)
    out.last_innovation = y
    return out


def update_local_pose(s: FilterState, local: Pose, meas_cov: CovarianceBlock,
                      att_var: Optional[float] = 1e-4) -> FilterState:
    """Fuse a stream-local pose mapped through the current measurement frame."""
    return update_pose(s, compose(s.frame, local), meas_cov, att_var)


def update_height(s: FilterState, z_meas: float, z_var: float) -> FilterState:
    """Scalar height update; horizontal position is left untouched."""
    if not z_var > 0:
        raise ValueError("z_var must be positive")
    H = np.zeros((1, 15))
    H[0, 2] = 1.0
    y = np.array([z_meas - s.p[2]])
    dx, P = _kalman(s, H, y, np.array([[z_var]]), zero_rows=(0, 1))
    out = _inject(s, dx, P, position_axes=(2,))
    out.last_innovation = y
    return out


def height_from_range(rng: float, r: UnitRotation) -> float:
    """Vertical height from a downward slant range given the body attitude."""
    return rng * r.matrix()[2, 2]


def reset_from(s: FilterState, anchor: Pose) -> FilterState:
    """Re-express subsequent stream-local measurements through ``anchor``."""
    return replace(s, frame=anchor)


def anchor_for(s: FilterState, first_local: Pose) -> Pose:
    """Anchor mapping a restarted stream's first sample onto the current estimate."""
    return compose(s.pose, inverse(first_local))


@dataclass
class LooselyCoupledFilter:
    """Stateful wrapper that keeps one stream's fusion continuous across re-inits.

    When a message arrives from a new stream epoch, the measurement frame is
    re-anchored so the restarted stream's first sample lands on the current
    estimate, then updates continue as usual.
    """

    state: FilterState
    noise: ProcessNoise = field(default_factory=ProcessNoise)
    att_var: Optional[float] = 1e-4
    epoch: Optional[int] = None
    resets: int = 0

    def predict(self, imu: ImuSample, dt: float) -> None:
        self.state = predict(self.state, imu, dt, self.noise)

    def update(self, local: Pose, cov: CovarianceBlock, epoch: int) -> None:
        if epoch != self.epoch:
            self.state = reset_from(self.state, anchor_for(self.state, local))
            if self.epoch is not None:
                self.resets += 1
            self.epoch = epoch
        self.state = update_local_pose(self.state, local, cov, self.att_var)
