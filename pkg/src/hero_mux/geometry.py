"""Rigid-body pose algebra.

Rotations are unit quaternions ``(w, x, y, z)`` kept in canonical form
(``w >= 0``). A :class:`Pose` ``a`` maps points from its child frame into
its parent frame, so ``compose(a, b)`` applies ``b`` expressed in ``a``'s
frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

_NORM_EPS = 1e-12


class DegenerateRotation(ValueError):
    """Raised when a 4-vector is too short to define a rotation."""


def _canonical(q: np.ndarray) -> np.ndarray:
    n = float(np.sqrt(q @ q))
    if not n > _NORM_EPS:
        raise DegenerateRotation(f"quaternion norm {n:g} is not > {_NORM_EPS:g}")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def _qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a.tolist()
    bw, bx, by, bz = b.tolist()
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


@dataclass(frozen=True, eq=False)
class UnitRotation:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _canonical(np.asarray(self.q, dtype=float).reshape(4)))

    @classmethod
    def identity(cls) -> "UnitRotation":
        return cls()

    @classmethod
    def _unit(cls, q: np.ndarray) -> "UnitRotation":
        # q is already unit length; only the sign convention is applied
        out = object.__new__(cls)
        object.__setattr__(out, "q", -q if q[0] < 0.0 else q)
        return out

    @classmethod
    def from_rotvec(cls, phi: Sequence[float]) -> "UnitRotation":
        """Exponential map: rotation of ``|phi|`` radians about ``phi``."""
        x, y, z = (float(c) for c in np.asarray(phi, dtype=float).reshape(3))
        angle = math.sqrt(x * x + y * y + z * z)
        if angle < 1e-8:
            # second-order series keeps the map smooth through zero
            return cls(np.array([1.0 - 0.125 * angle * angle, 0.5 * x, 0.5 * y, 0.5 * z]))
        k = math.sin(0.5 * angle) / angle
        return cls._unit(np.array([math.cos(0.5 * angle), k * x, k * y, k * z]))

    @classmethod
    def from_ypr(cls, yaw: float, pitch: float = 0.0, roll: float = 0.0) -> "UnitRotation":
        """Z-Y-X intrinsic Euler angles in radians."""
        cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
        cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
        cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
        return cls(np.array([
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "UnitRotation":
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0.0:
            s = 2.0 * math.sqrt(tr + 1.0)
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        return cls(np.array(q))

    def __mul__(self, other: "UnitRotation") -> "UnitRotation":
        q = _qmul(self.q, other.q)
        return UnitRotation._unit(q / math.sqrt(q @ q))

    def inverse(self) -> "UnitRotation":
        w, x, y, z = self.q
        return UnitRotation(np.array([w, -x, -y, -z]))

    def matrix(self) -> np.ndarray:
        return self._matrix

    @cached_property
    def _matrix(self) -> np.ndarray:
        w, x, y, z = self.q.tolist()
        m = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        m.flags.writeable = False
        return m

    def rotate(self, v: Sequence[float]) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=float)

    def rotvec(self) -> np.ndarray:
        """Logarithm map, inverse of :meth:`from_rotvec` (angle in [0, pi])."""
        w = self.q[0]
        xyz = self.q[1:]
        s = float(np.sqrt(xyz @ xyz))
        if s < 1e-8:
            return 2.0 * xyz / w
        return (2.0 * math.atan2(s, w) / s) * xyz

    def angle(self) -> float:
        return float(np.linalg.norm(self.rotvec()))

    def ypr(self) -> tuple[float, float, float]:
        w, x, y, z = self.q
        yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
        pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
        roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
        return yaw, pitch, roll

    def __repr__(self) -> str:
        return f"UnitRotation(q={np.array2string(self.q, precision=6)})"


@dataclass(frozen=True, eq=False)
class Pose:
    """Translation ``t`` (meters) and rotation ``r``."""

    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: UnitRotation = field(default_factory=UnitRotation)

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3).copy())
        if not isinstance(self.r, UnitRotation):
            object.__setattr__(self, "r", UnitRotation(self.r))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_xyz_ypr(cls, xyz: Sequence[float], yaw: float = 0.0, pitch: float = 0.0,
                     roll: float = 0.0) -> "Pose":
        return cls(np.asarray(xyz, dtype=float), UnitRotation.from_ypr(yaw, pitch, roll))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r.matrix()
        m[:3, 3] = self.t
        return m

    def __repr__(self) -> str:
        return f"Pose(t={np.array2string(self.t, precision=6)}, r={self.r!r})"


def normalize(q: Sequence[float]) -> UnitRotation:
    """Return the canonical unit rotation for a rotation-like 4-vector."""
    return UnitRotation(np.asarray(q, dtype=float))


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.t + a.r.rotate(b.t), a.r * b.r)


def inverse(a: Pose) -> Pose:
    r_inv = a.r.inverse()
    return Pose(-r_inv.rotate(a.t), r_inv)


def between(a: Pose, b: Pose) -> Pose:
    """Relative pose ``d`` with ``compose(a, d) == b``."""
    return compose(inverse(a), b)


def translation_distance(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.t - b.t))


def rotation_distance(a: UnitRotation, b: UnitRotation) -> float:
    """Angle in radians of the rotation taking ``a`` to ``b``."""
    return (a.inverse() * b).angle()


def skew(v: Sequence[float]) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float).reshape(3).tolist()
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    """Inverse left Jacobian of SO(3) at rotation vector ``phi``."""
    angle = float(np.linalg.norm(phi))
    k = skew(phi)
    if angle < 1e-6:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    half = 0.5 * angle
    coef = (1.0 - half / math.tan(half)) / (angle * angle)
    return np.eye(3) - 0.5 * k + coef * (k @ k)
