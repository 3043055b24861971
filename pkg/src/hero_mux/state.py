"""Robot state, per-block quality bits and covariance blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from hero_mux.geometry import Pose, UnitRotation


class InvalidCovariance(ValueError):
    """A covariance block is not symmetric positive semi-definite."""


class Quality(str, Enum):
    GOOD = "Good"
    BAD = "Bad"

    def __bool__(self) -> bool:
        return self is Quality.GOOD


def _vec3(x) -> np.ndarray:
    if x is None:
        return np.zeros(3)
    return np.array(x, dtype=float).reshape(3)


@dataclass(frozen=True, eq=False)
class RobotState:
    """Full kinematic state.

    ``p`` and ``r`` are expressed in the world frame; ``v``, ``w`` (angular
    rate), ``a`` and ``alpha`` are expressed in the body frame.
    """

    stamp: float
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: UnitRotation = field(default_factory=UnitRotation)
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        for name in ("p", "v", "w", "a", "alpha"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        if not np.isfinite(self.stamp):
            raise ValueError("stamp must be finite")

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.r)

    @property
    def v_world(self) -> np.ndarray:
        return self.r.rotate(self.v)

    @property
    def a_world(self) -> np.ndarray:
        return self.r.rotate(self.a)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, n))) for n in ("p", "v", "w", "a", "alpha"))


@dataclass(frozen=True)
class StateQuality:
    """Binary quality of the five state blocks used to pick a mobility service.

    ``q_gz`` is the height above the take-off plane and ``q_att`` covers
    attitude, angular rate and both accelerations together.
    """

    q_p: Quality = Quality.GOOD
    q_gz: Quality = Quality.GOOD
    q_vxy: Quality = Quality.GOOD
    q_vz: Quality = Quality.GOOD
    q_att: Quality = Quality.GOOD

    def __post_init__(self) -> None:
        for name in ("q_p", "q_gz", "q_vxy", "q_vz", "q_att"):
            object.__setattr__(self, name, Quality(getattr(self, name)))

    @classmethod
    def all_good(cls) -> "StateQuality":
        return cls()

    @classmethod
    def all_bad(cls) -> "StateQuality":
        return cls(*([Quality.BAD] * 5))

    @classmethod
    def from_bits(cls, bits) -> "StateQuality":
        """Build from five truthy values, ``True`` meaning Good."""
        bits = list(bits)
        if len(bits) != 5:
            raise ValueError("exactly five quality bits are required")
        return cls(*(Quality.GOOD if b else Quality.BAD for b in bits))

    def bits(self) -> tuple[bool, ...]:
        return (self.q_p is Quality.GOOD, self.q_gz is Quality.GOOD, self.q_vxy is Quality.GOOD,
                self.q_vz is Quality.GOOD, self.q_att is Quality.GOOD)


def worst_quality(a: StateQuality, b: StateQuality) -> StateQuality:
    return StateQuality.from_bits(x and y for x, y in zip(a.bits(), b.bits()))


@dataclass(frozen=True, eq=False)
class CovarianceBlock:
    """3x3 position (m^2) and velocity ((m/s)^2) covariance blocks."""

    position: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self) -> None:
        for name in ("position", "velocity"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3, 3).copy())

    @classmethod
    def isotropic(cls, pos_var: float, vel_var: float = 0.0) -> "CovarianceBlock":
        return cls(np.eye(3) * pos_var, np.eye(3) * vel_var)

    def validate(self) -> "CovarianceBlock":
        for name in ("position", "velocity"):
            validate_psd(getattr(self, name), name)
        return self

    def position_trace(self) -> float:
        return float(np.trace(self.position))


def validate_psd(m: np.ndarray, name: str = "matrix", sym_tol: float = 1e-12,
                 eig_tol: float = 1e-10) -> None:
    if not np.all(np.isfinite(m)):
        raise InvalidCovariance(f"{name} has non-finite entries")
    if np.max(np.abs(m - m.T)) > sym_tol:
        raise InvalidCovariance(f"{name} is not symmetric")
    lo = float(np.linalg.eigvalsh(m).min())
    if lo < -eig_tol:
        raise InvalidCovariance(f"{name} has negative eigenvalue {lo:g}")
