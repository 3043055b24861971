"""Confidence checks on odometry streams.

Every check is a pure function returning a :class:`CheckResult`. Thresholds
are inclusive: a value exactly at its bound passes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum, IntEnum
from typing import Sequence

import numpy as np

from hero_mux.state import CovarianceBlock, RobotState, validate_psd
from hero_mux.streams import TIME_EPS, OdometryMessage, SensorStats


class EpochMismatch(ValueError):
    """Jump baseline and message belong to different stream epochs."""


class InsufficientStreams(ValueError):
    """Voting needs at least three streams; the check is skipped, not failed."""


class CheckId(str, Enum):
    RATE = "Rate"
    JUMP = "Jump"
    DIVERGENCE = "Divergence"
    SENSOR_DATA = "SensorData"
    VOTE = "Vote"


class Verdict(IntEnum):
    PASS = 0
    SOFT_FAIL = 1
    HARD_FAIL = 2

    @property
    def label(self) -> str:
        return ("Pass", "SoftFail", "HardFail")[self]


@dataclass(frozen=True)
class CheckResult:
    check_id: CheckId
    verdict: Verdict
    detail: float

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS


@dataclass(frozen=True)
class CheckConfig:
    nominal_rate: float = 20.0
    gap_factor: float = 3.0
    v_max: float = 3.0
    jump_margin: float = 0.1
    cov_trace_max: float = 0.5
    intensity_min: float = 0.1
    intensity_var_min: float = 0.005
    invalid_fraction_max: float = 0.5
    vote_k: float = 3.0
    mad_floor: float = 0.05

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"CheckConfig.{f.name} must be positive")
        if self.gap_factor < 1:
            raise ValueError("CheckConfig.gap_factor must be >= 1")

    @property
    def period(self) -> float:
        return 1.0 / self.nominal_rate


def rate_check(last_stamp: float, now: float, cfg: CheckConfig) -> CheckResult:
    if now < last_stamp - TIME_EPS:
        raise ValueError("now precedes the last message stamp")
    gap = now - last_stamp
    soft_bound = cfg.gap_factor * cfg.period
    if gap <= soft_bound + TIME_EPS:
        verdict = Verdict.PASS
    elif gap <= 2.0 * soft_bound + TIME_EPS:
        verdict = Verdict.SOFT_FAIL
    else:
        verdict = Verdict.HARD_FAIL
    return CheckResult(CheckId.RATE, verdict, gap)


def jump_check(prev: RobotState, msg: OdometryMessage, cfg: CheckConfig, prev_epoch: int | None = None) -> CheckResult:
    """Flag position changes faster than the platform can move.

    ``prev`` is the previous accepted sample of the same stream; pass its
    epoch as ``prev_epoch`` so samples across a re-initialization are never
    compared.
    """
    if msg.pose is None:
        raise ValueError("jump_check needs a message with a pose")
    if prev_epoch is not None and prev_epoch != msg.init_epoch:
        raise EpochMismatch(f"baseline epoch {prev_epoch} != message epoch {msg.init_epoch}")
    dt = msg.stamp - prev.stamp
    if dt <= 0:
        raise ValueError("message must be newer than the baseline")
    step = float(np.linalg.norm(msg.pose.t - prev.p))
    bound = cfg.v_max * dt + cfg.jump_margin
    verdict = Verdict.PASS if step <= bound + TIME_EPS else Verdict.HARD_FAIL
    return CheckResult(CheckId.JUMP, verdict, step)


def divergence_check(cov: CovarianceBlock, cfg: CheckConfig) -> CheckResult:
    validate_psd(cov.position, "position covariance")
    trace = cov.position_trace()
    verdict = Verdict.PASS if trace <= cfg.cov_trace_max else Verdict.HARD_FAIL
    return CheckResult(CheckId.DIVERGENCE, verdict, trace)


def sensor_data_check(stats: SensorStats, cfg: CheckConfig) -> CheckResult:
    """Soft-fail on degraded sensor data; ``detail`` counts violated limits."""
    violations = sum((
        stats.output_rate < cfg.nominal_rate / cfg.gap_factor,
        stats.intensity_mean < cfg.intensity_min,
        stats.intensity_var < cfg.intensity_var_min,
        stats.invalid_fraction > cfg.invalid_fraction_max,
    ))
    verdict = Verdict.SOFT_FAIL if violations else Verdict.PASS
    return CheckResult(CheckId.SENSOR_DATA, verdict, float(violations))


def voting_check(states: Sequence[tuple[str, Sequence[float]]], cfg: CheckConfig) -> dict[str, CheckResult]:
    """Flag streams whose body-frame velocity is an outlier against the rest.

    Per axis, a stream is flagged when its distance to the median exceeds
    ``vote_k * max(MAD, mad_floor)``. ``detail`` is the worst normalized
    deviation over the three axes.
    """
    if len(states) < 3:
        raise InsufficientStreams(f"voting needs >= 3 streams, got {len(states)}")
    ids = [s for s, _ in states]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate stream ids in vote")
    v = np.array([np.asarray(vel, dtype=float).reshape(3) for _, vel in states])
    med = np.median(v, axis=0)
    dev = np.abs(v - med)
    mad = np.median(dev, axis=0)
    scale = np.maximum(mad, cfg.mad_floor)
    score = np.max(dev / scale, axis=1)
    out = {}
    for sid, s in zip(ids, score):
        verdict = Verdict.HARD_FAIL if s > cfg.vote_k else Verdict.PASS
        out[sid] = CheckResult(CheckId.VOTE, verdict, float(s))
    return out
