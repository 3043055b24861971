"""Odometry stream messages and the supervised stream lifecycle.

Lifecycle::

    Initializing -> Healthy <-> Suspect -> Failed -> Reinitializing -> Initializing

A Healthy or Initializing stream also fails directly on a hard check
failure. Every status operation returns a new :class:`StreamStatus`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from hero_mux.geometry import Pose
from hero_mux.state import CovarianceBlock

if TYPE_CHECKING:
    from hero_mux.health import CheckResult

# guards stamp comparisons against decimal rounding of tick times
TIME_EPS = 1e-9


class IllegalTransition(RuntimeError):
    pass


class StreamState(str, Enum):
    INITIALIZING = "Initializing"
    HEALTHY = "Healthy"
    SUSPECT = "Suspect"
    FAILED = "Failed"
    REINITIALIZING = "Reinitializing"


class StreamKind(str, Enum):
    POSE = "pose"
    POSE_VELOCITY = "pose+velocity"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class SensorStats:
    """Sensor-level health statistics attached to a message."""

    output_rate: float
    intensity_mean: float = 0.5
    intensity_var: float = 0.05
    invalid_fraction: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.output_rate, self.intensity_mean, self.intensity_var, self.invalid_fraction)
        if not all(np.isfinite(vals)):
            raise ValueError("sensor stats must be finite")
        if not (0.0 <= self.intensity_mean <= 1.0 and 0.0 <= self.invalid_fraction <= 1.0):
            raise ValueError("intensity_mean and invalid_fraction must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class OdometryMessage:
    """One stamped output of one stream.

    ``pose`` is expressed in the stream's local frame, whose origin is the
    robot pose at the last (re-)initialization. ``velocity`` and
    ``angular_velocity`` are body-frame.
    """

    stream_id: str
    stamp: float
    pose: Optional[Pose] = None
    velocity: Optional[np.ndarray] = None
    angular_velocity: Optional[np.ndarray] = None
    covariance: Optional[CovarianceBlock] = None
    sensor_stats: Optional[SensorStats] = None
    init_epoch: int = 0

    def __post_init__(self) -> None:
        if self.pose is None and self.velocity is None:
            raise ValueError("a message needs a pose, a velocity or both")
        if self.velocity is not None:
            object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3))
        if self.angular_velocity is not None:
            object.__setattr__(self, "angular_velocity",
                               np.asarray(self.angular_velocity, dtype=float).reshape(3))


@dataclass(frozen=True)
class LifecycleConfig:
    suspect_grace: float = 0.5
    recover_window: float = 1.0
    reinit_delay: float = 1.0


@dataclass(frozen=True)
class StreamStatus:
    stream_id: str
    state: StreamState = StreamState.HEALTHY
    last_msg_stamp: float = 0.0
    failure_reason: Optional[str] = None
    init_epoch: int = 0
    suspect_since: Optional[float] = None
    probation_since: Optional[float] = None
    reinit_commanded_at: Optional[float] = None

    @property
    def eligible(self) -> bool:
        return self.state is StreamState.HEALTHY


def _worst(verdicts: Iterable["CheckResult"]) -> Optional["CheckResult"]:
    worst = None
    for v in verdicts:
        if worst is None or v.verdict > worst.verdict:
            worst = v
    return worst


def ingest(status: StreamStatus, msg: Optional[OdometryMessage], verdicts: Iterable["CheckResult"],
           cfg: LifecycleConfig = LifecycleConfig(), now: Optional[float] = None) -> StreamStatus:
    """Advance a stream's status with the verdicts computed for ``msg``.

    ``msg`` may be ``None`` for tick-level evaluations (rate check) where no
    message arrived; ``now`` then gives the evaluation time.
    """
    from hero_mux.health import Verdict

    if status.state in (StreamState.REINITIALIZING, StreamState.FAILED):
        raise IllegalTransition(f"{status.stream_id}: cannot ingest while {status.state.value}")
    if msg is not None:
        if msg.stream_id != status.stream_id:
            raise ValueError(f"message for {msg.stream_id!r} given to {status.stream_id!r}")
        if msg.init_epoch < status.init_epoch:
            raise IllegalTransition(f"{status.stream_id}: stale epoch {msg.init_epoch}")
        status = replace(status, last_msg_stamp=max(status.last_msg_stamp, msg.stamp),
                         init_epoch=msg.init_epoch)
        if now is None:
            now = msg.stamp
    if now is None:
        raise ValueError("now is required when no message is given")

    worst = _worst(verdicts)
    level = Verdict.PASS if worst is None else worst.verdict
    reason = None if worst is None else worst.check_id.value

    if level is Verdict.HARD_FAIL:
        return replace(status, state=StreamState.FAILED, failure_reason=reason,
                       suspect_since=None, probation_since=None)

    state = status.state
    if state is StreamState.INITIALIZING:
        if level is Verdict.SOFT_FAIL:
            return replace(status, probation_since=now, failure_reason=reason)
        since = status.probation_since if status.probation_since is not None else now
        if now - since >= cfg.recover_window - TIME_EPS:
            return replace(status, state=StreamState.HEALTHY, probation_since=None, failure_reason=None)
        return replace(status, probation_since=since)

    # a tick without a message carries no evidence that clears a suspicion
    suspected = level is Verdict.SOFT_FAIL or (msg is None and state is StreamState.SUSPECT)
    if suspected:
        if level is not Verdict.SOFT_FAIL:
            reason = status.failure_reason
        since = status.suspect_since if state is StreamState.SUSPECT else now
        if now - since > cfg.suspect_grace + TIME_EPS:
            return replace(status, state=StreamState.FAILED, failure_reason=reason, suspect_since=None)
        return replace(status, state=StreamState.SUSPECT, suspect_since=since, failure_reason=reason)

    return replace(status, state=StreamState.HEALTHY, suspect_since=None, failure_reason=None)


def command_reinit(status: StreamStatus, now: float) -> StreamStatus:
    if status.state is not StreamState.FAILED:
        raise IllegalTransition(f"{status.stream_id}: reinit requires Failed, got {status.state.value}")
    return replace(status, state=StreamState.REINITIALIZING, reinit_commanded_at=now)


def complete_reinit(status: StreamStatus, msg: OdometryMessage) -> StreamStatus:
    """First message of a new epoch ends re-initialization and starts probation."""
    if status.state is not StreamState.REINITIALIZING:
        raise IllegalTransition(f"{status.stream_id}: not re-initializing")
    if msg.init_epoch <= status.init_epoch:
        raise IllegalTransition(f"{status.stream_id}: epoch {msg.init_epoch} did not advance")
    return replace(status, state=StreamState.INITIALIZING, init_epoch=msg.init_epoch,
                   last_msg_stamp=msg.stamp, probation_since=msg.stamp, failure_reason=None,
                   reinit_commanded_at=None)
