"""Resiliency logic: supervised, ranked, continuity-preserving stream multiplexing.

Each tick the mux checks every stream, advances its lifecycle, commands
re-initialization of streams that just failed, selects a channel and
publishes that channel's estimate spliced onto the previous output through
a per-(stream, epoch) anchor.

Every stream owns a loosely coupled IMU filter, so a channel's estimate is
available at tick rate even between odometry messages. Pose-bearing streams
correct it with their poses; a velocity-only stream only borrows its
attitude and dead-reckons position from the reported velocity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from hero_mux.fusion import (
    FilterState,
    ImuSample,
    LooselyCoupledFilter,
    ProcessNoise,
    height_from_range,
    predict,
    update_height,
)
from hero_mux.geometry import Pose, compose, inverse
from hero_mux.health import (
    CheckConfig,
    CheckResult,
    EpochMismatch,
    Verdict,
    divergence_check,
    jump_check,
    rate_check,
    sensor_data_check,
    voting_check,
)
from hero_mux.mobility import MobilityService, map_quality_to_service
from hero_mux.state import CovarianceBlock, Quality, RobotState, StateQuality
from hero_mux.streams import (
    TIME_EPS,
    LifecycleConfig,
    OdometryMessage,
    StreamKind,
    StreamState,
    StreamStatus,
    command_reinit,
    complete_reinit,
    ingest,
)

log = logging.getLogger(__name__)


class MissingAnchor(KeyError):
    pass


@dataclass(frozen=True)
class Ranking:
    """Stream ids, highest priority first."""

    order: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", tuple(self.order))
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"duplicate stream ids in ranking {self.order}")

    def covers(self, stream_ids: Iterable[str]) -> bool:
        return set(stream_ids) == set(self.order)

    def __iter__(self):
        return iter(self.order)


@dataclass
class AnchorTable:
    """World-from-stream-origin pose per ``(stream_id, init_epoch)``."""

    anchors: dict[tuple[str, int], Pose] = field(default_factory=dict)

    def get(self, stream_id: str, epoch: int) -> Pose:
        try:
            return self.anchors[(stream_id, epoch)]
        except KeyError:
            raise MissingAnchor((stream_id, epoch)) from None

    def with_anchor(self, stream_id: str, epoch: int, anchor: Pose) -> "AnchorTable":
        return AnchorTable({**self.anchors, (stream_id, epoch): anchor})

    def __contains__(self, key) -> bool:
        return key in self.anchors


def select_channel(statuses: Mapping[str, StreamStatus], ranking: Ranking, current: Optional[str],
                   preempt: bool = False) -> Optional[str]:
    """Keep a healthy current channel, else take the best-ranked healthy stream.

    With ``preempt`` the best-ranked healthy stream always wins.
    """
    missing = [s for s in ranking if s not in statuses]
    if missing:
        raise KeyError(f"no status for ranked streams {missing}")
    if not preempt and current is not None and statuses[current].eligible:
        return current
    for sid in ranking:
        if statuses[sid].eligible:
            return sid
    return None


def apply_continuity(anchors: AnchorTable, msg: OdometryMessage) -> Pose:
    if msg.pose is None:
        raise ValueError("apply_continuity needs a message with a pose")
    return compose(anchors.get(msg.stream_id, msg.init_epoch), msg.pose)


def rebase_anchor(anchors: AnchorTable, stream: str, epoch: int, last_output: Pose,
                  first_new_pose: Pose) -> AnchorTable:
    """Anchor the stream so ``first_new_pose`` maps exactly onto ``last_output``."""
    return anchors.with_anchor(stream, epoch, compose(last_output, inverse(first_new_pose)))


@dataclass(frozen=True)
class StreamSetup:
    stream_id: str
    kind: StreamKind
    checks: CheckConfig = field(default_factory=CheckConfig)


@dataclass(frozen=True)
class MuxConfig:
    tick_rate: float = 100.0
    imu_rate: float = 200.0
    v_max: float = 3.0
    lifecycle: LifecycleConfig = field(default_factory=LifecycleConfig)
    vote: CheckConfig = field(default_factory=CheckConfig)
    noise: ProcessNoise = field(default_factory=ProcessNoise)
    att_var: float = 1e-4
    imu_timeout: float = 0.05
    ranger_rate: Optional[float] = None
    ranger_var: float = 0.01 ** 2
    preempt: bool = False

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate


@dataclass(frozen=True, eq=False)
class TickInputs:
    """Everything that arrived for one tick, each list time-ordered.

    IMU samples cover ``[stamp - dt, stamp)``; odometry and ranger samples
    are stamped in ``(stamp - dt, stamp]``.
    """

    stamp: float
    messages: Sequence[OdometryMessage] = ()
    imu: Sequence[ImuSample] = ()
    ranges: Sequence[tuple[float, float]] = ()


@dataclass(frozen=True, eq=False)
class MuxOutput:
    state: RobotState
    quality: StateQuality
    channel: Optional[str]
    reinit_commands: tuple[str, ...]
    service_hint: MobilityService
    events: tuple[dict, ...] = ()


@dataclass(eq=False)
class _Channel:
    setup: StreamSetup
    status: StreamStatus
    fuser: Optional[LooselyCoupledFilter] = None
    vel_pose: Optional[Pose] = None
    last_velocity: Optional[np.ndarray] = None
    baseline: Optional[tuple[RobotState, int]] = None
    product: Optional[Pose] = None
    product_prev: Optional[Pose] = None
    verdicts: list[CheckResult] = field(default_factory=list)
    raw_pose: Optional[Pose] = None
    cov_trace: float = float("nan")

    @property
    def has_pose(self) -> bool:
        return self.setup.kind is not StreamKind.VELOCITY


class ResiliencyMux:
    """Tick-driven supervisor over a ranked set of odometry streams."""

    def __init__(self, streams: Sequence[StreamSetup], ranking: Ranking, initial: RobotState,
                 config: MuxConfig = MuxConfig(), initial_covariance: Optional[np.ndarray] = None):
        ids = [s.stream_id for s in streams]
        if not ranking.covers(ids):
            raise ValueError(f"ranking {ranking.order} does not cover streams {ids}")
        self.config = config
        self.ranking = ranking
        self.anchors = AnchorTable()
        self.channel: Optional[str] = None
        self._anchor_key: Optional[tuple[str, int]] = None

        base = FilterState(p=initial.p, v=initial.v_world, r=initial.r, stamp=initial.stamp)
        if initial_covariance is not None:
            base.P = np.array(initial_covariance, dtype=float)
        self._dr = base.copy()
        self._last_imu_stamp: Optional[float] = initial.stamp
        self._last_range_stamp: Optional[float] = None
        self.output = MuxOutput(initial, StateQuality.all_good(), None, (), MobilityService.GLOBAL)

        self.channels: dict[str, _Channel] = {}
        for s in streams:
            ch = _Channel(s, StreamStatus(s.stream_id, StreamState.HEALTHY, initial.stamp))
            ch.fuser = LooselyCoupledFilter(base.copy(), config.noise, config.att_var)
            ch.product = base.pose
            if not ch.has_pose:
                ch.vel_pose = base.pose
                ch.last_velocity = initial.v.copy()
            self.channels[s.stream_id] = ch

    @property
    def statuses(self) -> dict[str, StreamStatus]:
        return {sid: ch.status for sid, ch in self.channels.items()}

    # -- per-tick pipeline -------------------------------------------------

    def step(self, inputs: TickInputs) -> MuxOutput:
        cfg = self.config
        now = inputs.stamp
        events: list[dict] = []
        for ch in self.channels.values():
            ch.product_prev = ch.product
            ch.verdicts = []

        self._propagate(inputs.imu)
        imu_ok = self._last_imu_stamp is not None and now - self._last_imu_stamp <= cfg.imu_timeout + TIME_EPS
        ranger_ok = self._ranges(inputs.ranges, now)

        fresh: dict[str, OdometryMessage] = {}
        for msg in inputs.messages:
            ch = self.channels.get(msg.stream_id)
            if ch is None:
                raise KeyError(f"message from unknown stream {msg.stream_id!r}")
            self._receive(ch, msg, now, fresh, events)

        self._vote(fresh)

        reinit: list[str] = []
        for sid, ch in self.channels.items():
            st = ch.status
            if st.state in (StreamState.REINITIALIZING, StreamState.FAILED):
                continue
            ch.verdicts.append(rate_check(st.last_msg_stamp if sid not in fresh else fresh[sid].stamp,
                                          now, ch.setup.checks))
            new = ingest(st, fresh.get(sid), ch.verdicts, cfg.lifecycle, now=now)
            if new.state is not st.state:
                events.append({"type": "status", "stream": sid, "from": st.state.value,
                               "to": new.state.value, "reason": new.failure_reason})
            if new.state is StreamState.FAILED:
                new = command_reinit(new, now)
                reinit.append(sid)
                events.append({"type": "reinit_command", "stream": sid, "reason": new.failure_reason})
            ch.status = new

        for ch in self.channels.values():
            self._update_product(ch, inputs)

        prev_channel = self.channel
        self.channel = select_channel(self.statuses, self.ranking, prev_channel, cfg.preempt)
        if self.channel != prev_channel:
            new_cov = None
            if self.channel is not None:
                new_cov = float(np.trace(self.channels[self.channel].fuser.state.P[0:3, 0:3]))
            events.append({"type": "switch", "from": prev_channel, "to": self.channel,
                           "adopted_cov_trace": new_cov})
            log.info("t=%.2f channel %s -> %s", now, prev_channel, self.channel)

        if self.channel is None:
            self._dead_reckon(inputs.imu, inputs.ranges)
        state = self._publish(now)
        quality = self._quality(imu_ok, ranger_ok)
        if not imu_ok:
            state = RobotState(now, self.output.state.p, self.output.state.r)
        self._sync_dead_reckoning(state, now)
        self.output = MuxOutput(state, quality, self.channel, tuple(reinit),
                                map_quality_to_service(quality), tuple(events))
        return self.output

    def _propagate(self, imu: Sequence[ImuSample]) -> None:
        dt = 1.0 / self.config.imu_rate
        for sample in imu:
            for ch in self.channels.values():
                ch.fuser.predict(sample, dt)
            self._last_imu_stamp = sample.stamp + dt

    def _dead_reckon(self, imu: Sequence[ImuSample], ranges: Sequence[tuple[float, float]]) -> None:
        # only needed while no channel is selected; otherwise the DR state is re-synced each tick
        cfg = self.config
        dt = 1.0 / cfg.imu_rate
        for sample in imu:
            self._dr = predict(self._dr, sample, dt, cfg.noise)
        if cfg.ranger_rate is not None:
            for _, rng in ranges:
                self._dr = update_height(self._dr, height_from_range(rng, self._dr.r), cfg.ranger_var)

    def _ranges(self, ranges: Sequence[tuple[float, float]], now: float) -> bool:
        cfg = self.config
        if cfg.ranger_rate is None:
            return False
        for stamp, _ in ranges:
            self._last_range_stamp = stamp
        if self._last_range_stamp is None:
            return False
        return now - self._last_range_stamp <= 3.0 / cfg.ranger_rate + TIME_EPS

    def _receive(self, ch: _Channel, msg: OdometryMessage, now: float, fresh: dict, events: list) -> None:
        st = ch.status
        if st.state is StreamState.REINITIALIZING:
            if msg.init_epoch <= st.init_epoch:
                return
            ch.status = complete_reinit(st, msg)
            ch.baseline = None
            events.append({"type": "reinit_complete", "stream": msg.stream_id, "epoch": msg.init_epoch})
        elif st.state is StreamState.FAILED:
            return
        elif msg.init_epoch > st.init_epoch:
            ch.baseline = None
            events.append({"type": "epoch_reset", "stream": msg.stream_id, "epoch": msg.init_epoch})
        elif msg.init_epoch < st.init_epoch:
            return

        checks = ch.setup.checks
        verdicts = []
        if msg.covariance is not None:
            verdicts.append(divergence_check(msg.covariance, checks))
            ch.cov_trace = msg.covariance.position_trace()
        if msg.sensor_stats is not None:
            verdicts.append(sensor_data_check(msg.sensor_stats, checks))
        if msg.pose is not None and ch.baseline is not None:
            prev, prev_epoch = ch.baseline
            try:
                verdicts.append(jump_check(prev, msg, checks, prev_epoch))
            except EpochMismatch:
                pass
        ch.verdicts.extend(verdicts)
        ch.raw_pose = msg.pose
        fresh[msg.stream_id] = msg
        if any(v.verdict is Verdict.HARD_FAIL for v in verdicts):
            return

        if msg.pose is not None:
            ch.baseline = (RobotState(msg.stamp, msg.pose.t, msg.pose.r), msg.init_epoch)
        if ch.has_pose and msg.pose is not None:
            cov = msg.covariance if msg.covariance is not None else CovarianceBlock.isotropic(1e-4)
            ch.fuser.update(msg.pose, cov, msg.init_epoch)
        if msg.velocity is not None:
            ch.last_velocity = msg.velocity

    def _vote(self, fresh: Mapping[str, OdometryMessage]) -> None:
        voters = [(sid, m.velocity) for sid, m in fresh.items()
                  if m.velocity is not None
                  and self.channels[sid].status.state not in (StreamState.FAILED, StreamState.REINITIALIZING)]
        if len(voters) < 3:
            return
        for sid, result in voting_check(voters, self.config.vote).items():
            self.channels[sid].verdicts.append(result)

    def _update_product(self, ch: _Channel, inputs: TickInputs) -> None:
        if ch.has_pose:
            ch.product = ch.fuser.state.pose
            return
        r = ch.fuser.state.r
        ch.vel_pose = Pose(ch.vel_pose.t + r.rotate(ch.last_velocity) * self.config.dt, r)
        ch.product = ch.vel_pose

    def _publish(self, now: float) -> RobotState:
        if self.channel is None:
            self._anchor_key = None
            s = self._dr.robot_state()
            return RobotState(now, s.p, s.r, s.v, s.w, s.a)

        ch = self.channels[self.channel]
        key = (self.channel, ch.status.init_epoch)
        if key != self._anchor_key or key not in self.anchors:
            first = ch.product_prev if ch.product_prev is not None else ch.product
            self.anchors = rebase_anchor(self.anchors, key[0], key[1], self.output.state.pose, first)
            self._anchor_key = key
        pose = compose(self.anchors.get(*key), ch.product)
        fs = ch.fuser.state.robot_state()
        v = fs.v if ch.has_pose else ch.last_velocity
        return RobotState(now, pose.t, pose.r, v, fs.w, fs.a)

    def _quality(self, imu_ok: bool, ranger_ok: bool) -> StateQuality:
        if not imu_ok:
            return StateQuality.all_bad()
        G, B = Quality.GOOD, Quality.BAD
        ch = self.channels.get(self.channel) if self.channel is not None else None
        if ch is not None and ch.status.state is StreamState.HEALTHY:
            if ch.has_pose:
                return StateQuality(G, G, G, G, G)
            return StateQuality(B, G if ranger_ok else B, G, G, G)
        z = G if ranger_ok else B
        return StateQuality(B, z, B, z, G)

    def _sync_dead_reckoning(self, state: RobotState, now: float) -> None:
        if self.channel is None:
            return
        dr = self._dr
        dr.p = state.p.copy()
        dr.r = state.r
        dr.v = state.v_world
        fs = self.channels[self.channel].fuser.state
        dr.gyro_bias = fs.gyro_bias.copy()
        dr.accel_bias = fs.accel_bias.copy()
        dr.P = fs.P.copy()
        dr.stamp = now
        dr.last_gyro, dr.last_accel = fs.last_gyro, fs.last_accel
