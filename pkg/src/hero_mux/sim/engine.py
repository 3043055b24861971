"""Deterministic tick loop: vehicle, sensors, mux and behaviors in closed loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from hero_mux.fusion import ProcessNoise
from hero_mux.geometry import Pose
from hero_mux.health import Verdict
from hero_mux.mobility import Behavior, BehaviorState, behavior_step
from hero_mux.mux import MuxConfig, MuxOutput, Ranking, ResiliencyMux, StreamSetup, TickInputs
from hero_mux.sim.scenario import ScenarioConfig
from hero_mux.sim.sensors import (
    FailureMode,
    simulate_imu,
    simulate_range,
    simulate_stream,
    substream,
)
from hero_mux.sim.trajectory import ground_truth, reference
from hero_mux.sim.vehicle import Vehicle
from hero_mux.state import RobotState
from hero_mux.streams import StreamState
from hero_mux.telemetry import Telemetry

log = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-6
LOOP_BITS = {"p": 0, "gz": 1, "vxy": 2, "vz": 3, "att": 4}
YAW_GAIN = 1.0


@dataclass
class _StreamRun:
    """Simulator-side state of one odometry algorithm."""

    spec: object
    rng: np.random.Generator
    every: int
    reset_every: Optional[int]
    failures: tuple
    origin: Pose
    epoch: int = 0
    epoch_start: float = 0.0
    reinit_at: Optional[float] = None

    def restart(self, gt: RobotState) -> None:
        self.epoch += 1
        self.origin = gt.pose
        self.epoch_start = gt.stamp
        self.reinit_at = None


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _ticks(rate_ratio: float) -> int:
    return int(round(rate_ratio))


def _gapped(failures, t: float) -> bool:
    return any(f.mode is FailureMode.GAP and f.active(t) for f in failures)


def build_mux(cfg: ScenarioConfig, initial: RobotState) -> ResiliencyMux:
    imu_dt = 1.0 / cfg.imu.rate
    noise = ProcessNoise(accel=max(cfg.imu.accel_sigma * math.sqrt(imu_dt), 1e-3),
                         gyro=max(cfg.imu.gyro_sigma * math.sqrt(imu_dt), 1e-4),
                         accel_bias_rw=cfg.imu_bias_rw[0], gyro_bias_rw=cfg.imu_bias_rw[1])
    mcfg = MuxConfig(tick_rate=cfg.tick_rate, imu_rate=cfg.imu.rate, v_max=cfg.v_max, lifecycle=cfg.lifecycle,
                     vote=cfg.vote, noise=noise,
                     ranger_rate=None if cfg.ranger is None else cfg.ranger.rate,
                     ranger_var=(0.01 if cfg.ranger is None else cfg.ranger.sigma) ** 2,
                     preempt=cfg.preempt)
    setups = [StreamSetup(s.stream_id, s.kind, cfg.checks[s.stream_id]) for s in cfg.streams]
    return ResiliencyMux(setups, Ranking(cfg.ranking), initial, mcfg)


def scenario_meta(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "seed": cfg.seed,
        "tick_rate": cfg.tick_rate,
        "duration": cfg.duration,
        "v_max": cfg.v_max,
        "streams": [s.stream_id for s in cfg.streams],
        "ranking": list(cfg.ranking),
        "landing_rate_limit": cfg.behavior.landing_rate_limit,
        "ground_threshold": cfg.behavior.ground_threshold,
        "safety_timeout": cfg.behavior.safety_timeout,
        "failures": [{"stream": f.stream_id, "mode": f.mode.value, "t_start": f.t_start, "t_end": f.t_end}
                     for f in cfg.failures],
    }


def run_scenario(cfg: ScenarioConfig, max_ticks: Optional[int] = None, real_time: bool = False) -> Telemetry:
    """Run ``cfg`` and return its telemetry.

    Invariant breaches (output discontinuity, unhealthy channel, loops
    closed on Bad state blocks) are collected in ``Telemetry.violations``.
    """
    dt = 1.0 / cfg.tick_rate
    imu_dt = 1.0 / cfg.imu.rate
    n_sub = _ticks(cfg.imu.rate / cfg.tick_rate)
    n_ticks = cfg.n_ticks if max_ticks is None else min(cfg.n_ticks, max_ticks)

    gt0 = ground_truth(cfg.trajectory, 0.0)
    vehicle = Vehicle(gt0.p.copy(), gt0.v_world, yaw=gt0.r.ypr()[0], cfg=cfg.vehicle)
    mux = build_mux(cfg, gt0)
    mission = reference(cfg.trajectory)

    runs: dict[str, _StreamRun] = {}
    for s in cfg.streams:
        reset_every = None if s.reset_period is None else _ticks(s.reset_period * cfg.tick_rate)
        runs[s.stream_id] = _StreamRun(
            spec=s, rng=substream(cfg.seed, s.stream_id), every=_ticks(cfg.tick_rate / s.rate),
            reset_every=reset_every, failures=tuple(f for f in cfg.failures if f.stream_id == s.stream_id),
            origin=gt0.pose)
    imu_rng = substream(cfg.seed, "imu")
    imu_failures = tuple(f for f in cfg.failures if f.stream_id == "imu")
    ranger_rng = substream(cfg.seed, "ranger")
    ranger_failures = tuple(f for f in cfg.failures if f.stream_id == "ranger")
    ranger_every = None if cfg.ranger is None else _ticks(cfg.tick_rate / cfg.ranger.rate)

    tel = Telemetry([s.stream_id for s in cfg.streams], meta=scenario_meta(cfg))
    behavior = BehaviorState()
    prev_out: Optional[MuxOutput] = None
    wall0 = time.monotonic()

    for k in range(n_ticks):
        t = k * dt
        imu = []
        if k > 0:
            t_prev = (k - 1) * dt
            for j in range(n_sub):
                ts = t_prev + j * imu_dt
                vehicle.limit_speed(imu_dt)
                sample = simulate_imu(vehicle.state(ts), cfg.imu, imu_rng)
                if not _gapped(imu_failures, ts):
                    imu.append(sample)
                vehicle.integrate(imu_dt)
        gt = vehicle.state(t)

        messages, raw = [], {}
        for sid, run in runs.items():
            if k % run.every:
                continue
            if run.reinit_at is not None:
                if t < run.reinit_at + cfg.lifecycle.reinit_delay - 1e-9:
                    continue
                run.restart(gt)
            elif run.reset_every and k > 0 and k % run.reset_every == 0:
                run.restart(gt)
            msg = simulate_stream(gt, run.spec, run.failures, run.origin, run.rng, run.epoch, run.epoch_start)
            if msg is not None:
                messages.append(msg)
                raw[sid] = msg

        ranges = []
        if ranger_every is not None and k % ranger_every == 0:
            r = simulate_range(gt, cfg.ranger, ranger_rng)
            if not _gapped(ranger_failures, t):
                ranges.append((t, r))

        out = mux.step(TickInputs(t, messages, imu, ranges))
        for sid in out.reinit_commands:
            runs[sid].reinit_at = t

        prev_behavior = behavior.active
        behavior, cmd = behavior_step(behavior, out.service_hint, out.state, mission, t, cfg.behavior,
                                      touchdown=vehicle.on_ground, quality=out.quality)
        yaw_rate = 0.0
        if behavior.active is Behavior.WAYPOINT_NAV:
            _, _, _, yaw_ref, yaw_rate_ref = cfg.trajectory.sample(min(t, cfg.duration))
            yaw_rate = yaw_rate_ref + YAW_GAIN * _wrap(yaw_ref - out.state.r.ypr()[0])
        vehicle.apply(cmd, yaw_rate)

        for e in out.events:
            tel.events.append({"stamp": t, **e})
        if behavior.active is not prev_behavior:
            tel.events.append({"stamp": t, "type": "behavior", "from": prev_behavior.value,
                               "to": behavior.active.value, "service": out.service_hint.label})

        tel.rows.append(_row(k, t, gt, out, behavior.active, cmd, mux, raw))
        _check_invariants(tel, k, t, out, prev_out, cmd, mux, cfg.v_max * dt)
        prev_out = out

        if real_time:
            lag = wall0 + t - time.monotonic()
            if lag > 0:
                time.sleep(lag)
    return tel


def _row(k, t, gt: RobotState, out: MuxOutput, behavior: Behavior, cmd, mux: ResiliencyMux, raw) -> dict:
    gv = gt.v_world
    ov = out.state.v_world
    row = {
        "tick": k, "stamp": t,
        "gt_px": gt.p[0], "gt_py": gt.p[1], "gt_pz": gt.p[2],
        "gt_vx": gv[0], "gt_vy": gv[1], "gt_vz": gv[2], "gt_yaw": gt.r.ypr()[0],
        "out_px": out.state.p[0], "out_py": out.state.p[1], "out_pz": out.state.p[2],
        "out_vx": ov[0], "out_vy": ov[1], "out_vz": ov[2], "out_yaw": out.state.r.ypr()[0],
        "channel": out.channel, "service": out.service_hint.label, "behavior": behavior.value,
        "loops": cmd.loops_label(),
    }
    for name, bit in zip(("q_p", "q_gz", "q_vxy", "q_vz", "q_att"), out.quality.bits()):
        row[name] = int(bool(bit))
    for sid, ch in mux.channels.items():
        worst = max(ch.verdicts, key=lambda v: v.verdict, default=None)
        msg = raw.get(sid)
        pose = None if msg is None else msg.pose
        row.update({
            f"{sid}_state": ch.status.state.value,
            f"{sid}_epoch": ch.status.init_epoch,
            f"{sid}_raw_px": None if pose is None else pose.t[0],
            f"{sid}_raw_py": None if pose is None else pose.t[1],
            f"{sid}_raw_pz": None if pose is None else pose.t[2],
            f"{sid}_verdict": Verdict.PASS.label if worst is None else worst.verdict.label,
            f"{sid}_check": "" if worst is None or worst.verdict is Verdict.PASS else worst.check_id.value,
            f"{sid}_cov_trace": None if msg is None or msg.covariance is None else msg.covariance.position_trace(),
        })
    return row


def _check_invariants(tel: Telemetry, k, t, out: MuxOutput, prev: Optional[MuxOutput], cmd, mux, step_max) -> None:
    if prev is not None:
        step = float(np.linalg.norm(out.state.p - prev.state.p))
        if step > step_max + CONTINUITY_TOL:
            tel.violations.append({"tick": k, "stamp": t, "kind": "continuity", "step": step})
    if out.channel is not None and mux.channels[out.channel].status.state is not StreamState.HEALTHY:
        tel.violations.append({"tick": k, "stamp": t, "kind": "channel_unhealthy", "channel": out.channel})
    bits = out.quality.bits()
    bad = sorted(l for l in cmd.loops if not bits[LOOP_BITS[l]])
    if bad:
        tel.violations.append({"tick": k, "stamp": t, "kind": "loop_on_bad_state", "loops": bad})
