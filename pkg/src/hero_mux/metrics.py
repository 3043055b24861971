"""Run metrics computed from telemetry alone."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from hero_mux.telemetry import Telemetry

TOL = 1e-6


@dataclass
class FailureDetection:
    stream: str
    mode: str
    t_start: float
    latency: Optional[float]
    first_flag: Optional[float]


@dataclass
class MetricsReport:
    ticks: int
    availability: float
    max_discontinuity: float
    continuity_violations: int
    rmse_position: Optional[float]
    detection_latency: list[FailureDetection]
    switch_count: int
    reinit_count: int
    landed_safely: bool
    landing_started: Optional[float]
    final_descent_rate: Optional[float]
    stream_availability: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _first_stamp(stamps: np.ndarray, mask: np.ndarray) -> Optional[float]:
    idx = np.flatnonzero(mask)
    return None if idx.size == 0 else float(stamps[idx[0]])


def compute_metrics(tel: Telemetry) -> MetricsReport:
    meta = tel.meta
    stamps = tel.column("stamp")
    n = len(stamps)
    dt = 1.0 / float(meta["tick_rate"])
    q_p = tel.column("q_p") == 1

    out = np.column_stack([tel.column(c) for c in ("out_px", "out_py", "out_pz")])
    gt = np.column_stack([tel.column(c) for c in ("gt_px", "gt_py", "gt_pz")])
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1) if n > 1 else np.zeros(0)
    bound = float(meta["v_max"]) * dt + TOL

    rmse = None
    if q_p.any():
        err = np.sum((out[q_p] - gt[q_p]) ** 2, axis=1)
        rmse = float(math.sqrt(float(np.mean(err))))

    detections = []
    for f in meta.get("failures", []):
        sid = f["stream"]
        if sid not in tel.stream_ids:
            detections.append(FailureDetection(sid, f["mode"], f["t_start"], None, None))
            continue
        verdict = np.array(tel.text(f"{sid}_verdict"))
        after = stamps >= f["t_start"] - 1e-9
        hard = _first_stamp(stamps, after & (verdict == "HardFail"))
        flag = _first_stamp(stamps, after & (verdict != "Pass"))
        detections.append(FailureDetection(
            sid, f["mode"], f["t_start"],
            None if hard is None else hard - f["t_start"],
            None if flag is None else flag - f["t_start"]))

    channels = tel.text("channel")
    switches = sum(1 for a, b in zip(channels[:-1], channels[1:]) if a != b)

    behavior = tel.text("behavior")
    landing_started = None
    for s, b in zip(stamps, behavior):
        if b == "AttitudeLand":
            landing_started = float(s)
            break
    gz = tel.column("gt_pz")
    gvz = tel.column("gt_vz")
    final_rate = None
    landed = bool(behavior) and behavior[-1] == "Landed"
    if landed:
        airborne = np.flatnonzero(gz > 0.0)
        if airborne.size:
            final_rate = float(-gvz[airborne[-1]])
    landed_safely = (landed and final_rate is not None and gz[-1] <= float(meta["ground_threshold"])
                     and final_rate <= float(meta["landing_rate_limit"]) + 1e-9)

    stream_avail = {sid: float(np.mean(np.array(tel.text(f"{sid}_state")) == "Healthy")) if n else 0.0
                    for sid in tel.stream_ids}
    return MetricsReport(
        ticks=n,
        availability=float(np.mean(q_p)) if n else 0.0,
        max_discontinuity=float(steps.max()) if steps.size else 0.0,
        continuity_violations=int(np.sum(steps > bound)),
        rmse_position=rmse,
        detection_latency=detections,
        switch_count=switches,
        reinit_count=len(tel.events_of("reinit_command")),
        landed_safely=bool(landed_safely),
        landing_started=landing_started,
        final_descent_rate=final_rate,
        stream_availability=stream_avail,
    )
