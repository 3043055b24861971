"""Tick telemetry table and event log, with round-trip CSV/JSONL I/O."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

BASE_COLUMNS = (
    "tick", "stamp",
    "gt_px", "gt_py", "gt_pz", "gt_vx", "gt_vy", "gt_vz", "gt_yaw",
    "out_px", "out_py", "out_pz", "out_vx", "out_vy", "out_vz", "out_yaw",
    "q_p", "q_gz", "q_vxy", "q_vz", "q_att",
    "channel", "service", "behavior", "loops",
)
STREAM_FIELDS = ("state", "epoch", "raw_px", "raw_py", "raw_pz", "verdict", "check", "cov_trace")
INT_FIELDS = {"tick", "q_p", "q_gz", "q_vxy", "q_vz", "q_att"}
TEXT_FIELDS = {"channel", "service", "behavior", "loops"}
STREAM_INT = {"epoch"}
STREAM_TEXT = {"state", "verdict", "check"}


def stream_columns(stream_id: str) -> list[str]:
    return [f"{stream_id}_{f}" for f in STREAM_FIELDS]


def columns_for(stream_ids: Sequence[str]) -> list[str]:
    cols = list(BASE_COLUMNS)
    for sid in stream_ids:
        cols.extend(stream_columns(sid))
    return cols


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return format(float(v), ".17g")
    return str(v)


@dataclass
class Telemetry:
    """Per-tick rows plus a sparse event log.

    ``meta`` carries the scenario facts metrics need (stream ids, v_max,
    tick rate, injected failures); it is also written as the first event.
    """

    stream_ids: list[str]
    rows: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    violations: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return columns_for(self.stream_ids)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        """Numeric column as float array, NaN where empty."""
        return np.array([np.nan if r.get(name) is None else float(r[name]) for r in self.rows])

    def text(self, name: str) -> list[str]:
        return ["" if r.get(name) is None else str(r[name]) for r in self.rows]

    def events_of(self, kind: str) -> list[dict]:
        return [e for e in self.events if e.get("type") == kind]

    # -- serialization -----------------------------------------------------

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for r in self.rows:
            w.writerow([format_value(r.get(c)) for c in cols])
        return buf.getvalue()

    def events_text(self) -> str:
        lines = [json.dumps({"type": "scenario", "stamp": 0.0, **self.meta}, sort_keys=True)]
        lines.extend(json.dumps(e, sort_keys=True) for e in self.events)
        return "\n".join(lines) + "\n"

    def write(self, out_dir: Union[str, Path]) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tpath, epath = out / "telemetry.csv", out / "events.jsonl"
        tpath.write_text(self.csv_text())
        epath.write_text(self.events_text())
        return tpath, epath


def _parse(col: str, raw: str, stream_ids: Iterable[str]):
    if raw == "":
        return None
    base = col
    for sid in stream_ids:
        if col.startswith(sid + "_") and col[len(sid) + 1:] in STREAM_FIELDS:
            base = col[len(sid) + 1:]
            if base in STREAM_TEXT:
                return raw
            if base in STREAM_INT:
                return int(raw)
            return float(raw)
    if base in TEXT_FIELDS:
        return raw
    if base in INT_FIELDS:
        return int(raw)
    return float(raw)


def read_telemetry(out_dir: Union[str, Path], meta: Optional[dict] = None) -> Telemetry:
    """Load ``telemetry.csv`` and ``events.jsonl`` written by :meth:`Telemetry.write`."""
    out = Path(out_dir)
    events = []
    with open(out / "events.jsonl") as fh:
        for line in fh:
            if line.strip():
                events.append(json.loads(line))
    scen = [e for e in events if e.get("type") == "scenario"]
    if meta is None:
        if not scen:
            raise ValueError(f"{out / 'events.jsonl'} has no scenario record")
        meta = {k: v for k, v in scen[0].items() if k not in ("type", "stamp")}
    events = [e for e in events if e.get("type") != "scenario"]
    stream_ids = list(meta.get("streams", []))
    with open(out / "telemetry.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != columns_for(stream_ids):
            raise ValueError("telemetry header does not match the scenario streams")
        rows = [{c: _parse(c, v, stream_ids) for c, v in zip(header, line)} for line in reader]
    return Telemetry(stream_ids, rows, events, meta)
