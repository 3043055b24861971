"""Command line front end: run scenarios, validate configs, recompute metrics."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from hero_mux.metrics import compute_metrics
from hero_mux.sim.engine import run_scenario
from hero_mux.sim.scenario import ConfigError, bundled_scenarios, load_scenario
from hero_mux.telemetry import read_telemetry

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

log = logging.getLogger("hero_mux")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hero-mux", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more scenarios and write telemetry and metrics")
    run.add_argument("--scenario", action="append", required=True,
                     help="bundled scenario name or JSON path; repeat for a batch")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--ticks", type=int, help="stop after this many ticks")
    run.add_argument("--real-time", action="store_true", help="pace the loop at simulated time")

    val = sub.add_parser("validate", help="check scenario files without running them")
    val.add_argument("--scenario", action="append", required=True)

    met = sub.add_parser("metrics", help="recompute metrics.json from a run directory")
    met.add_argument("--out", required=True, type=Path, help="directory holding telemetry.csv and events.jsonl")

    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return p


def _run_one(ref: str, out: Path, seed: Optional[int], ticks: Optional[int], real_time: bool) -> int:
    cfg = load_scenario(ref, seed=seed)
    log.info("running %s (seed %d)", cfg.name, cfg.seed)
    tel = run_scenario(cfg, max_ticks=ticks, real_time=real_time)
    tel.write(out)
    report = compute_metrics(tel)
    (out / "metrics.json").write_text(report.to_json())
    if tel.violations:
        (out / "violations.json").write_text(json.dumps(tel.violations, indent=2) + "\n")
        first = tel.violations[0]
        print(f"{cfg.name}: {len(tel.violations)} invariant violation(s), first {first}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"{cfg.name}: availability={report.availability:.4f} max_discontinuity={report.max_discontinuity:.4g} m "
          f"switches={report.switch_count} reinits={report.reinit_count} -> {out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("HERO_MUX_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name in bundled_scenarios():
                print(name)
            return EXIT_OK
        if args.command == "validate":
            for ref in args.scenario:
                cfg = load_scenario(ref)
                print(f"{ref}: ok ({cfg.name}, {len(cfg.streams)} streams, {cfg.n_ticks} ticks)")
            return EXIT_OK
        if args.command == "metrics":
            report = compute_metrics(read_telemetry(args.out))
            (args.out / "metrics.json").write_text(report.to_json())
            print(report.to_json(), end="")
            return EXIT_OK
        code = EXIT_OK
        batch = len(args.scenario) > 1
        for ref in args.scenario:
            out = args.out / Path(ref).stem if batch else args.out
            code = max(code, _run_one(ref, out, args.seed, args.ticks, args.real_time))
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
