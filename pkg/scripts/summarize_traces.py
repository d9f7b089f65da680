#!/usr/bin/env python3
"""Recompute evaluation metrics from trace_<episode>.csv files alone.

Shares no code with the package, so it serves as an independent check of the
aggregates the harness writes to summary.json.

    python scripts/summarize_traces.py runs/eval_rule
"""
import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path


def episode_metrics(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    speeds = [float(r["ego_v"]) * 3.6 for r in rows]
    return {
        "steps": len(rows),
        "mean_speed": math.fsum(speeds) / len(speeds),
        "distance": float(rows[-1]["ego_s"]),
        "collision": rows[-1]["terminal"] == "collision",
    }


def summarize(run_dir):
    traces = sorted(Path(run_dir).glob("trace_*.csv"), key=lambda p: int(re.findall(r"\d+", p.stem)[-1]))
    if not traces:
        raise FileNotFoundError(f"no trace_*.csv in {run_dir}")
    eps = [episode_metrics(p) for p in traces]
    n = len(eps)
    return {
        "episodes": n,
        "collision_free_pct": 100.0 * sum(not e["collision"] for e in eps) / n,
        "avg_speed_kmh": math.fsum(e["mean_speed"] for e in eps) / n,
        "avg_distance_m": math.fsum(e["distance"] for e in eps) / n,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir")
    ap.add_argument("--check", action="store_true", help="compare against summary.json and exit 1 on mismatch")
    args = ap.parse_args(argv)
    res = summarize(args.run_dir)
    print(json.dumps(res, indent=2))
    if args.check:
        ref = json.loads((Path(args.run_dir) / "summary.json").read_text())
        bad = [k for k in res if res[k] != ref[k]]
        if bad:
            print(f"mismatch: {', '.join(bad)}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
