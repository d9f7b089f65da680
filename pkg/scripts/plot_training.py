#!/usr/bin/env python3
"""Turn a training metrics.csv into learning-curve data: per-episode reward
and steps with a trailing moving average. Output is CSV; render it with any
plotting tool (a PNG is drawn too when matplotlib is importable and --png is
given).

    python scripts/plot_training.py runs/train/metrics.csv --window 10
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np


def moving_average(x, window):
    x = np.asarray(x, float)
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty_like(x)
    for i in range(len(x)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("metrics")
    ap.add_argument("--window", type=int, default=10)
    ap.add_argument("--out", help="output CSV (default: curves.csv next to the metrics file)")
    ap.add_argument("--png", action="store_true")
    args = ap.parse_args(argv)

    with open(args.metrics, newline="") as f:
        rows = list(csv.DictReader(f))
    ep = [int(r["episode"]) for r in rows]
    reward = [float(r["reward"]) for r in rows]
    steps = [int(r["steps"]) for r in rows]
    r_ma, s_ma = moving_average(reward, args.window), moving_average(steps, args.window)
    out = Path(args.out) if args.out else Path(args.metrics).with_name("curves.csv")
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["episode", "reward", "reward_ma", "steps", "steps_ma"])
        for row in zip(ep, reward, r_ma, steps, s_ma):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    print(f"wrote {out}")
    if args.png:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not available; skipped the PNG", file=sys.stderr)
            return 0
        fig, axes = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
        for ax, raw, ma, label in ((axes[0], reward, r_ma, "episode reward"), (axes[1], steps, s_ma, "steps")):
            ax.plot(ep, raw, alpha=0.3)
            ax.plot(ep, ma)
            ax.set_ylabel(label)
        axes[1].set_xlabel("episode")
        fig.tight_layout()
        fig.savefig(out.with_suffix(".png"), dpi=120)
    return 0


if __name__ == "__main__":
    sys.exit(main())
