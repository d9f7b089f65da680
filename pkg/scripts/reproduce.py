#!/usr/bin/env python3
"""Full pipeline: train with the default configuration (pedestrians walking
0.5-1.5 m/s), then compare the trained agent with the rule baseline on paired
evaluation seeds and report the directional checks.

    python scripts/reproduce.py --out runs/reproduce --seed 0
"""
import argparse
import csv
import json
import sys
from pathlib import Path

from drqn_urban.config import load_config
from drqn_urban.harness import cmd_compare, cmd_train, format_table


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/reproduce")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", help="YAML overrides on top of the walking-speed override")
    ap.add_argument("--episodes", type=int, help="training episodes")
    ap.add_argument("--eval-episodes", type=int, default=30)
    args = ap.parse_args(argv)

    overrides = {"seed": args.seed, "scenario": {"ped_speed_min": 0.5, "ped_speed_max": 1.5}}
    cfg = load_config(args.config, overrides)
    out = Path(args.out)
    train = cmd_train(cfg, out / "train", args.episodes)
    print(f"trained {train['episodes']} episodes in {train['wall_seconds'] / 60:.1f} min")

    with open(out / "train" / "metrics.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    k = min(20, len(rows) // 2)
    first, last = rows[:k], rows[-k:]
    mean = lambda rs, key: sum(float(r[key]) for r in rs) / len(rs)
    report = {
        "reward_first": mean(first, "reward"), "reward_last": mean(last, "reward"),
        "steps_first": mean(first, "steps"), "steps_last": mean(last, "steps"),
    }
    cmp_ = cmd_compare(cfg, out / "train" / "model.ckpt", args.eval_episodes, out / "compare")
    print(format_table(cmp_["table"]))
    a, r = cmp_["table"]["agent"], cmp_["table"]["rule"]
    report.update(
        reward_improves=report["reward_last"] > report["reward_first"],
        steps_increase=report["steps_last"] > report["steps_first"],
        safer_or_equal=a["collision_free_pct"] >= r["collision_free_pct"],
        farther_or_equal=a["avg_distance_m"] >= r["avg_distance_m"],
    )
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
