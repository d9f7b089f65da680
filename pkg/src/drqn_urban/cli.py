"""Command-line entry point: ``drqn-urban {train,eval,compare,gradcheck}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .checkpoint import CheckpointError
from .config import load_config
from .harness import cmd_compare, cmd_eval, cmd_gradcheck, cmd_train, format_table


def build_parser():
    p = argparse.ArgumentParser(prog="drqn-urban", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every episode")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML file overriding the defaults")
        sp.add_argument("--seed", type=int, help="run seed (overrides the config)")
        sp.add_argument("--episodes", type=int, help="episode count (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")

    sp = sub.add_parser("train", help="train the agent, write metrics.csv and checkpoints")
    common(sp)

    for name, help_ in (("eval", "greedy evaluation of one policy"), ("compare", "agent vs rule baseline on paired seeds")):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.add_argument("--policy", default="rule", help="checkpoint path, or 'rule' for the baseline")
        sp.add_argument("--workers", type=int, default=1, help="evaluation threads")
        if name == "eval":
            sp.add_argument("--dump-grids", action="store_true", help="write PGM grids of the first episode")

    sp = sub.add_parser("gradcheck", help="finite-difference check of the full Q-network")
    sp.add_argument("--seed", type=int, nargs="+", default=[0])
    sp.add_argument("--per-tensor", type=int, default=24, help="coordinates sampled per weight/bias tensor")
    sp.add_argument("--eps", type=float, default=1e-5)
    sp.add_argument("--inject-fault", type=int, metavar="INDEX", help=argparse.SUPPRESS)
    return p


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    return load_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gradcheck":
            ok = True
            for seed in args.seed:
                fault = None if args.inject_fault is None else (args.inject_fault, 2.0)
                rep = cmd_gradcheck(seed, per_tensor=args.per_tensor, eps=args.eps, fault=fault)
                ok &= rep["passed"]
                status = "PASS" if rep["passed"] else "FAIL"
                print(f"seed {seed}: {status} max_rel_error={rep['max_rel_error']:.3e} "
                      f"worst_index={rep['worst_index']} checked={rep['checked']} ({rep['seconds']:.1f}s)")
            return 0 if ok else 1
        cfg = _config(args)
        if args.command == "train":
            summary = cmd_train(cfg, episodes=args.episodes)
            print(json.dumps(summary, indent=2))
        elif args.command == "eval":
            summary, _ = cmd_eval(cfg, args.policy, args.episodes, workers=args.workers, dump_grids=args.dump_grids)
            summary.pop("per_episode")
            print(json.dumps(summary, indent=2))
        else:
            if args.policy == "rule":
                print("compare needs --policy CHECKPOINT", file=sys.stderr)
                return 2
            report = cmd_compare(cfg, args.policy, args.episodes, workers=args.workers)
            print(format_table(report["table"]))
    except (CheckpointError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
