"""Run orchestration: training, evaluation, paired comparison and gradient
checks. Everything random derives from the run seed through named streams:
"init" (weights), "exploration", "replay", "scenario-train" and
"scenario-eval" (one world seed per episode index)."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import DRQNAgent
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, derive_seed, dump_config, stream_rng
from .env import TRACE_COLUMNS, DrivingEnv
from .gradcheck import finite_difference_check, sample_indices
from .grid import dump_layers
from .qnet import AUX_DIM, GRID_SHAPE, build_qnetwork, qnet_forward
from .sim import Terminal

log = logging.getLogger(__name__)

TRAIN_COLUMNS = ("episode", "steps", "reward", "mean_speed", "terminal", "epsilon", "distance", "mean_loss")
EVAL_COLUMNS = ("episode", "world_seed", "steps", "reward", "mean_speed", "distance", "terminal")


def fmt(x):
    """Shortest repr that round-trips, so CSVs are byte-stable."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])


def mean(xs):
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else 0.0


# -- training -------------------------------------------------------------------


def cmd_train(cfg: RunConfig, out_dir=None, episodes=None):
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    E = episodes or cfg.train.episodes
    cfg.train.episodes = E
    cfg.validate()
    dump_config(cfg, out / "config.yaml")
    env = DrivingEnv(cfg)
    agent = DRQNAgent(cfg.train, cfg.seed, dump_dir=out)
    ckpt_dir = out / "checkpoints"
    rows = []
    t0 = time.perf_counter()
    for i in range(E):
        res = agent.train_episode(env, i, E, derive_seed(cfg.seed, "scenario-train", i))
        rows.append(dict(
            episode=i, steps=res.steps, reward=res.reward, mean_speed=mean(res.speeds), terminal=res.terminal,
            epsilon=res.epsilon, distance=res.distance, mean_loss=mean(res.losses),
        ))
        # rewrite the whole file so a crash leaves a valid CSV behind
        write_csv(out / "metrics.csv", TRAIN_COLUMNS, rows)
        log.info("episode %d/%d steps=%d reward=%.2f terminal=%s eps=%.3f",
                 i + 1, E, res.steps, res.reward, res.terminal, res.epsilon)
        if (i + 1) % cfg.train.checkpoint_every == 0 and i + 1 < E:
            _save(agent, ckpt_dir / f"ckpt_ep{i + 1:04d}.bin", cfg.seed, res.epsilon)
    final = _save(agent, out / "model.ckpt", cfg.seed, rows[-1]["epsilon"])
    _save(agent, ckpt_dir / f"ckpt_ep{E:04d}.bin", cfg.seed, rows[-1]["epsilon"])
    summary = {
        "episodes": E,
        "total_steps": agent.total_steps,
        "updates": agent.updates,
        "target_syncs": agent.syncs,
        "wall_seconds": time.perf_counter() - t0,
        "checkpoint": str(final),
        "terminal_counts": _count(r["terminal"] for r in rows),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _save(agent: DRQNAgent, path, seed, eps):
    meta = dict(agent.metadata(), epsilon=eps)
    return save_checkpoint(path, agent.main, agent.target, agent.adam, seed=seed, agent_meta=meta)


def _count(items):
    out = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return dict(sorted(out.items()))


# -- evaluation -----------------------------------------------------------------


@dataclass
class EpisodeOutcome:
    episode: int
    world_seed: int
    steps: int
    reward: float
    mean_speed: float
    distance: float
    terminal: str
    trace: list

    def row(self):
        return {c: getattr(self, c) for c in EVAL_COLUMNS}


def load_policy(policy):
    """None for the rule baseline, else the checkpoint's main network."""
    if policy == "rule":
        return None
    return load_checkpoint(policy).main


def run_episode(cfg: RunConfig, net, episode, world_seed, grid_dir=None):
    """Greedy rollout (rule baseline when ``net`` is None)."""
    env = DrivingEnv(cfg, record_trace=True)
    obs, aux = env.reset(world_seed)
    hidden = None
    done = False
    while not done:
        if grid_dir is not None:
            dump_layers(obs, Path(grid_dir) / f"ep{episode:03d}_t{env.world.step_count:04d}")
        if net is None:
            obs, aux, _, done, _ = env.step_rule()
        else:
            q, hidden = qnet_forward(net, obs.to_array(), aux, hidden)
            obs, aux, _, done, _ = env.step(int(np.argmax(q)))
    for row in env.trace:
        row["terminal"] = Terminal.RUNNING.value
    env.trace[-1]["terminal"] = env.stats.terminal
    st = env.stats
    return EpisodeOutcome(episode, world_seed, st.steps, st.reward, mean(st.speeds), st.distance, st.terminal, env.trace)


def aggregate(outcomes):
    n = len(outcomes)
    free = sum(o.terminal != Terminal.COLLISION.value for o in outcomes)
    return {
        "episodes": n,
        "collision_free_pct": 100.0 * free / n,
        "avg_speed_kmh": mean(o.mean_speed for o in outcomes),
        "avg_distance_m": mean(o.distance for o in outcomes),
        "terminal_counts": _count(o.terminal for o in outcomes),
    }


def cmd_eval(cfg: RunConfig, policy="rule", episodes=None, out_dir=None, workers=1, dump_grids=False, net=None):
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = episodes or cfg.eval.episodes
    if net is None:
        net = load_policy(policy)
    seeds = [derive_seed(cfg.seed, "scenario-eval", i) for i in range(n)]
    grid_dir = None
    if dump_grids:
        grid_dir = out / "grids"
        grid_dir.mkdir(exist_ok=True)

    def job(i):
        # the network is only read here, so threads can share it
        return run_episode(cfg, net, i, seeds[i], grid_dir if i == 0 else None)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(job, range(n)))
    else:
        outcomes = [job(i) for i in range(n)]
    cols = TRACE_COLUMNS + ("terminal",)
    for o in outcomes:
        write_csv(out / f"trace_{o.episode}.csv", cols, o.trace)
    write_csv(out / "metrics.csv", EVAL_COLUMNS, [o.row() for o in outcomes])
    summary = dict(aggregate(outcomes), policy=str(policy), seed=cfg.seed,
                   per_episode=[o.row() for o in outcomes])
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary, outcomes


def cmd_compare(cfg: RunConfig, checkpoint, episodes=None, out_dir=None, workers=1):
    """Both policies on the same world seeds, side by side."""
    out = Path(out_dir or cfg.out_dir)
    agent_sum, agent_out = cmd_eval(cfg, checkpoint, episodes, out / "agent", workers)
    rule_sum, rule_out = cmd_eval(cfg, "rule", episodes, out / "rule", workers)
    pairs = []
    for a, r in zip(agent_out, rule_out):
        assert a.world_seed == r.world_seed
        pairs.append(dict(
            episode=a.episode, world_seed=a.world_seed, agent_terminal=a.terminal, rule_terminal=r.terminal,
            agent_distance=a.distance, rule_distance=r.distance, agent_speed=a.mean_speed, rule_speed=r.mean_speed,
        ))
    write_csv(out / "compare.csv", tuple(pairs[0]), pairs)
    keys = ("collision_free_pct", "avg_speed_kmh", "avg_distance_m")
    table = {"agent": {k: agent_sum[k] for k in keys}, "rule": {k: rule_sum[k] for k in keys}}
    report = {"episodes": len(pairs), "seed": cfg.seed, "checkpoint": str(checkpoint), "table": table}
    (out / "compare.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def format_table(table):
    lines = [f"{'policy':<8}{'collision-free %':>18}{'avg speed km/h':>16}{'avg distance m':>16}"]
    for name, m in table.items():
        lines.append(f"{name:<8}{m['collision_free_pct']:>18.1f}{m['avg_speed_kmh']:>16.2f}{m['avg_distance_m']:>16.1f}")
    return "\n".join(lines)


# -- gradient check ---------------------------------------------------------------


def cmd_gradcheck(seed=0, window=8, per_tensor=24, eps=1e-5, tol=1e-4, fault=None):
    """Finite-difference check of the full Q-network over one window.

    ``fault=(index, factor)`` scales one analytic gradient entry before the
    comparison; it exists so tests can confirm a bad gradient is caught.
    """
    t0 = time.perf_counter()
    net = build_qnetwork(rng=stream_rng(seed, "init"), dtype=np.float64)
    rng = stream_rng(seed, "gradcheck")
    x = rng.random((window, 1) + GRID_SHAPE)
    aux = rng.random((window, 1, AUX_DIM))
    w = rng.standard_normal((window, 1, 4))

    def loss_fn(out):
        return float(np.sum(w * out)), w

    idx = sample_indices(net, per_tensor, rng)
    analytic = None
    if fault is not None:
        k, factor = fault
        out, _, caches = net.forward(x, aux)
        analytic = net.backward(caches, w)
        analytic[k] *= factor
        idx = np.union1d(idx, [k])
    res = finite_difference_check(net, x, loss_fn, eps, aux, idx, analytic, resolution=1e-6)
    return {
        "seed": seed,
        "max_rel_error": res.max_rel_error,
        "worst_index": res.worst_index,
        "checked": int(len(res.checked)),
        "skipped_kinks": int(len(res.kinks)),
        "skipped_unresolved": int(len(res.unresolved)),
        "tolerance": tol,
        "passed": res.passed(tol),
        "seconds": time.perf_counter() - t0,
    }
