"""Run configuration. Every section is a plain dataclass; a YAML file with the
same nested keys overrides any subset of the defaults."""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

KMH = 1.0 / 3.6  # km/h -> m/s


@dataclass
class ScenarioConfig:
    route_length: float = 150.0
    lane_width: float = 3.5
    sidewalk_width: float = 2.0
    crosswalk_width: float = 3.0
    intersection_x: float = 75.0
    map_x_min: float = -30.0
    map_x_max: float = 180.0
    map_half_width: float = 40.0

    n_pedestrians: int = 10
    spawn_ahead: tuple = (0.0, 35.0)
    respawn_ahead: tuple = (15.0, 35.0)
    remove_behind: float = 20.0
    remove_far: float = 50.0
    ped_speed_min: float = 0.5 * KMH
    ped_speed_max: float = 1.5 * KMH
    behavior_probs: tuple = (0.6, 0.2, 0.2)  # legal-crossing, jaywalking, sidewalk-only
    heading_noise_deg: float = 5.0
    ped_radius: float = 0.5
    jaywalk_zone: float = 30.0

    dt: float = 0.1
    max_steps: int = 1000
    a_max: float = 3.0
    b_max: float = 6.0
    c_roll: float = 0.1
    ego_length: float = 4.5
    ego_width: float = 2.0

    ttc_corridor: float = 2.5
    ttc_horizon: float = 10.0

    def validate(self):
        if self.route_length <= 0 or self.lane_width <= 0 or self.sidewalk_width <= 0:
            raise ValueError("route length, lane and sidewalk widths must be positive")
        if not self.map_x_min < 0 < self.route_length < self.map_x_max:
            raise ValueError("map must extend beyond both ends of the route")
        if self.map_half_width < 15.0 or self.map_x_max - self.map_x_min < 45.0:
            raise ValueError("map must be at least as large as the observation window")
        if self.n_pedestrians < 0:
            raise ValueError("pedestrian count must be >= 0")
        if not 0 <= self.ped_speed_min <= self.ped_speed_max:
            raise ValueError("pedestrian speed range must satisfy 0 <= min <= max")
        if len(self.behavior_probs) != 3 or min(self.behavior_probs) < 0 or abs(sum(self.behavior_probs) - 1) > 1e-9:
            raise ValueError(f"behavior probabilities must be 3 non-negative values summing to 1, got {self.behavior_probs}")
        if self.spawn_ahead[0] > self.spawn_ahead[1] or self.respawn_ahead[0] > self.respawn_ahead[1]:
            raise ValueError("spawn ranges must be (low, high)")
        if self.dt <= 0 or self.max_steps < 1:
            raise ValueError("dt must be positive and max_steps >= 1")
        if self.a_max <= 0 or self.b_max <= 0 or self.c_roll < 0:
            raise ValueError("dynamics constants must be positive")
        return self


@dataclass
class ControlConfig:
    kp: float = 1.0
    ki: float = 0.1
    kd: float = 0.05
    integral_clamp: float = 2.0
    integral_band: float = 1.5
    action_step: float = 1.0 * KMH
    v_d_ceiling: float = 20.0 * KMH


@dataclass
class RewardConfig:
    collision: float = -10.0
    ttc_threshold: float = 3.0
    v_ref: float = 15.0 * KMH

    @property
    def lam(self):
        return 1.0 / self.v_ref


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    gamma: float = 0.9
    batch_size: int = 32
    window: int = 8
    target_update: int = 10000
    memory_size: int = 50
    episodes: int = 200
    eps_start: float = 1.0
    eps_end: float = 0.1
    bias_fraction: float = 0.1
    bias_probs: tuple = (0.35, 0.15, 0.15, 0.35)
    min_eligible_episodes: int = 5
    train_interval: int = 4  # environment steps per gradient update
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    checkpoint_every: int = 25


@dataclass
class EvalConfig:
    episodes: int = 30
    rule_v_max: float = 15.0 * KMH
    rule_range: float = 7.0
    rule_corridor: float = 3.5


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        self.scenario.validate()
        t = self.train
        positive = dict(
            learning_rate=t.learning_rate >= 0,
            batch_size=t.batch_size > 0,
            window=t.window > 0,
            target_update=t.target_update > 0,
            memory_size=t.memory_size > 0,
            episodes=t.episodes > 0,
            train_interval=t.train_interval > 0,
            checkpoint_every=t.checkpoint_every > 0,
        )
        bad = [k for k, ok in positive.items() if not ok]
        if bad:
            raise ValueError(f"training hyperparameters must be positive: {', '.join(bad)}")
        if not 0 <= t.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {t.gamma}")
        if self.eval.episodes < 1:
            raise ValueError("evaluation needs at least one episode")
        if self.reward.v_ref <= 0 or self.reward.ttc_threshold <= 0:
            raise ValueError("v_ref and the TTC threshold must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


def _merge(obj, data, path=""):
    for key, value in data.items():
        if not hasattr(obj, key):
            raise ValueError(f"unknown config key {path}{key}")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur):
            if not isinstance(value, dict):
                raise ValueError(f"config section {path}{key} must be a mapping")
            _merge(cur, value, f"{path}{key}.")
        else:
            if isinstance(cur, tuple):
                value = tuple(value)
            elif isinstance(cur, float) and isinstance(value, int):
                value = float(value)
            setattr(obj, key, value)
    return obj


def load_config(path=None, overrides=None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        _merge(cfg, data)
    if overrides:
        _merge(cfg, overrides)
    return cfg.validate()


def dump_config(cfg: RunConfig, path):
    def plain(x):
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        if isinstance(x, (tuple, list)):
            return [plain(v) for v in x]
        return x

    Path(path).write_text(yaml.safe_dump(plain(cfg.to_dict()), sort_keys=False))


def derive_seed(seed: int, stream: str, index: int = 0) -> int:
    """Integer seed for a named sub-stream of the run seed."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(stream.encode()), index))
    return int(ss.generate_state(1, np.uint32)[0])


def stream_rng(seed: int, stream: str, index: int = 0):
    return np.random.default_rng(derive_seed(seed, stream, index))
