from __future__ import annotations

from .config import RewardConfig
from .sim import WorldState

COLLISION, NEAR_COLLISION, SPEED = "collision", "near-collision", "speed"


def speed_reward(v, cfg: RewardConfig):
    if v <= 0.0:
        return -1.0
    if v > cfg.v_ref:
        return -0.5
    return 1.0 - cfg.lam * (cfg.v_ref - v)


def reward_case(collided, min_ttc, v, cfg: RewardConfig):
    """(case, value); collision beats near-collision beats the speed term."""
    if collided:
        return COLLISION, cfg.collision
    if min_ttc is not None and min_ttc <= cfg.ttc_threshold:
        return NEAR_COLLISION, min_ttc - cfg.ttc_threshold
    return SPEED, speed_reward(v, cfg)


def compute_reward(world: WorldState, ttc_list, cfg: RewardConfig):
    min_ttc = min((t for _, t in ttc_list), default=None)
    return reward_case(world.collision, min_ttc, world.ego.v, cfg)[1]
