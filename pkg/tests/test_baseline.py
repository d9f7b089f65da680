import math

import numpy as np
import pytest

from drqn_urban import sim
from drqn_urban.baseline import EMERGENCY_BRAKE, TRACK, rule_policy
from drqn_urban.config import RunConfig, ScenarioConfig
from drqn_urban.env import DrivingEnv
from drqn_urban.sim import Behavior, Pedestrian


def world_with(x_ahead, y, behavior):
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    w.ego.s = 20.0
    front = w.ego.s + 2.25
    w.pedestrians = [Pedestrian(0, front + x_ahead, y, 0.0, 1.0, 1.0, behavior, (0, 0), [])]
    return w


def test_jaywalker_ahead_triggers_brake():
    assert rule_policy(world_with(5.0, -1.75, Behavior.JAYWALKING)) == EMERGENCY_BRAKE


def test_crosser_beyond_range_ignored():
    assert rule_policy(world_with(8.0, -1.75, Behavior.LEGAL_CROSSING)) == TRACK


def test_sidewalk_walker_ignored():
    assert rule_policy(world_with(3.0, -4.5, Behavior.SIDEWALK_ONLY)) == TRACK
    assert rule_policy(world_with(3.0, -1.75, Behavior.SIDEWALK_ONLY)) == TRACK


@pytest.mark.parametrize("ahead,lat,expected", [
    (7.0, 0.0, EMERGENCY_BRAKE), (0.0, 0.0, TRACK), (-1.0, 0.0, TRACK),
    (3.0, 3.5, EMERGENCY_BRAKE), (3.0, 3.6, TRACK), (3.0, -3.5, EMERGENCY_BRAKE),
])
def test_region_boundaries(ahead, lat, expected):
    assert rule_policy(world_with(ahead, -1.75 + lat, Behavior.LEGAL_CROSSING)) == expected


def test_memoryless():
    w = world_with(5.0, -1.75, Behavior.JAYWALKING)
    assert [rule_policy(w) for _ in range(3)] == [EMERGENCY_BRAKE] * 3


def test_converges_to_speed_limit_without_pedestrians():
    cfg = RunConfig()
    cfg.scenario.n_pedestrians = 0
    env = DrivingEnv(cfg)
    env.reset(0)
    done = False
    while not done:
        _, _, _, done, info = env.step_rule()
        assert info.throttle * info.brake == 0.0
    speeds = np.array(env.stats.speeds)
    assert env.stats.terminal == "goal"
    assert np.abs(speeds[200:] - 15.0).max() <= 0.5
    assert abs(speeds[-1] - 15.0) <= 0.2
