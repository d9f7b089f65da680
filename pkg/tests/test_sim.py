import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drqn_urban import sim
from drqn_urban.config import ScenarioConfig
from drqn_urban.sim import Behavior, Cell, Pedestrian, SimulationError, Terminal


def fast_cfg(**kw):
    cfg = ScenarioConfig(ped_speed_min=0.5, ped_speed_max=1.5)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def parked(world, x, y, pid=999, behavior=Behavior.LEGAL_CROSSING, vx=0.0, vy=0.0):
    """A pedestrian with a fixed velocity and no plan beyond standing still."""
    speed = math.hypot(vx, vy)
    hold = sim.Leg((x, y), (-1e9, 1e9, -1e9, 1e9))  # stay put for the next step
    p = Pedestrian(pid, x, y, math.atan2(vy, vx), speed, speed, behavior, (x, y), [hold])
    world.pedestrians = [p]
    return p


def test_reset_state():
    w = sim.reset(ScenarioConfig(), 0)
    assert w.ego.s == 0.0 and w.ego.v == 0.0
    assert len(w.pedestrians) == 10
    for p in w.pedestrians:
        assert 0.0 <= p.x - w.ego.s <= 35.0
        assert w.map.label_at(p.x, p.y) == Cell.WALKWAY
        assert 0.5 / 3.6 <= p.desired_speed <= 1.5 / 3.6
    assert sim.is_terminal(w) == Terminal.RUNNING


def test_reset_deterministic():
    a, b = sim.reset(ScenarioConfig(), 42), sim.reset(ScenarioConfig(), 42)
    assert [(p.x, p.y, p.behavior, p.desired_speed) for p in a.pedestrians] == [
        (p.x, p.y, p.behavior, p.desired_speed) for p in b.pedestrians
    ]


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        sim.reset(ScenarioConfig(behavior_probs=(0.5, 0.5, 0.5)), 0)
    with pytest.raises(ValueError):
        sim.reset(ScenarioConfig(ped_speed_min=2.0, ped_speed_max=1.0), 0)


def test_map_labels():
    m = sim.build_map(ScenarioConfig())
    assert m.label_at(10.0, -1.75) == Cell.ROAD
    assert m.label_at(10.0, 4.5) == Cell.WALKWAY
    assert m.label_at(10.0, 20.0) == Cell.OFF_MAP
    assert m.label_at(70.0, 0.0) == Cell.CROSSING
    assert m.label_at(80.0, -2.0) == Cell.CROSSING
    assert m.label_at(75.0, 5.0) == Cell.CROSSING  # crossing-road crosswalk
    assert m.label_at(-100.0, 0.0) == Cell.OFF_MAP
    # every route waypoint lies on road or crossing cells
    labels = m.label_at(m.route[:, 0], m.route[:, 1])
    assert set(np.unique(labels)) <= {Cell.ROAD, Cell.CROSSING}
    # crosswalks touch the road
    for xmin, xmax, ymin, ymax in m.crosswalks:
        assert m.label_at(0.5 * (xmin + xmax), 0.5 * (ymin + ymax)) == Cell.CROSSING
    assert m.cells.shape[0] >= 45 and m.cells.shape[1] >= 30


def test_stationary_without_input():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    sim.step(w, 0.0, 0.0)
    assert w.ego.v == 0.0 and w.ego.s == 0.0


def test_full_throttle_one_second():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    for _ in range(10):
        sim.step(w, 1.0, 0.0)
    assert w.ego.v == pytest.approx(2.9, abs=1e-12)
    # semi-implicit Euler: s = sum_k 0.29 k * 0.1
    assert w.ego.s == pytest.approx(0.029 * 55, abs=1e-12)


def test_coasting_never_speeds_up():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    w.ego.v = 3.0
    prev = w.ego.v
    for _ in range(400):
        sim.step(w, 0.0, 0.0)
        assert 0.0 <= w.ego.v <= prev
        prev = w.ego.v
    assert w.ego.v == 0.0


def test_brake_stops_and_speed_never_negative():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    w.ego.v = 5.0
    for _ in range(20):
        sim.step(w, 0.0, 1.0)
        assert w.ego.v >= 0.0
    assert w.ego.v == 0.0


def test_actuation_contract():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    with pytest.raises(ValueError):
        sim.step(w, 0.5, 0.5)
    with pytest.raises(ValueError):
        sim.step(w, 1.5, 0.0)


def test_collision_on_footprint():
    w = sim.reset(ScenarioConfig(), 0)
    parked(w, w.ego.s + 1.0, w.map.route_y)
    w.cfg = ScenarioConfig(n_pedestrians=1)
    sim.step(w, 0.0, 0.0)
    assert w.collision
    assert sim.is_terminal(w) == Terminal.COLLISION
    with pytest.raises(SimulationError):
        sim.step(w, 0.0, 0.0)


def test_disc_touching_corner():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    ry = w.map.route_y
    # corner of the footprint at (2.25, ry + 1)
    d = 0.5 / math.sqrt(2)
    assert sim.ego_overlaps(w, 2.25 + d - 1e-9, ry + 1 + d - 1e-9, 0.5)
    assert not sim.ego_overlaps(w, 2.25 + d + 1e-6, ry + 1 + d + 1e-6, 0.5)


def test_goal_and_precedence():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    w.ego.s, w.ego.v = 149.9, 5.0
    sim.step(w, 0.0, 0.0)
    assert w.ego.s == 150.0 and sim.is_terminal(w) == Terminal.GOAL
    w.collision = True
    assert sim.is_terminal(w) == Terminal.COLLISION


def test_step_limit():
    w = sim.reset(ScenarioConfig(n_pedestrians=0), 0)
    for _ in range(999):
        sim.step(w, 0.0, 0.0)
    assert sim.is_terminal(w) == Terminal.RUNNING
    sim.step(w, 0.0, 0.0)
    assert w.step_count == 1000 and sim.is_terminal(w) == Terminal.STEP_LIMIT


def test_ttc_examples():
    w = sim.reset(ScenarioConfig(), 0)
    w.ego.v = 5.0
    front = w.ego.s + 2.25
    p = parked(w, front + 10.0, w.map.route_y)
    assert sim.compute_ttc(w) == [(p.id, 2.0)]
    w.ego.v = 10.0
    assert sim.compute_ttc(w) == [(p.id, 1.0)]
    w.ego.v = 0.0
    assert sim.compute_ttc(w) == []


def test_ttc_ignores_parallel_walker():
    w = sim.reset(ScenarioConfig(), 0)
    w.ego.v = 5.0
    parked(w, 10.0, 4.5, vx=1.0)
    assert sim.compute_ttc(w) == []


def test_ttc_walker_entering_corridor():
    w = sim.reset(ScenarioConfig(), 0)
    w.ego.v = 4.0
    front = w.ego.s + 2.25
    # starts on the far sidewalk, reaches the corridor edge (|y - ry| = 2.5) at t = 2
    ry = w.map.route_y
    p = parked(w, front + 10.0, ry + 4.5, vy=-1.0)
    assert sim.compute_ttc(w) == [(p.id, 2.5)]  # inside at t = 2.5
    p.heading = math.atan2(1.0, 0.0)  # walking away instead
    assert sim.compute_ttc(w) == []


@given(st.floats(0.1, 10.0), st.floats(0.5, 30.0))
@settings(max_examples=60, deadline=None)
def test_ttc_scales_inversely_with_speed(v, gap):
    w = sim.reset(ScenarioConfig(), 0)
    parked(w, w.ego.s + 2.25 + gap, w.map.route_y)
    w.ego.v = v
    a = sim.compute_ttc(w)
    w.ego.v = 2 * v
    b = sim.compute_ttc(w)
    if a and a[0][1] <= 5.0:
        assert b[0][1] == a[0][1] / 2


def test_behavior_frequencies():
    counts = np.zeros(3)
    for seed in range(1000):
        for p in sim.reset(ScenarioConfig(), seed).pedestrians:
            counts[p.behavior] += 1
    np.testing.assert_allclose(counts / counts.sum(), [0.6, 0.2, 0.2], atol=0.02)


def run_random(cfg, seed, steps):
    w = sim.reset(cfg, seed)
    rng = np.random.default_rng(seed)
    trace = []
    for _ in range(steps):
        if sim.is_terminal(w) != Terminal.RUNNING:
            break
        if rng.random() < 0.5:
            sim.step(w, float(rng.random()), 0.0)
        else:
            sim.step(w, 0.0, float(rng.random()) * 0.2)
        trace.append((w.ego.s, w.ego.v, tuple((p.id, p.x, p.y) for p in w.pedestrians)))
    return w, trace


def test_trace_determinism():
    assert run_random(fast_cfg(), 5, 300)[1] == run_random(fast_cfg(), 5, 300)[1]


def test_pedestrian_count_after_every_step():
    w = sim.reset(fast_cfg(), 1)
    for _ in range(1000):
        if sim.is_terminal(w) != Terminal.RUNNING:
            break
        sim.step(w, 0.3, 0.0)
        assert len(w.pedestrians) == 10


def behavior_cells(seed, steps=600):
    """Cell labels visited by each behavior over one long episode with a
    parked ego, so nobody gets removed early."""
    w = sim.reset(fast_cfg(remove_far=1e9, remove_behind=1e9), seed)
    seen = {b: set() for b in Behavior}
    for _ in range(steps):
        for p in w.pedestrians:
            seen[p.behavior].add(w.map.label_at(p.x, p.y))
        sim.step(w, 0.0, 0.0)
        if w.collision:
            break
    return seen


@pytest.mark.parametrize("seed", range(6))
def test_behavior_constraints(seed):
    seen = behavior_cells(seed)
    assert seen[Behavior.SIDEWALK_ONLY] <= {Cell.WALKWAY}
    assert seen[Behavior.LEGAL_CROSSING] <= {Cell.WALKWAY, Cell.CROSSING}
    assert Cell.OFF_MAP not in seen[Behavior.JAYWALKING]


def test_legal_crossers_reach_far_side():
    w = sim.reset(fast_cfg(remove_far=1e9, remove_behind=1e9, max_steps=2000), 3)
    crossers = {p.id: p.y for p in w.pedestrians if p.behavior == Behavior.LEGAL_CROSSING}
    for _ in range(1500):
        sim.step(w, 0.0, 0.0)
        if w.collision:
            break
    end = {p.id: p.y for p in w.pedestrians}
    crossed = [pid for pid, y0 in crossers.items() if pid in end and np.sign(end[pid]) != np.sign(y0)]
    assert crossed


def test_pedestrian_step_displacement():
    m = sim.build_map(ScenarioConfig())
    rng = np.random.default_rng(0)
    p = Pedestrian(0, 10.0, 4.5, 0.0, 1.2, 1.2, Behavior.SIDEWALK_ONLY, (150.0, 4.5),
                   [sim.Leg((60.0, 4.5), (-30.0, 71.0, -100.0, 100.0))])
    for _ in range(100):
        x, y = p.x, p.y
        sim.pedestrian_step(p, m, rng, 0.1, 5.0)
        assert math.hypot(p.x - x, p.y - y) == pytest.approx(0.12, abs=1e-12)
    # heading noise only bends the path slightly: ~100 * 0.12 * cos(small)
    assert p.x - 10.0 == pytest.approx(12.0, rel=0.01)


def test_ego_stays_on_route():
    w, trace = run_random(fast_cfg(), 9, 1000)
    assert all(0.0 <= s <= 150.0 and v >= 0.0 for s, v, _ in trace)


def test_copy_is_independent():
    w = sim.reset(fast_cfg(), 0)
    c = w.copy()
    sim.step(c, 1.0, 0.0)
    assert w.step_count == 0 and c.step_count == 1
    assert w.pedestrians[0].x != c.pedestrians[0].x or w.pedestrians[0].y != c.pedestrians[0].y
