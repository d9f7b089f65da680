"""Deterministic 2-D urban world: one straight route through a 4-way
unsignalized intersection, longitudinal ego dynamics and three pedestrian
behaviors.

World frame: x runs along the route, y points to the ego's left. The main road
occupies ``|y| <= lane_width`` (two lanes) and the ego drives the right lane at
``y = -lane_width / 2``. The crossing road occupies ``|x - intersection_x| <=
lane_width``. Sidewalks flank both roads; there is one crosswalk on each of
the four intersection arms.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache

import numpy as np

from .config import ScenarioConfig

_EDGE = 1e-6  # keeps clamped positions strictly inside their cell band


class SimulationError(RuntimeError):
    pass


class Cell(IntEnum):
    OFF_MAP = 0
    WALKWAY = 1
    CROSSING = 2
    ROAD = 3


class Behavior(IntEnum):
    LEGAL_CROSSING = 0
    JAYWALKING = 1
    SIDEWALK_ONLY = 2


class Terminal(str, Enum):
    RUNNING = "running"
    GOAL = "goal"
    COLLISION = "collision"
    STEP_LIMIT = "step-limit"


# ---------------------------------------------------------------------------
# static map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StaticMap:
    cells: np.ndarray  # (nx, ny) Cell codes at 1 m resolution
    x0: float  # world coordinates of the lower-left corner of cell (0, 0)
    y0: float
    route: np.ndarray  # (n, 2) waypoints
    route_y: float
    route_length: float
    crosswalks: tuple  # (xmin, xmax, ymin, ymax) per span
    intersection: tuple
    lane_width: float
    sidewalk_width: float
    crosswalk_width: float
    intersection_x: float
    x_min: float
    x_max: float

    def label_at(self, x, y):
        i = np.floor(np.asarray(x) - self.x0).astype(int)
        j = np.floor(np.asarray(y) - self.y0).astype(int)
        nx, ny = self.cells.shape
        inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        out = np.where(inside, self.cells[np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1)], Cell.OFF_MAP)
        return Cell(int(out)) if out.ndim == 0 else out

    # geometry helpers used by the pedestrian planner
    def sidewalk_center(self, side):
        return side * (self.lane_width + 0.5 * self.sidewalk_width)

    def sidewalk_band(self, side):
        lo, hi = self.lane_width + _EDGE, self.lane_width + self.sidewalk_width - _EDGE
        return (lo, hi) if side > 0 else (-hi, -lo)

    def segment(self, x):
        """x-extent of the main-road sidewalk segment containing ``x``."""
        if x < self.intersection_x:
            return self.x_min + _EDGE, self.intersection_x - self.lane_width - _EDGE
        return self.intersection_x + self.lane_width + _EDGE, self.x_max - _EDGE


def classify(x, y, lane, sidewalk, crosswalk, xi):
    """Cell class at a world point from the analytic road layout."""
    ax, ay = np.abs(x - xi), np.abs(y)
    main_road = ay <= lane
    cross_road = ax <= lane
    main_cw = main_road & (ax >= lane) & (ax <= lane + crosswalk)
    cross_cw = cross_road & (ay >= lane) & (ay <= lane + crosswalk)
    main_walk = (ay > lane) & (ay <= lane + sidewalk) & (ax > lane)
    cross_walk = (ax > lane) & (ax <= lane + sidewalk) & (ay > lane)
    out = np.full(np.broadcast(x, y).shape, Cell.OFF_MAP, dtype=np.int8)
    out[main_walk | cross_walk] = Cell.WALKWAY
    out[main_road | cross_road] = Cell.ROAD
    out[main_cw | cross_cw] = Cell.CROSSING
    return out


@lru_cache(maxsize=16)
def _build_map(route_length, lane, sidewalk, crosswalk, xi, x_min, x_max, half):
    nx = int(round(x_max - x_min)) + 1
    ny = int(round(2 * half)) + 1
    x0, y0 = x_min - 0.5, -half - 0.5
    cx = x0 + 0.5 + np.arange(nx)
    cy = y0 + 0.5 + np.arange(ny)
    cells = classify(cx[:, None], cy[None, :], lane, sidewalk, crosswalk, xi)
    cells.setflags(write=False)
    route_y = -0.5 * lane
    n = int(math.ceil(route_length)) + 1
    route = np.stack([np.linspace(0.0, route_length, n), np.full(n, route_y)], axis=1)
    crosswalks = (
        (xi - lane - crosswalk, xi - lane, -lane, lane),
        (xi + lane, xi + lane + crosswalk, -lane, lane),
        (xi - lane, xi + lane, lane, lane + crosswalk),
        (xi - lane, xi + lane, -lane - crosswalk, -lane),
    )
    return StaticMap(
        cells=cells, x0=x0, y0=y0, route=route, route_y=route_y, route_length=route_length,
        crosswalks=crosswalks, intersection=(xi - lane, xi + lane, -lane, lane),
        lane_width=lane, sidewalk_width=sidewalk, crosswalk_width=crosswalk, intersection_x=xi,
        x_min=x_min, x_max=x_max,
    )


def build_map(cfg: ScenarioConfig) -> StaticMap:
    return _build_map(
        float(cfg.route_length), float(cfg.lane_width), float(cfg.sidewalk_width), float(cfg.crosswalk_width),
        float(cfg.intersection_x), float(cfg.map_x_min), float(cfg.map_x_max), float(cfg.map_half_width),
    )


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass
class EgoState:
    s: float = 0.0  # arc length of the footprint center along the route
    v: float = 0.0
    heading: float = 0.0
    length: float = 4.5
    width: float = 2.0


@dataclass
class Leg:
    """Walk toward ``target`` while staying inside ``box`` (xmin, xmax, ymin, ymax)."""

    target: tuple
    box: tuple


@dataclass
class Pedestrian:
    id: int
    x: float
    y: float
    heading: float
    speed: float
    desired_speed: float
    behavior: Behavior
    goal: tuple
    plan: list = field(default_factory=list)

    @property
    def velocity(self):
        return self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)


@dataclass
class WorldState:
    cfg: ScenarioConfig
    map: StaticMap
    ego: EgoState
    pedestrians: list
    rng: np.random.Generator
    step_count: int = 0
    collision: bool = False
    goal_reached: bool = False
    next_id: int = 0

    def copy(self):
        return WorldState(
            self.cfg, self.map, copy.copy(self.ego), copy.deepcopy(self.pedestrians), copy.deepcopy(self.rng),
            self.step_count, self.collision, self.goal_reached, self.next_id,
        )

    @property
    def ego_xy(self):
        return self.ego.s, self.map.route_y


# ---------------------------------------------------------------------------
# pedestrians
# ---------------------------------------------------------------------------


def _sidewalk_leg(m: StaticMap, side, x_from, rng):
    lo, hi = m.segment(x_from)
    gx = float(rng.uniform(lo, hi))
    band = m.sidewalk_band(side)
    return Leg((gx, m.sidewalk_center(side)), (lo, hi, band[0], band[1]))


def plan_pedestrian(m: StaticMap, cfg: ScenarioConfig, behavior, x, side, rng):
    """Goal and leg list for a pedestrian standing on the main sidewalk at
    (x, side)."""
    lane, sw, cw, xi = m.lane_width, m.sidewalk_width, m.crosswalk_width, m.intersection_x
    lo, hi = m.segment(x)
    band_own, band_far = m.sidewalk_band(side), m.sidewalk_band(-side)
    y_own, y_far = m.sidewalk_center(side), m.sidewalk_center(-side)
    west = x < xi
    across = (-lane - sw + _EDGE, lane + sw - _EDGE)
    if behavior == Behavior.SIDEWALK_ONLY:
        leg = _sidewalk_leg(m, side, x, rng)
        return leg.target, [leg]
    if behavior == Behavior.LEGAL_CROSSING:
        xc = xi - lane - 0.5 * cw if west else xi + lane + 0.5 * cw
        cross_box = (xc - 0.5 * cw + _EDGE, xc + 0.5 * cw - _EDGE) + across
    else:
        zlo, zhi = (xi - cfg.jaywalk_zone, xi - lane - cw) if west else (xi + lane + cw, xi + cfg.jaywalk_zone)
        zlo, zhi = max(zlo, lo), min(zhi, hi)
        xc = float(rng.uniform(zlo, zhi)) if zhi > zlo else 0.5 * (lo + hi)
        cross_box = (lo, hi) + across
    gx = float(rng.uniform(lo, hi))
    legs = [
        Leg((xc, y_own), (lo, hi) + band_own),
        Leg((xc, y_far), cross_box),
        Leg((gx, y_far), (lo, hi) + band_far),
    ]
    return (gx, y_far), legs


def spawn_pedestrian(world: WorldState, ahead) -> Pedestrian:
    cfg, m, rng = world.cfg, world.map, world.rng
    lane, xi = m.lane_width, m.intersection_x
    x = None
    for _ in range(100):
        cand = world.ego.s + float(rng.uniform(*ahead))
        cand = min(max(cand, m.x_min + 1.0), m.x_max - 1.0)
        if abs(cand - xi) > lane + _EDGE:
            x = cand
            break
    if x is None:  # window lies entirely over the crossing road
        x = xi + lane + 1.0
    side = 1 if rng.random() < 0.5 else -1
    y = float(rng.uniform(*m.sidewalk_band(side)))
    behavior = Behavior(int(rng.choice(3, p=cfg.behavior_probs)))
    speed = float(rng.uniform(cfg.ped_speed_min, cfg.ped_speed_max))
    goal, legs = plan_pedestrian(m, cfg, behavior, x, side, rng)
    heading = math.atan2(legs[0].target[1] - y, legs[0].target[0] - x)
    p = Pedestrian(world.next_id, x, y, heading, speed, speed, behavior, goal, legs)
    world.next_id += 1
    return p


def pedestrian_step(p: Pedestrian, m: StaticMap, rng, dt, noise_deg=5.0):
    """Advance one pedestrian by ``desired_speed * dt`` toward its current leg
    target with Gaussian heading noise; the position is then clamped to the
    leg's box. Mutates and returns ``p``."""
    noise = float(rng.normal(0.0, math.radians(noise_deg)))
    if not p.plan:
        side = 1 if p.y > 0 else -1
        p.plan.append(_sidewalk_leg(m, side, p.x, rng))
        p.goal = p.plan[0].target
    leg = p.plan[0]
    dx, dy = leg.target[0] - p.x, leg.target[1] - p.y
    dist = math.hypot(dx, dy)
    step = p.desired_speed * dt
    p.speed = p.desired_speed
    if dist <= step:
        p.x, p.y = leg.target
        p.plan.pop(0)
        if dist > 0:
            p.heading = math.atan2(dy, dx)
        return p
    p.heading = math.atan2(dy, dx) + noise
    x = p.x + step * math.cos(p.heading)
    y = p.y + step * math.sin(p.heading)
    xmin, xmax, ymin, ymax = leg.box
    p.x = min(max(x, xmin), xmax)
    p.y = min(max(y, ymin), ymax)
    return p


# ---------------------------------------------------------------------------
# world lifecycle
# ---------------------------------------------------------------------------


def reset(cfg: ScenarioConfig, seed) -> WorldState:
    cfg.validate()
    m = build_map(cfg)
    ego = EgoState(0.0, 0.0, 0.0, cfg.ego_length, cfg.ego_width)
    world = WorldState(cfg, m, ego, [], np.random.default_rng(seed))
    world.pedestrians = [spawn_pedestrian(world, cfg.spawn_ahead) for _ in range(cfg.n_pedestrians)]
    return world


def ego_overlaps(world: WorldState, x, y, radius):
    ego = world.ego
    dx = max(abs(x - ego.s) - 0.5 * ego.length, 0.0)
    dy = max(abs(y - world.map.route_y) - 0.5 * ego.width, 0.0)
    return dx * dx + dy * dy <= radius * radius


def maintain(world: WorldState):
    """Replace pedestrians that fell far behind or away from the ego."""
    cfg = world.cfg
    ex, ey = world.ego_xy
    keep = []
    for p in world.pedestrians:
        behind = p.x < ex - cfg.remove_behind
        far = math.hypot(p.x - ex, p.y - ey) > cfg.remove_far
        if not (behind or far):
            keep.append(p)
    while len(keep) < cfg.n_pedestrians:
        keep.append(spawn_pedestrian(world, cfg.respawn_ahead))
    world.pedestrians = keep


def step(world: WorldState, throttle, brake) -> WorldState:
    """Advance the world by one ``dt``. Mutates and returns ``world``."""
    if is_terminal(world) != Terminal.RUNNING:
        raise SimulationError(f"step called on a terminated episode ({is_terminal(world).value})")
    if not (0.0 <= throttle <= 1.0 and 0.0 <= brake <= 1.0):
        raise ValueError(f"throttle and brake must lie in [0, 1], got {throttle}, {brake}")
    if throttle * brake != 0.0:
        raise ValueError("throttle and brake are mutually exclusive")
    cfg, ego, dt = world.cfg, world.ego, world.cfg.dt

    drive = cfg.a_max * throttle - cfg.b_max * brake
    acc = drive - cfg.c_roll if (ego.v > 0.0 or drive > 0.0) else 0.0
    ego.v = max(0.0, ego.v + acc * dt)
    ego.s = min(world.map.route_length, ego.s + ego.v * dt)

    for p in world.pedestrians:
        pedestrian_step(p, world.map, world.rng, dt, cfg.heading_noise_deg)
    maintain(world)

    world.step_count += 1
    world.collision = any(ego_overlaps(world, p.x, p.y, cfg.ped_radius) for p in world.pedestrians)
    world.goal_reached = ego.s >= world.map.route_length
    return world


def is_terminal(world: WorldState) -> Terminal:
    if world.collision:
        return Terminal.COLLISION
    if world.goal_reached:
        return Terminal.GOAL
    if world.step_count >= world.cfg.max_steps:
        return Terminal.STEP_LIMIT
    return Terminal.RUNNING


def compute_ttc(world: WorldState):
    """(pedestrian id, seconds) for every pedestrian the ego front would reach
    within the horizon while the pedestrian is inside the route corridor.

    Both agents keep their current velocity; the ego moves along the route.
    """
    cfg, ego = world.cfg, world.ego
    v = ego.v
    if v <= 0.0:
        return []
    front = ego.s + 0.5 * ego.length
    out = []
    for p in world.pedestrians:
        vx, vy = p.velocity
        closing = v - vx
        gap = p.x - front
        if closing <= 0.0 or gap < 0.0:
            continue
        t = gap / closing
        if t > cfg.ttc_horizon:
            continue
        if abs(p.y + vy * t - world.map.route_y) <= cfg.ttc_corridor:
            out.append((p.id, t))
    return out
