"""Rule-based comparison policy: hold the speed limit, emergency-brake for
crossing pedestrians close ahead."""
from __future__ import annotations

from .config import EvalConfig
from .sim import Behavior, WorldState

TRACK, EMERGENCY_BRAKE = "track", "emergency-brake"


def rule_policy(world: WorldState, cfg: EvalConfig = EvalConfig()) -> str:
    """Memoryless decision from ground truth. Offsets are measured from the
    ego's front bumper along the route and laterally from the route line."""
    front = world.ego.s + 0.5 * world.ego.length
    for p in world.pedestrians:
        if p.behavior == Behavior.SIDEWALK_ONLY:
            continue
        ahead = p.x - front
        if 0.0 < ahead <= cfg.rule_range and abs(p.y - world.map.route_y) <= cfg.rule_corridor:
            return EMERGENCY_BRAKE
    return TRACK
