"""Episode driver: wires the simulator, speed controller, reward and grid
encoder into a step interface, and records the per-step trace."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import sim
from .baseline import EMERGENCY_BRAKE, rule_policy
from .config import RunConfig
from .control import Action, PidState, apply_action, pid_acceleration, pid_to_actuation
from .grid import encode
from .qnet import AUX_DIM, N_ACTIONS
from .reward import reward_case

TRACE_COLUMNS = (
    "step", "t", "ego_s", "ego_v", "v_d", "u", "throttle", "brake", "action",
    "reward", "reward_case", "min_ttc", "pedestrians",
)


@dataclass
class StepInfo:
    terminal: sim.Terminal
    throttle: float
    brake: float
    u: float
    v_d: float
    min_ttc: float | None
    reward_case: str
    action: str


@dataclass
class EpisodeStats:
    steps: int = 0
    reward: float = 0.0
    speeds: list = field(default_factory=list)  # km/h after each step
    distance: float = 0.0
    terminal: str = sim.Terminal.RUNNING.value


class DrivingEnv:
    def __init__(self, cfg: RunConfig, record_trace=False):
        self.cfg = cfg
        self.record_trace = record_trace
        self.world = None

    @property
    def v_norm(self):
        return self.cfg.control.v_d_ceiling

    def reset(self, seed):
        self.world = sim.reset(self.cfg.scenario, seed)
        self.pid = PidState.from_config(self.cfg.control)
        self.v_d = 0.0
        self.prev_action = None
        self.stats = EpisodeStats()
        self.trace = []
        return self.observe()

    def observe(self):
        aux = np.zeros(AUX_DIM, dtype=np.float32)
        aux[0] = min(self.world.ego.v / self.v_norm, 1.0)
        if self.prev_action is not None:
            aux[1 + int(self.prev_action)] = 1.0
        return encode(self.world, self.v_norm), aux

    @property
    def terminal(self):
        return sim.is_terminal(self.world)

    def step(self, action):
        """Apply one high-level behavior for one simulator step."""
        action = Action(action)
        ctl = self.cfg.control
        self.v_d = apply_action(action, self.v_d, ctl.action_step, ctl.v_d_ceiling)
        if action == Action.BRAKE:
            u = float("nan")
            throttle, brake = pid_to_actuation(action, 0.0)
        else:
            u, self.pid = pid_acceleration(self.v_d, self.world.ego.v, self.pid, self.cfg.scenario.dt)
            throttle, brake = pid_to_actuation(action, u, self.cfg.scenario.a_max, self.cfg.scenario.b_max)
        self.prev_action = action
        return self._advance(throttle, brake, u, action.name.lower())

    def step_rule(self):
        """One step of the rule-based baseline."""
        decision = rule_policy(self.world, self.cfg.eval)
        self.v_d = self.cfg.eval.rule_v_max
        if decision == EMERGENCY_BRAKE:
            u, throttle, brake = float("nan"), 0.0, 1.0
        else:
            u, self.pid = pid_acceleration(self.v_d, self.world.ego.v, self.pid, self.cfg.scenario.dt)
            throttle, brake = pid_to_actuation(Action.STEER, u, self.cfg.scenario.a_max, self.cfg.scenario.b_max)
        return self._advance(throttle, brake, u, decision)

    def _advance(self, throttle, brake, u, label):
        w = self.world
        sim.step(w, throttle, brake)
        ttc = sim.compute_ttc(w)
        min_ttc = min((t for _, t in ttc), default=None)
        case, r = reward_case(w.collision, min_ttc, w.ego.v, self.cfg.reward)
        st = self.stats
        st.steps += 1
        st.reward += r
        st.speeds.append(w.ego.v * 3.6)
        st.distance = w.ego.s
        term = sim.is_terminal(w)
        st.terminal = term.value
        if self.record_trace:
            self.trace.append(
                dict(
                    step=w.step_count, t=w.step_count * self.cfg.scenario.dt, ego_s=w.ego.s, ego_v=w.ego.v,
                    v_d=self.v_d, u=u, throttle=throttle, brake=brake, action=label, reward=r,
                    reward_case=case, min_ttc="" if min_ttc is None else min_ttc,
                    pedestrians=json.dumps([[p.id, round(p.x, 4), round(p.y, 4)] for p in w.pedestrians]),
                )
            )
        obs, aux = self.observe()
        info = StepInfo(term, throttle, brake, u, self.v_d, min_ttc, case, label)
        return obs, aux, r, term != sim.Terminal.RUNNING, info


def one_hot(action):
    v = np.zeros(N_ACTIONS, dtype=np.float32)
    v[int(action)] = 1.0
    return v
