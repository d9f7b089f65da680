"""DRQN agent: double-DQN targets, clipped TD error, episodic replay with
fixed-length windows, target-network syncing and biased epsilon-greedy."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, stream_rng
from .grid import GridObservation
from .nn import Network
from .optim import AdamState, adam_update
from .qnet import AUX_DIM, N_ACTIONS, build_qnetwork, qnet_forward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# -- targets and loss ---------------------------------------------------------


def ddqn_target(r, done, q_next_main, q_next_target, gamma):
    """Bootstrap target: the main network picks the next action, the target
    network scores it. Works on scalars or on batches along the last axis."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    q_next_main = np.asarray(q_next_main)
    q_next_target = np.asarray(q_next_target)
    a = np.argmax(q_next_main, axis=-1)  # first maximum wins
    boot = np.take_along_axis(q_next_target, a[..., None], axis=-1)[..., 0]
    y = np.where(np.asarray(done, bool), r, r + gamma * boot)
    return float(y) if y.ndim == 0 else y


def clipped_td_loss(q_pred, y):
    """(loss, dloss/dq_pred) for e = y - q_pred: e^2 inside [-1, 1] and
    2|e| - 1 outside, so the slope is -2 clip(e, -1, 1) everywhere."""
    e = np.asarray(y, np.float64) - np.asarray(q_pred, np.float64)
    a = np.abs(e)
    loss = np.where(a <= 1.0, e * e, 2.0 * a - 1.0)
    grad = -2.0 * np.clip(e, -1.0, 1.0)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


# -- replay -------------------------------------------------------------------


@dataclass
class Transition:
    observation: GridObservation
    aux: np.ndarray
    action: int
    reward: float
    done: bool


@dataclass
class EpisodeRecord:
    """Transitions of one episode plus the observation reached after the last
    one, so every stored step has a successor for bootstrapping."""

    transitions: list = field(default_factory=list)
    final_observation: GridObservation | None = None
    final_aux: np.ndarray | None = None
    seed: int = 0
    terminal: str = "running"

    def __len__(self):
        return len(self.transitions)

    def append(self, t: Transition):
        if not np.isfinite(t.reward):
            raise ValueError(f"non-finite reward {t.reward}")
        if not 0 <= t.action < N_ACTIONS:
            raise ValueError(f"action out of range: {t.action}")
        self.transitions.append(t)


class ReplayMemory:
    """Oldest-first ring of whole episodes."""

    def __init__(self, capacity=50, window=8):
        self.capacity = capacity
        self.window = window
        self.episodes: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.episodes)

    def add(self, ep: EpisodeRecord):
        self.episodes.append(ep)

    def eligible(self):
        return [ep for ep in self.episodes if len(ep) >= self.window]

    def stats(self):
        lengths = [len(ep) for ep in self.episodes]
        return {"episodes": len(lengths), "eligible": len(self.eligible()), "transitions": int(sum(lengths))}


@dataclass
class Batch:
    obs: np.ndarray  # (window + 1, B, 45, 30, 4)
    aux: np.ndarray  # (window + 1, B, 5)
    actions: np.ndarray  # (window, B)
    rewards: np.ndarray  # (window, B)
    dones: np.ndarray  # (window, B)
    picks: list  # (episode position in memory, start offset)


def sample_windows(mem: ReplayMemory, batch_size, rng):
    """(episode position, start) pairs, or None when nothing is long enough.
    The episode is drawn uniformly among eligible ones, then the offset
    uniformly among windows that fit."""
    idx = [k for k, ep in enumerate(mem.episodes) if len(ep) >= mem.window]
    if not idx:
        return None
    picks = []
    for _ in range(batch_size):
        k = idx[int(rng.integers(len(idx)))]
        start = int(rng.integers(len(mem.episodes[k]) - mem.window + 1))
        picks.append((k, start))
    return picks


def sample_batch(mem: ReplayMemory, rng, batch_size=32):
    picks = sample_windows(mem, batch_size, rng)
    if picks is None:
        return None
    W = mem.window
    obs, aux = [], np.zeros((W + 1, batch_size, AUX_DIM), np.float32)
    actions = np.zeros((W, batch_size), np.int64)
    rewards = np.zeros((W, batch_size), np.float32)
    dones = np.zeros((W, batch_size), bool)
    for b, (k, start) in enumerate(picks):
        ep = mem.episodes[k]
        steps = ep.transitions[start:start + W]
        nxt = ep.transitions[start + W] if start + W < len(ep) else None
        frames = [t.observation for t in steps] + [nxt.observation if nxt else ep.final_observation]
        obs.append(frames)
        for t, tr in enumerate(steps):
            aux[t, b] = tr.aux
            actions[t, b] = tr.action
            rewards[t, b] = tr.reward
            dones[t, b] = tr.done
        aux[W, b] = nxt.aux if nxt else ep.final_aux
    # time-major dense stack
    flat = GridObservation.stack([frames[t] for t in range(W + 1) for frames in obs])
    dense = flat.reshape((W + 1, batch_size) + flat.shape[1:])
    return Batch(dense, aux, actions, rewards, dones, picks)


# -- exploration --------------------------------------------------------------


def epsilon(episode_index, total_episodes, start=1.0, end=0.1):
    if not 0 <= episode_index < total_episodes:
        raise ValueError(f"episode index {episode_index} outside [0, {total_episodes})")
    if total_episodes == 1:
        return start
    f = episode_index / (total_episodes - 1)
    # weighted form hits both endpoints exactly
    return (1.0 - f) * start + f * end


def exploration_probs(episode_index, total_episodes, cfg: TrainConfig = TrainConfig()):
    if episode_index < cfg.bias_fraction * total_episodes:
        return np.asarray(cfg.bias_probs, float)
    return np.full(N_ACTIONS, 1.0 / N_ACTIONS)


def select_action(q, episode_index, total_episodes, rng, cfg: TrainConfig = TrainConfig(), eps=None):
    """Epsilon-greedy with the biased exploration distribution. Exactly one
    uniform draw decides explore vs exploit; exploring takes one more."""
    if eps is None:
        eps = epsilon(episode_index, total_episodes, cfg.eps_start, cfg.eps_end)
    if rng.random() < eps:
        return int(rng.choice(N_ACTIONS, p=exploration_probs(episode_index, total_episodes, cfg)))
    return int(np.argmax(q))


def sync_target(main: Network, target: Network, steps, every=10000):
    """Copy main into target when the cumulative step count is a multiple of
    ``every``. Returns True when a copy happened."""
    if steps > 0 and steps % every == 0:
        target.set_params(main.params)
        return True
    return False


# -- agent --------------------------------------------------------------------


@dataclass
class EpisodeResult:
    record: EpisodeRecord
    steps: int
    reward: float
    speeds: list
    distance: float
    terminal: str
    epsilon: float
    losses: list


class DRQNAgent:
    def __init__(self, cfg: TrainConfig = TrainConfig(), seed=0, dump_dir=None):
        self.cfg = cfg
        self.seed = seed
        self.main = build_qnetwork(rng=stream_rng(seed, "init"))
        self.target = self.main.copy()
        self.adam = AdamState.fresh(
            self.main.size, alpha=cfg.learning_rate, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, epsilon=cfg.adam_epsilon
        )
        self.memory = ReplayMemory(cfg.memory_size, cfg.window)
        self.replay_rng = stream_rng(seed, "replay")
        self.explore_rng = stream_rng(seed, "exploration")
        self.total_steps = 0
        self.episodes_done = 0
        self.updates = 0
        self.syncs = 0
        self.dump_dir = Path(dump_dir) if dump_dir else None

    def ready(self):
        return len(self.memory.eligible()) >= self.cfg.min_eligible_episodes

    def train_step(self):
        """One gradient update from a replay batch; None when replay is not
        ready yet."""
        if not self.ready():
            return None
        batch = sample_batch(self.memory, self.replay_rng, self.cfg.batch_size)
        if batch is None:
            return None
        W, B = batch.actions.shape
        q, _, caches = self.main.forward(batch.obs, batch.aux)
        q_tgt, _, _ = self.target.forward(batch.obs[1:], batch.aux[1:], record=False)
        y = ddqn_target(batch.rewards, batch.dones, q[1:], q_tgt, self.cfg.gamma)
        q_taken = np.take_along_axis(q[:W], batch.actions[..., None], axis=-1)[..., 0]
        loss, g = clipped_td_loss(q_taken, y)
        mean_loss = float(np.mean(loss))
        if not np.isfinite(mean_loss):
            self._dump(batch, q_taken, y)
            raise TrainingError(f"non-finite loss at update {self.updates}; batch dumped")
        dout = np.zeros_like(q)
        np.put_along_axis(dout[:W], batch.actions[..., None], (g / (W * B))[..., None].astype(q.dtype), axis=-1)
        grads = self.main.backward(caches, dout)
        new, self.adam = adam_update(self.main.params, grads, self.adam)
        self.main.set_params(new)
        self.updates += 1
        return mean_loss

    def _dump(self, batch, q_taken, y):
        path = (self.dump_dir or Path(".")) / f"nan_batch_{self.updates}.npz"
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            path, obs=batch.obs, aux=batch.aux, actions=batch.actions, rewards=batch.rewards,
            dones=batch.dones, picks=np.asarray(batch.picks), q_taken=q_taken, y=y,
        )
        log.error("non-finite loss; offending batch written to %s", path)

    def greedy_q(self, obs: GridObservation, aux, hidden):
        return qnet_forward(self.main, obs.to_array(), aux, hidden)

    def train_episode(self, env, episode_index, total_episodes, world_seed):
        """One epsilon-greedy rollout with learning. The recurrent state is
        carried through the episode and starts from zeros."""
        eps = epsilon(episode_index, total_episodes, self.cfg.eps_start, self.cfg.eps_end)
        obs, aux = env.reset(world_seed)
        hidden = None
        record = EpisodeRecord(seed=world_seed)
        losses = []
        done = False
        while not done:
            q, hidden = self.greedy_q(obs, aux, hidden)
            action = select_action(q, episode_index, total_episodes, self.explore_rng, self.cfg, eps)
            nobs, naux, r, done, info = env.step(action)
            record.append(Transition(obs, aux, action, float(r), done))
            obs, aux = nobs, naux
            # live episode joins replay only once finished
            self.total_steps += 1
            if self.total_steps % self.cfg.train_interval == 0:
                loss = self.train_step()
                if loss is not None:
                    losses.append(loss)
            if sync_target(self.main, self.target, self.total_steps, self.cfg.target_update):
                self.syncs += 1
        record.final_observation, record.final_aux = obs, aux
        record.terminal = env.stats.terminal
        self.memory.add(record)
        self.episodes_done += 1
        st = env.stats
        return EpisodeResult(record, st.steps, st.reward, st.speeds, st.distance, st.terminal, eps, losses)

    def metadata(self):
        return {
            "episodes_done": self.episodes_done,
            "total_steps": self.total_steps,
            "updates": self.updates,
            "syncs": self.syncs,
            "adam_t": self.adam.t,
            "replay": self.memory.stats(),
        }
