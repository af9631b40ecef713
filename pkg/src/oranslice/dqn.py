"""Deep Q-learning allocator over single-grant actions (u, b, m, level).

The environment is deterministic given the channel. A grant on a RU other
than the UE's current one re-associates the UE and releases its old PRBs; a
grant on a slot held by another member of the slice evicts the holder;
level 0 releases the slot. These rules keep the association, grant-below-
association and PRB-exclusivity constraints satisfied in every state. The
action mask is state dependent: it also removes levels above the slice cap
and grants that would push a RU over its power or fronthaul cap.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import ConfigError, NetworkConfig
from .esa import PowerGrid
from .nn import AdamState, DenseNet, backward, forward, huber, load_checkpoint, save_checkpoint
from .system import Allocation, Violation, check_feasible, objective, ue_rates


@dataclass(frozen=True)
class RewardWeights:
    theta_r: float = 1.0
    theta_const: float = -1.0
    theta_bias: float = 0.0

    def __post_init__(self):
        if not self.theta_r > 0:
            raise ConfigError("theta_r must be > 0")
        if self.theta_const > 0:
            raise ConfigError("theta_const must be <= 0")


def reward(objective_value: float, violations, w: RewardWeights = RewardWeights()) -> float:
    n_viol = violations if isinstance(violations, int) else len(violations)
    return w.theta_r * float(objective_value) + w.theta_const * n_viol + w.theta_bias


class ActionSpec(NamedTuple):
    u: int
    b: int
    m: int
    level: int


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool
    next_mask: np.ndarray | None = None


class SlicingEnv:
    """Grant-by-grant MDP on one channel, with a fixed horizon."""

    def __init__(self, cfg: NetworkConfig, h, grid: PowerGrid, horizon: int = 50,
                 weights: RewardWeights = RewardWeights()):
        self.cfg = cfg
        self.h = np.asarray(h, dtype=float)
        if self.h.shape != cfg.shape:
            raise ValueError(f"channel shape {self.h.shape} != {cfg.shape}")
        self.grid = grid
        self.levels = np.asarray(grid.levels)
        self.horizon = int(horizon)
        self.weights = weights
        u, b, m, s = cfg.shape
        self.ue_slice = cfg.ue_slice
        self.members = cfg.slice_members
        self.n_levels = len(self.levels)
        self.n_actions = u * b * m * self.n_levels
        caps = np.asarray(cfg.p_slice_max)[self.ue_slice]
        ok = self.levels[None, :] <= caps[:, None] * (1 + 1e-9)
        self.level_mask = np.broadcast_to(ok[:, None, None, :], (u, b, m, self.n_levels)).copy()
        own = self.h[np.arange(u), :, :, self.ue_slice]                     # (U, B, M)
        self._own = own
        self._grant_load = own[..., None] * self.levels                    # (U, B, M, L)
        self._budget = cfg.effective_ru_cap - cfg.quant_noise
        logh = np.log(np.maximum(own, 1e-12))
        self._channel_feat = ((logh - logh.mean()) / (logh.std() + 1e-8)).ravel()
        self.state_dim = 2 * u + 2 * u * b * m + 1
        self.reset()

    def decode(self, index: int) -> ActionSpec:
        u, b, m, _ = self.cfg.shape
        uu, bb, mm, lv = np.unravel_index(int(index), (u, b, m, self.n_levels))
        return ActionSpec(int(uu), int(bb), int(mm), int(lv))

    def encode(self, spec: ActionSpec) -> int:
        u, b, m, _ = self.cfg.shape
        return int(np.ravel_multi_index(tuple(spec), (u, b, m, self.n_levels)))

    def reset(self) -> np.ndarray:
        u = self.cfg.num_ues
        own = self.h[np.arange(u), :, :, self.ue_slice]
        self.assoc = np.argmax(own.mean(axis=2), axis=1)
        self.level_idx = np.zeros((u, self.cfg.num_rus, self.cfg.num_prbs), dtype=int)
        self.t = 0
        self._refresh()
        return self.state_vector()

    def allocation(self) -> Allocation:
        a = Allocation.empty(self.cfg)
        u_idx = np.arange(self.cfg.num_ues)
        a.alpha[u_idx, self.assoc, self.ue_slice] = 1.0
        for u in u_idx:
            s = self.ue_slice[u]
            a.beta[u, :, :, s] = self.level_idx[u] > 0
            a.power[u, :, :, s] = self.levels[self.level_idx[u]]
        return a

    def _refresh(self) -> None:
        a = self.allocation()
        self.alloc = a
        self.objective = objective(self.h, a, self.cfg)
        self.violations = check_feasible(self.h, a, self.cfg)
        r = ue_rates(self.h, a, self.cfg)[np.arange(self.cfg.num_ues), self.ue_slice]
        rmin = np.asarray(self.cfg.r_min)[self.ue_slice]
        self.satisfied = (r >= rmin * (1 - 1e-9)).astype(float)
        self.reward = reward(self.objective, self.violations, self.weights)
        self.mask = self._mask()

    def _mask(self) -> np.ndarray:
        u_n, b_n, m_n, s_n = self.cfg.shape
        contrib = self._own * self.levels[self.level_idx]                  # (U, B, M)
        load = contrib.sum(axis=(0, 2))                                    # (B,)
        slot = np.zeros((b_n, m_n, s_n))
        for s, members in enumerate(self.members):
            slot[:, :, s] = contrib[members].sum(axis=0)
        freed = slot[:, :, self.ue_slice].transpose(2, 0, 1)               # (U, B, M)
        new_load = load[None, :, None, None] - freed[..., None] + self._grant_load
        ok = new_load <= self._budget + 1e-9 * abs(self._budget) + 1e-12
        ok[..., 0] = True
        return (self.level_mask & ok).ravel()

    def state_vector(self) -> np.ndarray:
        top = max(self.n_levels - 1, 1)
        per_ue = self.level_idx.reshape(self.cfg.num_ues, -1).max(axis=1) / top
        return np.concatenate([self.satisfied, per_ue, self.level_idx.ravel() / top,
                               self._channel_feat, [self.t / self.horizon]])

    def apply(self, spec: ActionSpec) -> None:
        u, b, m, lv = spec
        if lv == 0:
            if self.assoc[u] == b:
                self.level_idx[u, b, m] = 0
            return
        if self.assoc[u] != b:
            self.level_idx[u] = 0
            self.assoc[u] = b
        for v in self.members[self.ue_slice[u]]:
            if v != u:
                self.level_idx[v, b, m] = 0
        self.level_idx[u, b, m] = lv

    def step(self, action: int):
        if not 0 <= action < self.n_actions or not self.mask[action]:
            raise ValueError(f"illegal action {action}")
        self.apply(self.decode(action))
        self.t += 1
        self._refresh()
        return self.state_vector(), self.reward, self.t >= self.horizon


class ReplayBuffer:
    """FIFO ring of transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def push(self, *transition) -> None:
        """Append (state, action, reward, next_state, done[, next_mask]); evicts the oldest when full."""
        self._items.append(Transition(*transition))

    def __getitem__(self, i) -> Transition:
        return self._items[i]

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(len(self._items), size=min(batch_size, len(self._items)), replace=False)
        batch = [self._items[i] for i in idx]
        masks = None
        if all(t.next_mask is not None for t in batch):
            masks = np.stack([t.next_mask for t in batch])
        return (np.stack([t.state for t in batch]), np.array([t.action for t in batch]),
                np.array([t.reward for t in batch]), np.stack([t.next_state for t in batch]),
                np.array([t.done for t in batch], dtype=float), masks)


def q_values(qnet: DenseNet, state) -> np.ndarray:
    return forward(qnet, np.atleast_2d(state))[0]


def epsilon_greedy(qnet, state, epsilon: float, mask, rng: np.random.Generator) -> int:
    """Masked argmax (lowest index on ties) with probability 1 - epsilon, else uniform over the mask."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    mask = np.asarray(mask, dtype=bool)
    legal = np.flatnonzero(mask)
    if not len(legal):
        raise ValueError("every action is masked")
    if rng.random() < epsilon:
        return int(legal[rng.integers(len(legal))])
    q = np.asarray(qnet(state) if callable(qnet) else q_values(qnet, state)[0], dtype=float)
    return int(np.argmax(np.where(mask, q, -np.inf)))


def epsilon_at(step: int, start: float = 1.0, final: float = 0.1, decay: float = 0.9995) -> float:
    return max(final, start * decay ** step)


@dataclass(frozen=True)
class DqnHyper:
    episodes: int = 250
    steps: int = 50
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_final: float = 0.1
    eps_decay: float = 0.9995
    replay_size: int = 400
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    target_sync: int = 100
    hidden: tuple[int, ...] = (64, 64)
    huber_delta: float = 1.0
    theta_r: float = 1.0
    theta_const: float = -1.0
    theta_bias: float = 0.0
    n_levels: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))
        if min(self.episodes, self.steps, self.replay_size, self.batch_size,
               self.target_sync) < 1:
            raise ConfigError("episode, step, replay, batch and sync counts must be >= 1")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.n_levels < 2:
            raise ConfigError("n_levels must be >= 2")
        self.weights  # validates the reward signs

    @property
    def weights(self) -> RewardWeights:
        return RewardWeights(self.theta_r, self.theta_const, self.theta_bias)

    @classmethod
    def from_overrides(cls, overrides: dict | None = None) -> "DqnHyper":
        overrides = dict(overrides or {})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise ConfigError(f"unknown hyperparameter: {', '.join(unknown)}")
        return cls(**overrides)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


class DqnResult(NamedTuple):
    qnet: DenseNet
    history: list[dict]
    env_steps: int
    optimizer_steps: int


def _td_update(online, target, batch, hp: DqnHyper, adam: AdamState) -> float:
    states, actions, rewards, next_states, dones, masks = batch
    q_next = forward(target, next_states)[0]
    boot = (q_next if masks is None else np.where(masks, q_next, -np.inf)).max(axis=1)
    y = rewards + hp.gamma * (1.0 - dones) * boot
    q, cache = forward(online, states)
    rows = np.arange(len(actions))
    loss, dq_sel = huber(q[rows, actions], y, hp.huber_delta)
    dq = np.zeros_like(q)
    dq[rows, actions] = dq_sel
    grads, _ = backward(online, cache, dq)
    adam.step_update(online.params(), grads)
    return loss


def train_dqn(cfg: NetworkConfig, h, hyper: DqnHyper | None = None,
              grid: PowerGrid | None = None) -> DqnResult:
    """Vanilla DQN with replay and a periodically synced target network on one channel."""
    hp = hyper or DqnHyper()
    grid = grid or PowerGrid.for_config(cfg, hp.n_levels)
    env = SlicingEnv(cfg, h, grid, hp.steps, hp.weights)
    init_ss, explore_ss, sample_ss = np.random.SeedSequence(hp.seed).spawn(3)
    explore_rng = np.random.default_rng(explore_ss)
    sample_rng = np.random.default_rng(sample_ss)
    sizes = [env.state_dim, *hp.hidden, env.n_actions]
    online = DenseNet.build(sizes, ["relu"] * len(hp.hidden) + ["linear"],
                            np.random.default_rng(init_ss))
    target = online.copy()
    adam = AdamState(lr=hp.lr, beta1=hp.beta1, beta2=hp.beta2)
    buffer = ReplayBuffer(hp.replay_size)
    history, n, updates = [], 0, 0
    for episode in range(hp.episodes):
        state = env.reset()
        total, losses = 0.0, []
        for _ in range(hp.steps):
            eps = epsilon_at(n, hp.eps_start, hp.eps_final, hp.eps_decay)
            action = epsilon_greedy(online, state, eps, env.mask, explore_rng)
            next_state, r, done = env.step(action)
            buffer.push(state, action, r, next_state, done, env.mask.copy())
            total += r
            n += 1
            if len(buffer) >= hp.batch_size:
                losses.append(_td_update(online, target, buffer.sample(hp.batch_size, sample_rng),
                                         hp, adam))
                updates += 1
            if n % hp.target_sync == 0:
                target = online.copy()
            state = next_state
            if done:
                break
        history.append({"episode": episode, "total_reward": total,
                        "epsilon": epsilon_at(n, hp.eps_start, hp.eps_final, hp.eps_decay),
                        "loss_mean": float(np.mean(losses)) if losses else math.nan})
    return DqnResult(online, history, n, updates)


class Rollout(NamedTuple):
    alloc: Allocation
    objective: float
    violations: list[Violation]
    reward: float
    step: int


def greedy_rollout(qnet: DenseNet, env: SlicingEnv) -> Rollout:
    """Run the greedy policy for one horizon and keep its best state.

    States are ranked feasible first, then by reward; ties keep the earlier step.
    """
    state = env.reset()
    best = None
    for t in range(env.horizon):
        action = int(np.argmax(np.where(env.mask, q_values(qnet, state)[0], -np.inf)))
        state, r, done = env.step(action)
        key = (not env.violations, r)
        if best is None or key > best[0]:
            best = (key, Rollout(env.alloc.copy(), env.objective, list(env.violations), r, t + 1))
        if done:
            break
    return best[1]


HISTORY_COLUMNS = ("episode", "total_reward", "epsilon", "loss_mean")


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row["episode"]] + [f"{row[c]:.9g}" for c in HISTORY_COLUMNS[1:]])


def save_qnet(path, qnet: DenseNet, cfg: NetworkConfig, hyper: DqnHyper, grid: PowerGrid,
              step: int = 0) -> str:
    meta = {"kind": "dqn", "config": cfg.to_dict(), "hyper": hyper.to_dict(),
            "grid": grid.to_dict()}
    return save_checkpoint(path, {"online": qnet}, meta=meta, step=step)


def load_qnet(path):
    """Returns (qnet, cfg, hyper, grid)."""
    nets, _, header = load_checkpoint(path)
    meta = header["meta"]
    if meta.get("kind") != "dqn":
        raise ValueError(f"{path} is not a DQN checkpoint")
    return (nets["online"], NetworkConfig.from_dict(meta["config"]), DqnHyper(**meta["hyper"]),
            PowerGrid(tuple(meta["grid"]["levels"])))


class DQNAllocator(BaseEstimator):
    """Estimator wrapper: ``fit(h)`` trains on one channel, ``predict(h)`` returns its allocation."""

    def __init__(self, cfg: NetworkConfig | None = None, episodes: int = 250, steps: int = 50,
                 gamma: float = 0.9, replay_size: int = 400, target_sync: int = 100,
                 n_levels: int = 3, seed: int = 0):
        self.cfg = cfg
        self.episodes = episodes
        self.steps = steps
        self.gamma = gamma
        self.replay_size = replay_size
        self.target_sync = target_sync
        self.n_levels = n_levels
        self.seed = seed

    def _hyper(self) -> DqnHyper:
        return DqnHyper(episodes=self.episodes, steps=self.steps, gamma=self.gamma,
                        replay_size=self.replay_size, target_sync=self.target_sync,
                        n_levels=self.n_levels, seed=self.seed)

    def fit(self, h, y=None):
        if self.cfg is None:
            raise ValueError("cfg is required")
        hp = self._hyper()
        self.grid_ = PowerGrid.for_config(self.cfg, hp.n_levels)
        res = train_dqn(self.cfg, h, hp, self.grid_)
        self.qnet_, self.history_ = res.qnet, res.history
        return self

    def predict(self, h) -> Allocation:
        check_is_fitted(self, "qnet_")
        return greedy_rollout(self.qnet_, SlicingEnv(self.cfg, h, self.grid_, self.steps)).alloc
