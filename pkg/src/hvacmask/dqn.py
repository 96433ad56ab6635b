"""Masked deep Q-learning over the joint FCU action space.

The mask enters in three places: epsilon-greedy selection is restricted to
feasible actions, invalid Q-values are suppressed by subtracting a large
constant, and the Bellman target maximizes over the *next* state's feasible
set. With an all-ones mask every code path reduces exactly to vanilla DQN.

Next-state masks are stored in the replay transition at collection time.
The provider is deterministic, so this is equivalent to re-querying it at
update time and avoids the repeated lookups.
"""

import time
from dataclasses import dataclass

import numpy as np

from .comfort import episode_energy
from .environment import N_ACTIONS, N_FEATURES, BuildingEnv
from .masking import joint_mask, remaining_percentage
from .qnet import AdamOptimizer, QNetwork, SparseColumnScratch

PACKED_MASK_BYTES = N_ACTIONS // 8


class MaskViolationError(RuntimeError):
    """An emitted action fell outside the feasible set."""


@dataclass
class TrainConfig:
    gamma: float = 0.99
    learning_rate: float = 1e-3
    replay_capacity: int = 50000
    batch_size: int = 64
    warmup_transitions: int = 500
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    target_update_every: int = 500
    mask_penalty: float = 1e9
    episodes: int = 300
    train_freq: int = 4
    hidden_sizes: tuple = (256, 256)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.mask_penalty <= 0:
            raise ValueError("mask penalty must be positive")
        if self.batch_size <= 0 or self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must hold at least one batch")
        if self.train_freq <= 0 or self.target_update_every <= 0:
            raise ValueError("train_freq and target_update_every must be positive")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            gamma=d["gamma"],
            learning_rate=d["learning_rate"],
            replay_capacity=d["replay_capacity"],
            batch_size=d["batch_size"],
            warmup_transitions=d["warmup_transitions"],
            epsilon_start=d["epsilon_start"],
            epsilon_end=d["epsilon_end"],
            epsilon_decay_fraction=d["epsilon_decay_fraction"],
            target_update_every=d["target_update_every"],
            mask_penalty=d["mask_penalty"],
            episodes=d["episodes"],
            train_freq=d["train_freq"],
            hidden_sizes=tuple(d["hidden_sizes"]),
        )

    def layer_sizes(self) -> tuple:
        return (N_FEATURES, *self.hidden_sizes, N_ACTIONS)


def epsilon_at(step: int, total_steps: int, config: TrainConfig) -> float:
    horizon = max(1, int(config.epsilon_decay_fraction * total_steps))
    frac = min(1.0, step / horizon)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def masked_q(q_values: np.ndarray, mask_bits: np.ndarray, penalty: float) -> np.ndarray:
    """q - C*(1 - m): feasible entries unchanged, infeasible pushed down by C."""
    q_values = np.asarray(q_values, dtype=float)
    if q_values.shape[-1] != mask_bits.shape[-1]:
        raise ValueError("Q-vector and mask lengths differ")
    return q_values - penalty * (1.0 - mask_bits.astype(float))


def select_action(
    qnet: QNetwork,
    features: np.ndarray,
    mask_bits: np.ndarray | None,
    epsilon: float,
    rng: np.random.Generator,
    penalty: float = 1e9,
) -> int:
    """Epsilon-greedy over the feasible set; ties in the greedy branch break
    toward the lowest index. The result always carries a set mask bit."""
    if mask_bits is not None and not mask_bits.any():
        raise ValueError("empty action mask")
    if rng.random() < epsilon:
        if mask_bits is None:
            return int(rng.integers(N_ACTIONS))
        valid = np.flatnonzero(mask_bits)
        return int(valid[rng.integers(valid.size)])
    q = qnet.forward(features)
    if mask_bits is None:
        return int(np.argmax(q))
    return int(np.argmax(masked_q(q, mask_bits, penalty)))


class ReplayBuffer:
    """Capacity-bounded FIFO over transition arrays; uniform sampling."""

    def __init__(self, capacity: int, store_masks: bool):
        self.capacity = capacity
        self.store_masks = store_masks
        self.features = np.zeros((capacity, N_FEATURES))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_features = np.zeros((capacity, N_FEATURES))
        self.dones = np.zeros(capacity, dtype=bool)
        self.next_masks = (
            np.zeros((capacity, PACKED_MASK_BYTES), dtype=np.uint8) if store_masks else None
        )
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, features, action, reward, next_features, done, next_mask_bits) -> None:
        i = self._next
        self.features[i] = features
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_features[i] = next_features
        self.dones[i] = done
        if self.store_masks:
            if next_mask_bits is None:
                self.next_masks[i] = 0
            else:
                self.next_masks[i] = np.packbits(next_mask_bits)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        idx = rng.integers(0, self._size, size=batch_size)
        batch = {
            "features": self.features[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_features": self.next_features[idx],
            "dones": self.dones[idx],
            "next_masks": None,
        }
        if self.store_masks:
            unpacked = np.unpackbits(self.next_masks[idx], axis=1)
            batch["next_masks"] = unpacked.astype(bool)
        return batch


def bellman_target(batch: dict, target_net: QNetwork, gamma: float,
                   penalty: float = 1e9) -> np.ndarray:
    """y = r + (1 - d) * gamma * max over the stored next-state mask of the
    target network's Q-values (plain max when masking is disabled)."""
    q_next = target_net.forward(batch["next_features"])
    if batch["next_masks"] is None:
        best = q_next.max(axis=1)
    else:
        # Single-pass masked max; -penalty stands in for rows with no valid
        # bit (terminal transitions), which the (1 - d) factor removes.
        best = q_next.max(axis=1, where=batch["next_masks"], initial=-penalty)
    return batch["rewards"] + (1.0 - batch["dones"].astype(float)) * gamma * best


def td_update(
    qnet: QNetwork,
    target_net: QNetwork,
    optimizer: AdamOptimizer,
    batch: dict,
    config: TrainConfig,
    scratch=None,
) -> float:
    """One gradient step on the mean squared TD error; returns the pre-step loss."""
    y = bellman_target(batch, target_net, config.gamma, config.mask_penalty)
    activations = qnet.hidden_activations(batch["features"])
    q_sa = qnet.q_for_actions(activations, batch["actions"])
    resid = q_sa - y
    loss = float(np.mean(resid**2))
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite TD loss (max |y|={np.abs(y).max():.3e}, "
            f"max |q|={np.abs(q_sa).max():.3e})"
        )
    grad_vals = 2.0 * resid / resid.shape[0]
    grads_w, grads_b = qnet.backward_sparse(
        activations, batch["actions"], grad_vals, scratch=scratch
    )
    optimizer.step(qnet, grads_w, grads_b)
    return loss


@dataclass
class TrainResult:
    episode_rewards: np.ndarray
    qnet: QNetwork
    grad_steps: int
    config: TrainConfig
    seed: int
    wall_time_s: float = 0.0

    def final_window_mean(self, fraction: float = 0.05) -> float:
        k = max(1, int(round(fraction * self.episode_rewards.size)))
        return float(self.episode_rewards[-k:].mean())

    def auc(self) -> float:
        """Unit-width integral of the learning curve (sum of episode rewards)."""
        return float(self.episode_rewards.sum())


def _mask_bits_for(provider, state) -> np.ndarray:
    return joint_mask(provider.feasible_sets(state)).bits


def train(
    env: BuildingEnv,
    mask_provider,
    config: TrainConfig,
    seed: int = 0,
    on_episode_end=None,
) -> TrainResult:
    """Masked DQN training loop.

    mask_provider=None disables every masking code path (vanilla DQN). A
    provider returning full level sets takes the masked code path but is
    numerically identical to the disabled one.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    qnet = QNetwork(config.layer_sizes(), seed=seed)
    target = qnet.clone()
    optimizer = AdamOptimizer(qnet, learning_rate=config.learning_rate)
    buffer = ReplayBuffer(config.replay_capacity, store_masks=mask_provider is not None)
    scratch = SparseColumnScratch()

    steps_per_episode = env.scenario.episode_steps
    total_steps = config.episodes * steps_per_episode
    episode_rewards = np.zeros(config.episodes)
    global_step = 0
    grad_steps = 0

    for ep in range(config.episodes):
        state = env.reset(seed=seed * 1_000_003 + ep)
        mask_bits = _mask_bits_for(mask_provider, state) if mask_provider else None
        ep_reward = 0.0
        done = False
        while not done:
            eps = epsilon_at(global_step, total_steps, config)
            features = env.features(state)
            action = select_action(qnet, features, mask_bits, eps, rng, config.mask_penalty)
            if mask_bits is not None and not mask_bits[action]:
                raise MaskViolationError(f"action {action} outside the feasible set")
            next_state, reward, done, _info = env.step(action)
            next_features = env.features(next_state)
            if mask_provider is not None and not done:
                next_mask_bits = _mask_bits_for(mask_provider, next_state)
            else:
                next_mask_bits = None
            buffer.add(features, action, reward, next_features, done,
                       next_mask_bits if mask_provider is not None else None)
            state = next_state
            mask_bits = next_mask_bits
            ep_reward += reward
            global_step += 1

            if len(buffer) >= config.warmup_transitions and global_step % config.train_freq == 0:
                batch = buffer.sample(config.batch_size, rng)
                td_update(qnet, target, optimizer, batch, config, scratch=scratch)
                grad_steps += 1
                if grad_steps % config.target_update_every == 0:
                    target.copy_from(qnet)

        episode_rewards[ep] = ep_reward
        if on_episode_end is not None:
            on_episode_end(ep, ep_reward)

    return TrainResult(
        episode_rewards=episode_rewards,
        qnet=qnet,
        grad_steps=grad_steps,
        config=config,
        seed=seed,
        wall_time_s=time.perf_counter() - t0,
    )


class GreedyQPolicy:
    """Greedy (epsilon = 0) policy over raw or masked Q-values."""

    needs_mask = False

    def __init__(self, qnet: QNetwork, penalty: float = 1e9):
        self.qnet = qnet
        self.penalty = penalty

    def act(self, state, features, mask, rng) -> int:
        q = self.qnet.forward(features)
        if mask is None:
            return int(np.argmax(q))
        return int(np.argmax(masked_q(q, mask, self.penalty)))


@dataclass
class EpisodeStats:
    reward: float
    ppd_mean_pct: float
    pmv_abs_mean: float
    energy_kWh: float
    remaining_max_pct: float | None = None
    remaining_min_pct: float | None = None
    remaining_avg_pct: float | None = None
    valid_max: int | None = None
    valid_min: int | None = None
    valid_avg: float | None = None


@dataclass
class EvalReport:
    episodes: list
    seeds: list

    def _agg(self, attr) -> tuple[float, float]:
        vals = np.array([getattr(e, attr) for e in self.episodes], dtype=float)
        return float(vals.mean()), float(vals.std())

    def summary(self) -> dict:
        out = {}
        for attr in ("reward", "ppd_mean_pct", "pmv_abs_mean", "energy_kWh"):
            mean, std = self._agg(attr)
            out[f"{attr}_mean"] = mean
            out[f"{attr}_std"] = std
        if self.episodes and self.episodes[0].remaining_avg_pct is not None:
            out["remaining_max_pct"] = max(e.remaining_max_pct for e in self.episodes)
            out["remaining_min_pct"] = min(e.remaining_min_pct for e in self.episodes)
            out["remaining_avg_pct"] = float(
                np.mean([e.remaining_avg_pct for e in self.episodes])
            )
            out["valid_actions_max"] = max(e.valid_max for e in self.episodes)
            out["valid_actions_min"] = min(e.valid_min for e in self.episodes)
            out["valid_actions_avg"] = float(np.mean([e.valid_avg for e in self.episodes]))
        return out

    def format_table(self) -> str:
        s = self.summary()
        lines = [
            f"{'metric':<24}{'mean':>14}{'std':>12}",
            "-" * 50,
            f"{'episode reward':<24}{s['reward_mean']:>14.2f}{s['reward_std']:>12.2f}",
            f"{'PPD mean (%)':<24}{s['ppd_mean_pct_mean']:>14.2f}{s['ppd_mean_pct_std']:>12.2f}",
            f"{'PMV abs mean':<24}{s['pmv_abs_mean_mean']:>14.3f}{s['pmv_abs_mean_std']:>12.3f}",
            f"{'energy (kWh)':<24}{s['energy_kWh_mean']:>14.3f}{s['energy_kWh_std']:>12.3f}",
        ]
        if "remaining_avg_pct" in s:
            lines.append("")
            lines.append(f"{'remaining action space':<24}{'percent':>14}{'actions':>12}")
            lines.append("-" * 50)
            lines.append(
                f"{'maximum':<24}{s['remaining_max_pct']:>13.2f}%{s['valid_actions_max']:>12d}"
            )
            lines.append(
                f"{'minimum':<24}{s['remaining_min_pct']:>13.2f}%{s['valid_actions_min']:>12d}"
            )
            lines.append(
                f"{'average':<24}{s['remaining_avg_pct']:>13.2f}%{s['valid_actions_avg']:>12.2f}"
            )
        return "\n".join(lines)


def evaluate(
    policy,
    env: BuildingEnv,
    mask_provider,
    n_episodes: int,
    seeds,
) -> EvalReport:
    """Greedy rollouts; per-episode comfort metrics are averaged over the
    occupied steps only (unoccupied steps carry no comfort signal)."""
    seeds = list(seeds)
    if len(seeds) != n_episodes:
        raise ValueError("need one seed per evaluation episode")
    episodes = []
    for ep_seed in seeds:
        env_ss, pol_ss = np.random.SeedSequence(ep_seed).spawn(2)
        rng = np.random.default_rng(pol_ss)
        state = env.reset(seed=env_ss)
        done = False
        rewards, powers, ppds, pmvs, remaining, counts = [], [], [], [], [], []
        while not done:
            if mask_provider is not None:
                mask = joint_mask(mask_provider.feasible_sets(state))
                mask_bits = mask.bits
                remaining.append(remaining_percentage(mask))
                counts.append(mask.joint_count)
            else:
                mask_bits = None
            features = env.features(state)
            action = policy.act(state, features, mask_bits, rng)
            if mask_bits is not None and not mask_bits[action]:
                raise MaskViolationError(f"action {action} outside the feasible set")
            state, reward, done, info = env.step(action)
            m = info["metrics"]
            rewards.append(reward)
            powers.append(m.power_kW)
            if m.occupants_total > 0:
                ppds.append(m.ppd_mean_pct)
                pmvs.append(m.pmv_abs_mean)
        stats = EpisodeStats(
            reward=float(np.sum(rewards)),
            ppd_mean_pct=float(np.mean(ppds)) if ppds else 0.0,
            pmv_abs_mean=float(np.mean(pmvs)) if pmvs else 0.0,
            energy_kWh=episode_energy(powers),
        )
        if remaining:
            stats.remaining_max_pct = float(np.max(remaining))
            stats.remaining_min_pct = float(np.min(remaining))
            stats.remaining_avg_pct = float(np.mean(remaining))
            stats.valid_max = int(np.max(counts))
            stats.valid_min = int(np.min(counts))
            stats.valid_avg = float(np.mean(counts))
        episodes.append(stats)
    return EvalReport(episodes=episodes, seeds=seeds)
