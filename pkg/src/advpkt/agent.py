"""Double-Q-learning agent: epsilon-greedy replay training, twin networks.

The policy network picks the next-state action, the target network
evaluates it; targets are r for terminal transitions and
r + gamma * Q_target(s', argmax_a Q_policy(s', a)) otherwise. The target
network is a hard copy of the policy weights taken every
``target_update`` learner steps. One agent is trained per attack class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .env import STATE_DIM, PerturbEnv
from .errors import TrainingError
from .nets import Adam, FeedForward, mse_selected

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EpsilonSchedule:
    """eps(step) = end + (start - end) * exp(-decay * step); per env step."""

    start: float = 1.0
    end: float = 0.01
    decay: float = 0.00002

    def value(self, step: int) -> float:
        return self.end + (self.start - self.end) * math.exp(-self.decay * step)


@dataclass
class AgentConfig:
    episodes: int = 50000
    batch_size: int = 256
    gamma: float = 0.8
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay: float = 0.00002
    buffer_capacity: int = 100000
    learning_rate: float = 0.001
    target_update: int = 10
    hidden_layers: tuple = (256, 128, 64)
    learn_every: int = 1  # env steps between learner updates

    def schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end,
                               self.epsilon_decay)


class ReplayBuffer:
    """Fixed-capacity FIFO ring with a uniform sampler."""

    def __init__(self, capacity: int, state_dim: int = STATE_DIM):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim), dtype=np.float32)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float64)
        self.s2 = np.zeros((capacity, state_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=bool)
        self.count = 0

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def push(self, s, a, r, s2, done) -> None:
        i = self.count % self.capacity
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.done[i] = done
        self.count += 1

    def sample(self, batch: int, rng: np.random.Generator):
        if len(self) < batch:
            raise TrainingError("replay buffer smaller than batch size")
        idx = rng.integers(0, len(self), size=batch)
        return (self.s[idx], self.a[idx], self.r[idx], self.s2[idx],
                self.done[idx])


def make_q_network(state_dim: int, n_actions: int, hidden: tuple,
                   rng: np.random.Generator,
                   dtype=np.float32) -> FeedForward:
    """Kaiming-initialized value network: state -> one value per action."""
    return FeedForward([state_dim, *hidden, n_actions], rng, dtype=dtype)


def act(net: FeedForward, state_vec: np.ndarray, epsilon: float,
        rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties resolve to the lowest action id."""
    n_actions = net.sizes[-1]
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    q = net.forward(state_vec)[0]
    return int(np.argmax(q))


def td_targets(policy: FeedForward, target: FeedForward, rewards: np.ndarray,
               next_states: np.ndarray, dones: np.ndarray,
               gamma: float = 0.8) -> np.ndarray:
    """Batch double-Q targets."""
    a_star = np.argmax(policy.forward(next_states), axis=1)
    q_next = target.forward(next_states)[np.arange(len(a_star)), a_star]
    return rewards + gamma * q_next.astype(np.float64) * ~dones


def td_target(reward: float, next_state: np.ndarray, done: bool,
              gamma: float, policy: FeedForward,
              target: FeedForward) -> float:
    """Single-transition target: r if terminal, else the double-Q backup."""
    if done:
        return float(reward)
    out = td_targets(policy, target, np.array([reward]),
                     np.asarray(next_state)[None, :], np.array([False]),
                     gamma)
    return float(out[0])


class DDQNTrainer:
    """Owns the twin networks, optimizer, buffer, and step counters."""

    def __init__(self, env: PerturbEnv, config: AgentConfig,
                 init_rng: np.random.Generator,
                 explore_rng: np.random.Generator,
                 sample_rng: np.random.Generator):
        self.env = env
        self.config = config
        self.policy = make_q_network(STATE_DIM, env.n_actions,
                                     tuple(config.hidden_layers), init_rng)
        self.target = self.policy.clone()
        self.optimizer = Adam(self.policy.parameters(),
                              lr=config.learning_rate)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.schedule = config.schedule()
        self.explore_rng = explore_rng
        self.sample_rng = sample_rng
        self.env_steps = 0
        self.learn_steps = 0

    def learn_step(self) -> float:
        """One minibatch update; hard target copy on the C-step boundary."""
        s, a, r, s2, done = self.buffer.sample(self.config.batch_size,
                                               self.sample_rng)
        targets = td_targets(self.policy, self.target, r, s2, done,
                             self.config.gamma)
        q = self.policy.forward(s, cache=True)
        loss, grad = mse_selected(q, a, targets)
        if not np.isfinite(loss):
            raise TrainingError(
                f"DDQN loss non-finite at learner step {self.learn_steps}")
        self.optimizer.step(self.policy.backward(grad))
        self.learn_steps += 1
        if self.learn_steps % self.config.target_update == 0:
            self.target.copy_from(self.policy)
        return loss

    def run_episode(self) -> int:
        state = self.env.reset()
        total = 0
        while True:
            epsilon = self.schedule.value(self.env_steps)
            action = act(self.policy, state.vector(), epsilon,
                         self.explore_rng)
            next_state, reward, done, _ = self.env.step(action)
            self.buffer.push(state.vector(), action, reward,
                             next_state.vector(), done)
            self.env_steps += 1
            total += reward
            if (len(self.buffer) >= self.config.batch_size
                    and self.env_steps % self.config.learn_every == 0):
                self.learn_step()
            state = next_state
            if done:
                return total

    def train(self) -> list[dict]:
        """Run all episodes; returns step/episode/reward records."""
        curve = []
        for episode in range(self.config.episodes):
            total = self.run_episode()
            curve.append({"step": self.env_steps, "episode": episode,
                          "reward": total})
        return curve


def train_agent(env: PerturbEnv, config: AgentConfig,
                init_rng: np.random.Generator,
                explore_rng: np.random.Generator,
                sample_rng: np.random.Generator
                ) -> tuple[FeedForward, list[dict], DDQNTrainer]:
    trainer = DDQNTrainer(env, config, init_rng, explore_rng, sample_rng)
    curve = trainer.train()
    return trainer.policy, curve, trainer


def moving_average(values, window: int = 100) -> np.ndarray:
    """Simple moving average over the episode rewards, for plotting."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return v
    window = min(window, len(v))
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="valid")


def write_reward_curve(path: str | Path, curve: list[dict],
                       window: int = 100) -> None:
    df = pd.DataFrame(curve, columns=["step", "episode", "reward"])
    ma = np.full(len(df), np.nan)
    if len(df):
        smoothed = moving_average(df["reward"].to_numpy(), window)
        ma[len(df) - len(smoothed):] = smoothed
    df["reward_ma"] = ma
    df.to_csv(path, index=False)


def save_checkpoint(path: str | Path, trainer: DDQNTrainer,
                    attack_class: str, seed: int) -> None:
    """Versioned agent file: weights, action table, schedule state, config."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "attack_class": attack_class,
        "action_table": [int(a) for a in trainer.env.actions],
        "env_steps": trainer.env_steps,
        "learn_steps": trainer.learn_steps,
        "epsilon": trainer.schedule.value(trainer.env_steps),
        "config": asdict(trainer.config),
        "seed": seed,
        "state_dim": STATE_DIM,
    }
    arrays = {}
    for i, p in enumerate(trainer.policy.parameters()):
        arrays[f"policy{i}"] = p
    for i, p in enumerate(trainer.target.parameters()):
        arrays[f"target{i}"] = p
    blob = json.dumps(meta, sort_keys=True)
    np.savez(path, meta=np.frombuffer(blob.encode(), dtype=np.uint8), **arrays)


@dataclass
class AgentCheckpoint:
    policy: FeedForward
    target: FeedForward
    action_table: list[int]
    attack_class: str
    config: AgentConfig
    env_steps: int
    seed: int


def load_checkpoint(path: str | Path) -> AgentCheckpoint:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise TrainingError(
                f"unsupported checkpoint format {meta['format_version']}")
        cfg = meta["config"]
        cfg["hidden_layers"] = tuple(cfg["hidden_layers"])
        config = AgentConfig(**cfg)
        n_actions = len(meta["action_table"])
        policy = make_q_network(meta["state_dim"], n_actions,
                                config.hidden_layers,
                                np.random.default_rng(0))
        target = policy.clone()
        policy.set_parameters(
            [data[f"policy{i}"] for i in range(2 * policy.n_layers)])
        target.set_parameters(
            [data[f"target{i}"] for i in range(2 * target.n_layers)])
    return AgentCheckpoint(policy, target, meta["action_table"],
                           meta["attack_class"], config, meta["env_steps"],
                           meta["seed"])
