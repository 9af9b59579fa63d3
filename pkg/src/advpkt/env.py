"""Episodic perturbation environment around the surrogate ensemble.

Each episode serves one randomly drawn malicious packet. The agent's
actions mutate it through the perturbation engine; after every step the
ensemble re-judges the packet and the reward scales with the number of
members it evades. An episode ends on full evasion or after the step
budget. Partial evasion pays out but does not terminate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import perturb
from .errors import AdvPktError, ConfigError
from .features import FeatureVector, defeaturize_sync, featurize
from .labeling import LabeledPacket
from .models import Ensemble
from .packet import RawPacket
from .perturb import Action, N_ACTIONS

MAX_EPISODE_STEPS = 30

STATE_DIM = 1526  # 1525 byte features + the ensemble's label bit


@dataclass(frozen=True)
class RewardSpec:
    """k members evaded pay k * evade_bonus; zero pays the penalty."""

    evade_bonus: int = 200
    fail_penalty: int = -2

    def reward(self, k: int) -> int:
        return k * self.evade_bonus if k > 0 else self.fail_penalty


@dataclass
class EnvState:
    packet: RawPacket
    features: FeatureVector
    label: int  # 0 iff every ensemble member says benign
    step_index: int

    def vector(self) -> np.ndarray:
        """1526-dim observation handed to the agent."""
        return np.concatenate([self.features.values, [float(self.label)]])


@dataclass
class StepRecord:
    step: int
    action_id: int
    k: int
    reward: int


@dataclass
class PerturbEnv:
    """One instance per agent; independent instances parallelize episodes."""

    pool: list[LabeledPacket]
    ensemble: Ensemble
    corpus: bytes
    rng: np.random.Generator
    reward_spec: RewardSpec = field(default_factory=RewardSpec)
    max_steps: int = MAX_EPISODE_STEPS
    payload_chunk: int = perturb.PAYLOAD_CHUNK
    actions: tuple = tuple(Action)

    def __post_init__(self):
        if not self.pool:
            raise ConfigError("environment pool is empty")
        for a in self.actions:
            Action(a)
        self._state: EnvState | None = None
        self._k: int = 0
        self._cursor = 0
        self._done = True
        self.trace: list[StepRecord] = []

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_members(self) -> int:
        return len(self.ensemble.members)

    def _judge(self, features: FeatureVector) -> int:
        """Number of ensemble members the sample currently evades."""
        return self.ensemble.benign_count(features.values)

    def reset(self, index: int | None = None) -> EnvState:
        """Serve a uniformly drawn malicious sample; clear episode state.

        Evaluation passes an explicit ``index`` to roll the pool in order.
        """
        if index is None:
            index = int(self.rng.integers(len(self.pool)))
        lp = self.pool[index]
        features = featurize(lp)
        self._k = self._judge(features)
        label = 0 if self._k == self.n_members else 1
        self._state = EnvState(lp.packet, features, label, 0)
        self._cursor = 0
        self._done = False
        self.trace = []
        return self._state

    def step(self, action_index: int) -> tuple[EnvState, int, bool, dict]:
        """Apply one action; returns (state, reward, done, info)."""
        if self._state is None or self._done:
            raise AdvPktError("step() called on a finished episode; reset first")
        action = Action(self.actions[action_index])
        result = perturb.apply(self._state.packet, action, corpus=self.corpus,
                               payload_cursor=self._cursor,
                               chunk=self.payload_chunk)
        if result.changed:
            features = defeaturize_sync(result.packet, self._state.features)
            self._k = self._judge(features)
        else:
            features = self._state.features  # no-ops keep k unchanged
        self._cursor = result.payload_cursor
        k = self._k
        reward = self.reward_spec.reward(k)
        step_index = self._state.step_index + 1
        evaded = k == self.n_members
        done = evaded or step_index == self.max_steps
        label = 0 if evaded else 1
        self._state = EnvState(result.packet, features, label, step_index)
        self._done = done
        self.trace.append(StepRecord(step_index, int(action), k, reward))
        return self._state, reward, done, {"k": k, "changed": result.changed}

    @property
    def current_packet(self) -> RawPacket:
        if self._state is None:
            raise AdvPktError("environment has not been reset")
        return self._state.packet
