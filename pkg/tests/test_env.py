"""Environment semantics: rewards, termination, label bit, reproducibility."""

import numpy as np
import pytest

from advpkt.env import STATE_DIM, EnvState, PerturbEnv, RewardSpec
from advpkt.errors import AdvPktError, ConfigError
from advpkt.features import feature_index
from advpkt.labeling import FORWARD, LabeledPacket
from advpkt.models import Ensemble
from advpkt.packet import TCP_FLAG_ACK, build_tcp_packet
from advpkt.perturb import Action, validate

from conftest import ConstantModel, ThresholdModel


def malicious(ttl=60, payload=b"", flags=TCP_FLAG_ACK, ts=1.0):
    p = build_tcp_packet("172.16.0.66", "10.0.0.9", 4000, 80, flags=flags,
                         ttl=ttl, payload=payload, ts=ts)
    return LabeledPacket(p, "attack", "PortScan", FORWARD)


TTL_FEATURE = 8


def ttl_ensemble(cutoffs=(61, 61, 61)):
    """Members that call anything with TTL <= cutoff malicious."""
    return Ensemble(tuple(
        ThresholdModel(TTL_FEATURE, c / 255.0, above_is_malicious=False)
        for c in cutoffs))


def make_env(pool=None, ensemble=None, seed=0, **kw):
    return PerturbEnv(pool=pool if pool is not None else [malicious()],
                      ensemble=ensemble or ttl_ensemble(),
                      corpus=b"corpusbytes0" * 8,
                      rng=np.random.default_rng(seed), **kw)


class TestRewardSpec:
    def test_paper_reward_table(self):
        spec = RewardSpec()
        assert spec.reward(0) == -2
        assert spec.reward(1) == 200
        assert spec.reward(2) == 400
        assert spec.reward(3) == 600


class TestReset:
    def test_empty_pool_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            make_env(pool=[])

    def test_pool_of_one_always_served(self):
        env = make_env()
        ids = {env.reset().features.provenance for _ in range(5)}
        assert len(ids) == 1

    def test_seeded_rng_reproduces_sample_sequence(self):
        pool = [malicious(ttl=40 + i, ts=float(i)) for i in range(10)]
        a = make_env(pool=pool, seed=9)
        b = make_env(pool=pool, seed=9)
        seq_a = [a.reset().features.provenance for _ in range(20)]
        seq_b = [b.reset().features.provenance for _ in range(20)]
        assert seq_a == seq_b

    def test_payload_cursor_cleared_between_episodes(self):
        env = make_env()
        env.reset()
        append = env.actions.index(Action.PAYLOAD_APPEND)
        env.step(append)
        first = env.current_packet.tcp_payload
        env.reset()
        env.step(append)
        assert env.current_packet.tcp_payload == first

    def test_initial_label_uses_all_members_rule(self):
        env = make_env()
        assert env.reset().label == 1
        evaded = make_env(ensemble=Ensemble(tuple(ConstantModel(0)
                                                  for _ in range(3))))
        assert evaded.reset().label == 0


class TestStep:
    def test_state_dimension_is_1526(self):
        env = make_env()
        state = env.reset()
        assert STATE_DIM == 1526
        assert state.vector().shape == (1526,)
        assert state.vector()[-1] == 1.0

    def test_full_evasion_pays_600_and_terminates(self):
        env = make_env(pool=[malicious(ttl=61)])  # one step from benign
        env.reset()
        state, reward, done, info = env.step(env.actions.index(Action.TTL_INC))
        assert info["k"] == 3
        assert reward == 600 and done
        assert state.label == 0

    def test_partial_evasion_pays_but_does_not_terminate(self):
        env = make_env(ensemble=ttl_ensemble((61, 62, 63)),
                       pool=[malicious(ttl=61)])
        env.reset()
        state, reward, done, info = env.step(env.actions.index(Action.TTL_INC))
        assert info["k"] == 1
        assert reward == 200 and not done
        assert state.label == 1
        state, reward, done, _ = env.step(env.actions.index(Action.TTL_INC))
        assert reward == 400 and not done

    def test_timeout_after_max_steps(self):
        env = make_env(pool=[malicious(ttl=2)], max_steps=30)
        env.reset()
        for i in range(30):
            state, reward, done, _ = env.step(
                env.actions.index(Action.TTL_DEC))
            assert reward == -2
        assert done and state.step_index == 30

    def test_step_after_done_raises(self):
        env = make_env(pool=[malicious(ttl=61)])
        env.reset()
        env.step(env.actions.index(Action.TTL_INC))
        with pytest.raises(AdvPktError, match="reset"):
            env.step(0)

    def test_noop_flows_through_with_k_unchanged(self):
        env = make_env(ensemble=ttl_ensemble((61, 63, 63)),
                       pool=[malicious(ttl=61)])
        env.reset()
        _, _, _, info1 = env.step(env.actions.index(Action.TTL_INC))
        # MSS_INC is inapplicable on a non-SYN packet: a no-op
        _, reward, _, info2 = env.step(env.actions.index(Action.MSS_INC))
        assert not info2["changed"]
        assert info2["k"] == info1["k"]
        assert reward == 200

    def test_rewards_always_in_the_fixed_set(self):
        rng = np.random.default_rng(5)
        env = make_env(pool=[malicious(ttl=50)])
        for _ in range(10):
            env.reset()
            done = False
            while not done:
                _, reward, done, _ = env.step(int(rng.integers(env.n_actions)))
                assert reward in (-2, 200, 400, 600)

    def test_packet_always_validates_after_step(self):
        rng = np.random.default_rng(6)
        env = make_env(pool=[malicious(ttl=50)])
        for _ in range(5):
            env.reset()
            done = False
            while not done:
                state, _, done, _ = env.step(int(rng.integers(env.n_actions)))
                assert validate(state.packet)

    def test_trace_records_steps(self):
        env = make_env(pool=[malicious(ttl=61)])
        env.reset()
        env.step(env.actions.index(Action.TTL_INC))
        assert len(env.trace) == 1
        rec = env.trace[0]
        assert (rec.step, rec.k, rec.reward) == (1, 3, 600)
        assert rec.action_id == int(Action.TTL_INC)


class TestActionSubsets:
    def test_restricted_action_table(self):
        env = make_env(actions=(Action.TTL_INC, Action.PAYLOAD_APPEND))
        assert env.n_actions == 2
        env.reset()
        state, _, _, info = env.step(0)
        assert state.packet.ttl == 61

    def test_trajectory_reproducible_from_seed_and_policy(self):
        pool = [malicious(ttl=40 + i, ts=float(i)) for i in range(5)]

        def run():
            env = make_env(pool=pool, seed=3)
            rng = np.random.default_rng(42)
            rewards = []
            for _ in range(8):
                env.reset()
                done = False
                while not done:
                    _, r, done, _ = env.step(int(rng.integers(env.n_actions)))
                    rewards.append(r)
            return rewards

        assert run() == run()
