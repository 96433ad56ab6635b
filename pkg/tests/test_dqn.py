import numpy as np
import pytest
from scipy import stats

from hvacmask.dqn import (
    GreedyQPolicy,
    ReplayBuffer,
    TrainConfig,
    bellman_target,
    epsilon_at,
    evaluate,
    masked_q,
    select_action,
    td_update,
    train,
)
from hvacmask.environment import N_ACTIONS, BuildingEnv, JointAction
from hvacmask.masking import FeasibleSets, FullMaskProvider, joint_mask
from hvacmask.policies import FullRandomPolicy, MaskedRandomPolicy, RuleBasedPolicy, baseline_policy
from hvacmask.qnet import AdamOptimizer, QNetwork

TOY = TrainConfig(hidden_sizes=(8, 8), batch_size=4, replay_capacity=64,
                  warmup_transitions=4, episodes=1, train_freq=1)


def toy_batch(rng, net, n=4, masked=True, done=None):
    batch = {
        "features": rng.normal(size=(n, 24)),
        "actions": rng.integers(0, N_ACTIONS, n),
        "rewards": rng.normal(size=n),
        "next_features": rng.normal(size=(n, 24)),
        "dones": np.zeros(n, bool) if done is None else done,
        "next_masks": (rng.random((n, N_ACTIONS)) < 0.3) if masked else None,
    }
    if batch["next_masks"] is not None:
        batch["next_masks"][:, 0] = True  # keep masks non-empty
    return batch


class TestMaskedQ:
    def test_full_mask_is_identity(self):
        q = np.random.default_rng(0).normal(size=N_ACTIONS)
        out = masked_q(q, np.ones(N_ACTIONS, bool), 1e9)
        np.testing.assert_array_equal(out, q)

    def test_single_valid_action_wins_argmax(self):
        q = np.linspace(-1, 1, N_ACTIONS)
        mask = np.zeros(N_ACTIONS, bool)
        mask[17] = True
        assert int(np.argmax(masked_q(q, mask, 1e9))) == 17

    def test_masked_entry_reduced_by_penalty(self):
        q = np.array([1.0, 2.0, 3.0, 4.0])
        mask = np.array([True, True, False, True])
        out = masked_q(q, mask, 1e9)
        assert out[2] == pytest.approx(3.0 - 1e9)
        assert out[0] == 1.0 and out[3] == 4.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            masked_q(np.zeros(4), np.zeros(5, bool), 1e9)


class TestSelectAction:
    def test_greedy_singleton_mask(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        mask = np.zeros(N_ACTIONS, bool)
        mask[123] = True
        rng = np.random.default_rng(0)
        assert select_action(net, np.zeros(24), mask, 0.0, rng) == 123

    def test_exploration_uniform_over_valid(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        mask = np.zeros(N_ACTIONS, bool)
        valid = [5, 900, 16000]
        mask[valid] = True
        rng = np.random.default_rng(1)
        draws = [select_action(net, np.zeros(24), mask, 1.0, rng) for _ in range(10000)]
        counts = [draws.count(v) for v in valid]
        assert sum(counts) == 10000
        chi = stats.chisquare(counts)
        assert chi.pvalue > 1e-3

    def test_result_always_in_mask(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        rng = np.random.default_rng(2)
        feats = rng.normal(size=24)
        for _ in range(200):
            mask = rng.random(N_ACTIONS) < 0.01
            if not mask.any():
                mask[rng.integers(N_ACTIONS)] = True
            a = select_action(net, feats, mask, float(rng.random()), rng)
            assert mask[a]

    def test_empty_mask_rejected(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        with pytest.raises(ValueError):
            select_action(net, np.zeros(24), np.zeros(N_ACTIONS, bool), 0.5,
                          np.random.default_rng(0))

    def test_greedy_tie_breaks_to_lowest_index(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        for w in net.weights:
            w[:] = 0.0
        mask = np.zeros(N_ACTIONS, bool)
        mask[100:110] = True
        a = select_action(net, np.zeros(24), mask, 0.0, np.random.default_rng(0))
        assert a == 100

    def test_epsilon_schedule_endpoints(self):
        cfg = TrainConfig()
        assert epsilon_at(0, 1000, cfg) == pytest.approx(1.0)
        assert epsilon_at(500, 1000, cfg) == pytest.approx(cfg.epsilon_end)
        assert epsilon_at(999, 1000, cfg) == pytest.approx(cfg.epsilon_end)


class TestBellmanTarget:
    def test_terminal_transition(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        rng = np.random.default_rng(0)
        batch = toy_batch(rng, net, done=np.ones(4, bool))
        y = bellman_target(batch, net, 0.99)
        np.testing.assert_allclose(y, batch["rewards"])

    def test_zero_gamma(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        rng = np.random.default_rng(1)
        batch = toy_batch(rng, net)
        y = bellman_target(batch, net, 0.0)
        np.testing.assert_allclose(y, batch["rewards"])

    def test_singleton_next_mask(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        rng = np.random.default_rng(2)
        batch = toy_batch(rng, net, n=1)
        batch["next_masks"] = np.zeros((1, N_ACTIONS), bool)
        batch["next_masks"][0, 777] = True
        y = bellman_target(batch, net, 0.9)
        q = net.forward(batch["next_features"][0])
        assert y[0] == pytest.approx(batch["rewards"][0] + 0.9 * q[777])

    def test_mask_changes_target(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        rng = np.random.default_rng(3)
        batch = toy_batch(rng, net)
        y_masked = bellman_target(batch, net, 0.99)
        batch_free = dict(batch, next_masks=None)
        y_free = bellman_target(batch_free, net, 0.99)
        assert np.all(y_free >= y_masked - 1e-12)


class TestReplayBuffer:
    def test_fifo_overwrite(self):
        buf = ReplayBuffer(capacity=8, store_masks=False)
        for i in range(12):
            buf.add(np.full(24, float(i)), i, float(i), np.zeros(24), False, None)
        assert len(buf) == 8
        stored = set(buf.actions.tolist())
        assert stored == set(range(4, 12))

    def test_uniform_sampling(self):
        buf = ReplayBuffer(capacity=32, store_masks=False)
        for i in range(32):
            buf.add(np.zeros(24), i, 0.0, np.zeros(24), False, None)
        rng = np.random.default_rng(0)
        counts = np.zeros(32)
        for _ in range(400):
            batch = buf.sample(64, rng)
            for a in batch["actions"]:
                counts[a] += 1
        chi = stats.chisquare(counts)
        assert chi.pvalue > 1e-4

    def test_mask_pack_roundtrip(self):
        buf = ReplayBuffer(capacity=4, store_masks=True)
        rng = np.random.default_rng(1)
        bits = rng.random(N_ACTIONS) < 0.2
        buf.add(np.zeros(24), 0, 0.0, np.zeros(24), False, bits)
        batch = buf.sample(1, np.random.default_rng(2))
        np.testing.assert_array_equal(batch["next_masks"][0], bits)


class TestTdUpdate:
    def test_zero_residual_means_zero_loss_and_no_change(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        target = net.clone()
        opt = AdamOptimizer(net)
        rng = np.random.default_rng(0)
        batch = toy_batch(rng, net, done=np.ones(4, bool))
        batch["rewards"] = np.zeros(4)
        before = [w.copy() for w in net.weights]
        loss = td_update(net, target, opt, batch, TOY)
        assert loss == 0.0
        for b0, b1 in zip(before, net.weights):
            np.testing.assert_array_equal(b0, b1)

    def test_loss_decreases_on_frozen_batch(self):
        net = QNetwork((24, 16, 16), seed=1)
        target = net.clone()
        opt = AdamOptimizer(net, learning_rate=1e-2)
        rng = np.random.default_rng(1)
        batch = {
            "features": rng.normal(size=(4, 24)),
            "actions": rng.integers(0, 16, 4),
            "rewards": rng.normal(size=4),
            "next_features": rng.normal(size=(4, 24)),
            "dones": np.ones(4, bool),
            "next_masks": None,
        }
        cfg = TrainConfig(hidden_sizes=(16,), batch_size=4, replay_capacity=64,
                          warmup_transitions=4, episodes=1)
        losses = [td_update(net, target, opt, batch, cfg) for _ in range(50)]
        # strictly decreasing until Adam reaches the noise floor, then tiny
        assert all(b < a for a, b in zip(losses[:20], losses[1:20]))
        assert losses[-1] < losses[0] * 0.01

    def test_non_finite_loss_aborts(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        target = net.clone()
        opt = AdamOptimizer(net)
        rng = np.random.default_rng(0)
        batch = toy_batch(rng, net)
        batch["rewards"] = np.full(4, np.nan)
        with pytest.raises(RuntimeError, match="non-finite"):
            td_update(net, target, opt, batch, TOY)

    def test_target_network_frozen_between_syncs(self):
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        target = net.clone()
        frozen = [w.tobytes() for w in target.weights] + [b.tobytes() for b in target.biases]
        opt = AdamOptimizer(net)
        rng = np.random.default_rng(0)
        for _ in range(10):
            td_update(net, target, opt, toy_batch(rng, net), TOY)
        after = [w.tobytes() for w in target.weights] + [b.tobytes() for b in target.biases]
        assert frozen == after
        # and the online net did move
        assert net.weights[0].tobytes() != target.weights[0].tobytes()


@pytest.fixture(scope="module")
def small_cfg():
    return TrainConfig(
        hidden_sizes=(16, 16), batch_size=16, replay_capacity=2000,
        warmup_transitions=100, episodes=4, train_freq=4,
        target_update_every=50,
    )


class TestTrain:
    def test_deterministic_curves(self, scenario, small_cfg):
        curves = []
        for _ in range(2):
            env = BuildingEnv(scenario)
            res = train(env, None, small_cfg, seed=7)
            curves.append(res.episode_rewards)
        np.testing.assert_array_equal(curves[0], curves[1])

    def test_all_ones_mask_equals_disabled_masking(self, scenario, small_cfg):
        env1, env2 = BuildingEnv(scenario), BuildingEnv(scenario)
        masked = train(env1, FullMaskProvider(), small_cfg, seed=3)
        plain = train(env2, None, small_cfg, seed=3)
        np.testing.assert_array_equal(masked.episode_rewards, plain.episode_rewards)
        for a, b in zip(masked.qnet.weights, plain.qnet.weights):
            assert a.tobytes() == b.tobytes()

    def test_masked_training_respects_mask(self, scenario, small_cfg, knn_provider):
        env = BuildingEnv(scenario, scaler=knn_provider.scaler)
        res = train(env, knn_provider, small_cfg, seed=1)  # raises on violation
        assert res.episode_rewards.shape == (small_cfg.episodes,)
        assert res.grad_steps > 0

    def test_result_summaries(self, scenario, small_cfg):
        env = BuildingEnv(scenario)
        res = train(env, None, small_cfg, seed=2)
        assert res.final_window_mean(0.5) == pytest.approx(
            res.episode_rewards[-2:].mean()
        )
        assert res.auc() == pytest.approx(res.episode_rewards.sum())


class TestEvaluate:
    def test_deterministic(self, scenario):
        env = BuildingEnv(scenario)
        pol = RuleBasedPolicy()
        r1 = evaluate(pol, env, None, 2, [0, 1])
        r2 = evaluate(pol, env, None, 2, [0, 1])
        assert [e.reward for e in r1.episodes] == [e.reward for e in r2.episodes]

    def test_remaining_stats_present_with_provider(self, scenario, knn_provider):
        env = BuildingEnv(scenario, scaler=knn_provider.scaler)
        report = evaluate(MaskedRandomPolicy(), env, knn_provider, 2, [0, 1])
        s = report.summary()
        assert 0.0 < s["remaining_avg_pct"] <= 100.0
        assert s["valid_actions_min"] >= 1
        assert "maximum" in report.format_table()

    def test_seed_count_must_match(self, scenario):
        env = BuildingEnv(scenario)
        with pytest.raises(ValueError):
            evaluate(RuleBasedPolicy(), env, None, 3, [0])


class TestBaselines:
    def test_factory(self):
        assert isinstance(baseline_policy("full_random"), FullRandomPolicy)
        assert isinstance(baseline_policy("masked_random"), MaskedRandomPolicy)
        assert isinstance(baseline_policy("rule_based"), RuleBasedPolicy)
        with pytest.raises(ValueError):
            baseline_policy("ppo")

    def test_full_random_coverage(self):
        rng = np.random.default_rng(0)
        pol = FullRandomPolicy()
        seen = set()
        for _ in range(100000):
            seen.add(pol.act(None, None, None, rng))
        assert len(seen) > 0.99 * N_ACTIONS

    def test_masked_random_never_violates(self):
        rng = np.random.default_rng(1)
        pol = MaskedRandomPolicy()
        for _ in range(200):
            sets = FeasibleSets(
                per_zone=tuple(
                    tuple(sorted(rng.choice(4, size=rng.integers(1, 5), replace=False)))
                    for _ in range(7)
                )
            )
            mask = joint_mask(sets)
            for _ in range(50):
                a = pol.act(None, None, mask.bits, rng)
                assert mask.bits[a]

    def test_rule_based_vacant_zones_off(self, scenario):
        env = BuildingEnv(scenario)
        state = env.reset(seed=2)
        pol = RuleBasedPolicy()
        rng = np.random.default_rng(0)
        done = False
        while not done:
            a = pol.act(state, None, None, rng)
            levels = JointAction.from_index(a).levels
            for z in range(7):
                if state.occupancy[z] == 0:
                    assert levels[z] == 0
            state, _, done, _ = env.step(a)

    def test_greedy_policy_respects_mask(self, knn_provider, scenario):
        env = BuildingEnv(scenario, scaler=knn_provider.scaler)
        state = env.reset(seed=0)
        net = QNetwork((24, 8, N_ACTIONS), seed=0)
        pol = GreedyQPolicy(net)
        mask = joint_mask(knn_provider.feasible_sets(state))
        a = pol.act(state, env.features(state), mask.bits, np.random.default_rng(0))
        assert mask.bits[a]


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(gamma=1.0)
        with pytest.raises(ValueError):
            TrainConfig(mask_penalty=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=128, replay_capacity=64)

    def test_from_dict_roundtrip(self, cfg):
        tc = TrainConfig.from_dict(cfg["dqn"])
        assert tc.gamma == cfg["dqn"]["gamma"]
        assert tc.layer_sizes() == (24, 256, 256, N_ACTIONS)
