"""Observation layout, action mapping, distribution math, and PPO updates."""

import math

import numpy as np
import pytest

from risedge.agent import (AgentHyperparams, Mlp, ObservationBuilder, PpoAgent, PrevSlotInfo,
                           compute_gae, gaussian_entropy, map_action, observation_dim,
                           squashed_log_prob)
from risedge.channel import ChannelConfig, ChannelSet
from risedge.compression import default_model
from risedge.queueing import QueueState


@pytest.fixture(scope="module")
def model():
    return default_model()


def tiny_hp(**overrides):
    defaults = dict(hidden_layers=2, hidden_units=8, epochs=2, minibatch_size=16,
                    horizon=32, learning_rate=1e-3)
    defaults.update(overrides)
    return AgentHyperparams(**defaults)


def zero_channels(cfg: ChannelConfig) -> ChannelSet:
    k = cfg.num_devices
    return ChannelSet(
        h_direct=[np.zeros((cfg.ap_antennas, cfg.ue_antennas), dtype=complex) for _ in range(k)],
        h_ue_ris=[np.zeros((cfg.ris_elements, cfg.ue_antennas), dtype=complex) for _ in range(k)],
        h_ris_ap=np.zeros((cfg.ap_antennas, cfg.ris_elements), dtype=complex),
    )


class TestObservation:
    def test_dimension_formula(self):
        assert observation_dim(1, 1, 4, 8) == 5 + 8 + 16 + 64 == 93
        assert observation_dim(3, 2, 4, 16) == 15 + 48 + 192 + 128

    def test_zero_state_only_prior_accuracy(self):
        cfg = ChannelConfig()
        builder = ObservationBuilder(cfg, queue_scale=100.0, z_scale=1e5, f_max=3.6e9)
        prev = PrevSlotInfo(accuracy=np.array([0.92]), cpu_hz=np.zeros(1))
        obs = builder(QueueState.zeros(1), prev, zero_channels(cfg))
        assert obs.shape == (93,)
        assert obs[3] == pytest.approx(0.92)
        mask = np.ones(93, dtype=bool)
        mask[3] = False
        assert np.all(obs[mask] == 0.0)

    def test_device_permutation_permutes_blocks(self):
        cfg = ChannelConfig(num_devices=2, direct_link_present=(True, True))
        builder = ObservationBuilder(cfg, 100.0, 1e5, 3.6e9)
        rng = np.random.default_rng(0)

        def rand_cs():
            return ChannelSet(
                h_direct=[rng.standard_normal((4, 1)) + 1j * rng.standard_normal((4, 1))
                          for _ in range(2)],
                h_ue_ris=[rng.standard_normal((8, 1)) + 1j * rng.standard_normal((8, 1))
                          for _ in range(2)],
                h_ris_ap=rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8)),
            )

        cs = rand_cs()
        qs = QueueState.zeros(2)
        qs.q_local[:] = [5, 9]
        qs.q_remote[:] = [1, 2]
        qs.z[:] = [10.0, 30.0]
        prev = PrevSlotInfo(accuracy=np.array([0.3, 0.7]), cpu_hz=np.array([1e9, 2e9]))
        obs = builder(qs, prev, cs)

        qs_p = QueueState.zeros(2)
        qs_p.q_local[:] = [9, 5]
        qs_p.q_remote[:] = [2, 1]
        qs_p.z[:] = [30.0, 10.0]
        prev_p = PrevSlotInfo(accuracy=np.array([0.7, 0.3]), cpu_hz=np.array([2e9, 1e9]))
        cs_p = ChannelSet(h_direct=cs.h_direct[::-1], h_ue_ris=cs.h_ue_ris[::-1],
                          h_ris_ap=cs.h_ris_ap)
        obs_p = builder(qs_p, prev_p, cs_p)

        # scalar blocks swap pairwise
        for base in range(0, 10, 2):
            assert obs[base] == obs_p[base + 1]
            assert obs[base + 1] == obs_p[base]
        # the shared link block is unchanged
        shared = slice(10 + 16, 10 + 16 + 64)
        assert np.array_equal(obs[shared], obs_p[shared])


class TestMapAction:
    def test_all_zeros(self, model):
        levels, ris = map_action(np.zeros(9), model, 8)
        assert np.all(levels == 1)
        assert np.all(ris.phases == 0.0)

    def test_all_ones_clamps_to_top(self, model):
        levels, ris = map_action(np.ones(9), model, 8)
        assert np.all(levels == 100)
        assert np.all(ris.phases == pytest.approx(2 * math.pi))

    def test_midpoint_level(self, model):
        levels, _ = map_action(np.concatenate([[0.5], np.zeros(8)]), model, 8)
        assert levels[0] == 51

    def test_phases_scale(self, model):
        u = np.concatenate([[0.0], np.full(8, 0.25)])
        _, ris = map_action(u, model, 8)
        assert np.allclose(ris.phases, math.pi / 2)

    def test_custom_level_set(self):
        m = default_model(np.array([2, 4, 8, 16]))
        levels, _ = map_action(np.array([0.74, 0.76, 0.0]), m, 1)
        assert levels[0] == 8 and levels[1] == 16


class TestDistribution:
    def test_log_prob_reevaluation_consistency(self):
        rng = np.random.default_rng(1)
        hp = tiny_hp()
        agent = PpoAgent(hp, obs_dim=12, act_dim=4, rng=rng)
        obs = rng.standard_normal(12)
        u, z, logp, value = agent.sample(obs)
        # recompute the density from the reported action
        z_back = np.log(u) - np.log1p(-u)
        mean = agent.policy_mean(obs)[0]
        lp2 = float(squashed_log_prob(z_back, mean, agent.log_std))
        assert lp2 == pytest.approx(logp, abs=1e-6)

    def test_zero_std_limit_returns_squashed_mean(self):
        rng = np.random.default_rng(2)
        agent = PpoAgent(tiny_hp(log_std_init=-18.0), obs_dim=6, act_dim=3, rng=rng)
        obs = rng.standard_normal(6)
        u, _, _, _ = agent.sample(obs)
        expected = 1.0 / (1.0 + np.exp(-agent.policy_mean(obs)[0]))
        assert np.allclose(u, expected, atol=1e-6)
        assert np.allclose(agent.act_deterministic(obs), expected)

    def test_same_seed_same_sample(self):
        hp = tiny_hp()
        a1 = PpoAgent(hp, 10, 3, np.random.default_rng(5))
        a2 = PpoAgent(hp, 10, 3, np.random.default_rng(5))
        obs = np.linspace(-1, 1, 10)
        s1 = a1.sample(obs, np.random.default_rng(7))
        s2 = a2.sample(obs, np.random.default_rng(7))
        for x, y in zip(s1, s2):
            assert np.array_equal(x, y)

    def test_entropy_formula(self):
        log_std = np.array([0.0, -1.0])
        expected = 0.0 - 1.0 + 0.5 * 2 * (1 + math.log(2 * math.pi))
        assert gaussian_entropy(log_std) == pytest.approx(expected)


class TestGae:
    def test_single_step(self):
        adv, ret = compute_gae(np.array([1.0]), np.array([0.0]), 0.0, 0.9, 0.95)
        assert adv[0] == pytest.approx(1.0)
        assert ret[0] == pytest.approx(1.0)

    def test_all_zero(self):
        adv, ret = compute_gae(np.zeros(5), np.zeros(5), 0.0, 0.99, 0.95)
        assert np.all(adv == 0.0) and np.all(ret == 0.0)

    def test_three_step_hand_recursion(self):
        r = np.array([1.0, 0.0, 1.0])
        v = np.array([0.5, 0.5, 0.5])
        gamma, lam = 0.9, 0.95
        # independent forward evaluation of the definition
        deltas = [r[0] + gamma * v[1] - v[0],
                  r[1] + gamma * v[2] - v[1],
                  r[2] + gamma * 0.0 - v[2]]
        expected = [
            deltas[0] + (gamma * lam) * deltas[1] + (gamma * lam) ** 2 * deltas[2],
            deltas[1] + (gamma * lam) * deltas[2],
            deltas[2],
        ]
        adv, ret = compute_gae(r, v, 0.0, gamma, lam)
        assert np.allclose(adv, expected, atol=1e-10)
        assert np.allclose(ret, np.array(expected) + v, atol=1e-10)

    def test_bootstrap_used(self):
        adv, _ = compute_gae(np.array([0.0]), np.array([0.0]), 2.0, 0.5, 1.0)
        assert adv[0] == pytest.approx(1.0)

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            compute_gae(np.zeros(3), np.zeros(2), 0.0, 0.9, 0.9)


def _random_batch(agent, n, rng, adv_values=None):
    obs = rng.standard_normal((n, agent.obs_dim))
    mean = agent.policy.forward(obs)
    z = mean + np.exp(agent.log_std) * rng.standard_normal((n, agent.act_dim))
    logp = squashed_log_prob(z, mean, agent.log_std)
    # offset old log-probs so ratios are generic but away from clip kinks
    logp_old = logp + rng.uniform(-0.05, 0.05, size=n)
    adv = adv_values if adv_values is not None else rng.standard_normal(n)
    ret = rng.standard_normal(n)
    return obs, z, logp_old, adv, ret


class TestPpoUpdate:
    def test_zero_advantages_freeze_policy_mean_weights(self):
        rng = np.random.default_rng(3)
        agent = PpoAgent(tiny_hp(epochs=1), 8, 3, rng)
        obs, z, logp_old, adv, ret = _random_batch(agent, 32, rng,
                                                   adv_values=np.zeros(32))
        pol_before = [w.copy() for w in agent.policy.w]
        log_std_before = agent.log_std.copy()
        val_before = [w.copy() for w in agent.value_net.w]
        agent.update(obs, z, logp_old, adv, ret)
        for w_new, w_old in zip(agent.policy.w, pol_before):
            assert np.array_equal(w_new, w_old)
        # entropy bonus still moves log_std; value loss still moves the critic
        assert not np.array_equal(agent.log_std, log_std_before)
        assert any(not np.array_equal(w, v) for w, v in zip(agent.value_net.w, val_before))

    def test_positive_advantage_raises_log_prob(self):
        rng = np.random.default_rng(4)
        agent = PpoAgent(tiny_hp(epochs=5, entropy_coef=0.0, learning_rate=5e-3), 6, 2, rng)
        obs = rng.standard_normal((1, 6))
        mean = agent.policy.forward(obs)
        z = mean + np.exp(agent.log_std) * rng.standard_normal((1, 2))
        logp_old = squashed_log_prob(z, mean, agent.log_std)
        before = float(logp_old[0])
        agent.update(obs, z, logp_old, np.array([2.0]), np.array([0.0]))
        after = float(squashed_log_prob(z, agent.policy.forward(obs), agent.log_std)[0])
        assert after >= before

    def test_clipped_region_zero_surrogate_gradient(self):
        rng = np.random.default_rng(5)
        agent = PpoAgent(tiny_hp(entropy_coef=0.0, value_coef=0.0), 6, 2, rng)
        obs = rng.standard_normal((4, 6))
        mean = agent.policy.forward(obs)
        z = mean  # ratio depends only on parameter drift; force it below
        logp_new = squashed_log_prob(z, mean, agent.log_std)
        # choose old log-probs so rho = exp(lp - lp_old) = 2.0, far outside clip
        logp_old = logp_new - math.log(2.0)
        adv = np.full(4, 1.5)  # positive advantage, aligned with rho > 1 + eps
        agent._fill_gradients(obs, z, logp_old, adv, np.zeros(4))
        assert np.all(agent.grad == 0.0)

    def test_learning_rate_zero_is_identity(self):
        rng = np.random.default_rng(6)
        agent = PpoAgent(tiny_hp(learning_rate=0.0), 8, 3, rng)
        flat_before = agent.flat.copy()
        obs, z, logp_old, adv, ret = _random_batch(agent, 32, rng)
        agent.update(obs, z, logp_old, adv, ret)
        assert np.array_equal(agent.flat, flat_before)

    def test_gradient_clipping_counted(self):
        rng = np.random.default_rng(7)
        agent = PpoAgent(tiny_hp(grad_clip=1e-9), 8, 3, rng)
        obs, z, logp_old, adv, ret = _random_batch(agent, 32, rng)
        agent.update(obs, z, logp_old, adv, ret)
        assert agent.grad_clip_events > 0


class TestGradientChecks:
    def check_agent(self, agent, rng, probes, tol=1e-4):
        obs, z, logp_old, adv, ret = _random_batch(agent, 24, rng)
        # keep ratios safely away from the clip kinks so central differences
        # see a locally smooth objective
        mean = agent.policy.forward(obs)
        logp = squashed_log_prob(z, mean, agent.log_std)
        rho = np.exp(logp - logp_old)
        eps = agent.hp.clip_ratio
        ok = (np.abs(rho - (1 - eps)) > 1e-3) & (np.abs(rho - (1 + eps)) > 1e-3)
        obs, z, logp_old, adv, ret = obs[ok], z[ok], logp_old[ok], adv[ok], ret[ok]

        agent._fill_gradients(obs, z, logp_old, adv, ret)
        analytic = agent.grad.copy()
        idx = rng.choice(agent.flat.size, size=min(probes, agent.flat.size), replace=False)
        h = 1e-5
        worst = 0.0
        for i in idx:
            keep = agent.flat[i]
            agent.flat[i] = keep + h
            up = agent.total_loss(obs, z, logp_old, adv, ret)
            agent.flat[i] = keep - h
            down = agent.total_loss(obs, z, logp_old, adv, ret)
            agent.flat[i] = keep
            fd = (up - down) / (2 * h)
            scale = max(abs(fd), abs(analytic[i]), 1e-8)
            worst = max(worst, abs(fd - analytic[i]) / scale)
        assert worst < tol, f"worst relative gradient error {worst:.2e}"

    def test_small_network_gradients_match_finite_differences(self):
        rng = np.random.default_rng(8)
        agent = PpoAgent(tiny_hp(), obs_dim=7, act_dim=3, rng=rng)
        self.check_agent(agent, rng, probes=60)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        agent = PpoAgent(tiny_hp(), 10, 4, rng, config_hash="abc123")
        obs, z, logp_old, adv, ret = _random_batch(agent, 32, rng)
        agent.update(obs, z, logp_old, adv, ret)
        path = tmp_path / "ckpt.bin"
        agent.save(str(path))
        loaded = PpoAgent.load(str(path), tiny_hp(), np.random.default_rng(0))
        assert np.array_equal(loaded.flat, agent.flat)
        assert np.array_equal(loaded.adam_m, agent.adam_m)
        assert np.array_equal(loaded.adam_v, agent.adam_v)
        assert loaded.adam_t == agent.adam_t
        assert loaded.config_hash == "abc123"
        obs1 = np.linspace(-1, 1, 10)
        assert np.array_equal(agent.act_deterministic(obs1), loaded.act_deterministic(obs1))

    def test_rejects_wrong_architecture(self, tmp_path):
        rng = np.random.default_rng(10)
        agent = PpoAgent(tiny_hp(), 10, 4, rng)
        path = tmp_path / "ckpt.bin"
        agent.save(str(path))
        with pytest.raises(ValueError):
            PpoAgent.load(str(path), tiny_hp(hidden_units=16), np.random.default_rng(0))

    def test_rejects_garbage_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError, match="not a checkpoint"):
            PpoAgent.load(str(path), tiny_hp(), np.random.default_rng(0))


class TestMlp:
    def test_forward_shapes_and_tanh_bounds(self):
        rng = np.random.default_rng(11)
        mlp = Mlp([5, 16, 16, 2])
        flat = np.zeros(mlp.n_params)
        grad = np.zeros(mlp.n_params)
        mlp.bind(flat, grad, 0)
        mlp.init_params(rng, out_gain=0.01)
        out = mlp.forward(rng.standard_normal((7, 5)))
        assert out.shape == (7, 2)
        assert np.all(np.isfinite(out))

    def test_hyperparam_validation(self):
        with pytest.raises(ValueError):
            AgentHyperparams(clip_ratio=1.5)
        with pytest.raises(ValueError):
            AgentHyperparams(discount=0.0)
        with pytest.raises(ValueError):
            AgentHyperparams(queue_scale=0.0)
