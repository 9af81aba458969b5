import itertools

import numpy as np
import numpy.testing as npt
import pytest

from nqmix import agents as ag
from nqmix import autodiff as ad
from nqmix import learner as ln
from nqmix.autodiff import NumericsError, Tensor
from nqmix.envs import MatrixGame, MatrixGameSpec, make_env
from nqmix.learner import (
    Episode,
    LearnerConfig,
    ReplayBuffer,
    all_actions_gradient,
    collate,
    discount_weights,
    expected_state_value,
    make_learner,
    soft_update,
    td_target,
)

from conftest import assert_grads_match_fd, fd_grad


def tiny_cfg(**kw):
    kw.setdefault("batch_episodes", 4)
    kw.setdefault("buffer_capacity", 50)
    kw.setdefault("total_steps", 100)
    return LearnerConfig(**kw)


def zero_payoff_env():
    return MatrixGame(MatrixGameSpec(3, np.zeros((3, 3))))


def snapshot(learner):
    out = {}
    for prefix, params in [
        ("critic", learner.critic.params),
        ("mixer", learner.mixer.params),
        ("tc", learner.critic_target.params),
        ("tm", learner.mixer_target.params),
    ]:
        for k, v in params.items():
            out[f"{prefix}.{k}"] = v.data.copy()
    for a, pol in enumerate(learner.policies):
        for k, v in pol.params.items():
            out[f"pol{a}.{k}"] = v.data.copy()
    return out


class TestSmallPieces:
    def test_expected_state_value_uniform(self):
        assert expected_state_value([0.5, 0.5], [1.0, 3.0]) == 2.0

    def test_expected_state_value_degenerate(self):
        assert expected_state_value([1.0, 0.0], [1.0, 3.0]) == 1.0

    def test_expected_state_value_matches_dot(self, rng):
        probs = rng.dirichlet(np.ones(5), size=(4, 2))
        q = rng.normal(size=(4, 2, 5))
        npt.assert_allclose(
            expected_state_value(probs, q), np.einsum("bak,bak->ba", probs, q), atol=1e-14
        )

    def test_td_target_arithmetic(self):
        assert td_target(1.0, 0.99, 2.0, False) == pytest.approx(2.98, abs=1e-12)
        assert td_target(5.0, 0.99, 123.0, True) == 5.0
        assert td_target(3.0, 0.99, 0.0, False) == 3.0

    def test_discount_weights_sequence(self):
        npt.assert_allclose(discount_weights(0.99, 4), [1.0, 0.99, 0.9801, 0.970299])
        assert discount_weights(0.99, 4)[3] == pytest.approx(0.970299, abs=1e-12)


class TestAllActionsGradient:
    def test_constant_q_gives_zero(self, rng):
        policy = ag.DiscretePolicy(4, rng, hidden=8)
        h = rng.normal(size=(5, 8))
        q = np.full((5, 4), 2.5)
        grads = all_actions_gradient(policy, h, q)
        for g in grads.values():
            assert np.abs(g).max() <= 1e-12

    def test_two_action_closed_form(self, rng):
        # softmax([theta, 0]): dJ/dtheta = p0 * p1 * (q0 - q1)
        for _ in range(20):
            theta_val = rng.normal()
            q = rng.normal(size=2)
            theta = Tensor(np.array([[theta_val]]), requires_grad=True)
            logits = ad.mul(theta, Tensor(np.array([[1.0, 0.0]])))
            probs = ad.softmax(logits)
            ad.backward(ad.tsum(ad.mul(probs, Tensor(q[None, :]))))
            p = probs.data[0]
            expected = p[0] * p[1] * (q[0] - q[1])
            npt.assert_allclose(theta.grad[0, 0], expected, rtol=1e-12)

    def test_matches_fd_of_weighted_score(self, rng):
        policy = ag.DiscretePolicy(3, rng, hidden=6)
        h = rng.normal(size=(4, 6))
        q = rng.normal(size=(4, 3))
        w = rng.normal(size=4)
        grads = all_actions_gradient(policy, h, q, None, w)

        def objective():
            probs = policy.probs(Tensor(h))
            score = (probs.data * q).sum(axis=1)
            return (score * w).mean()

        for name, p in policy.params.items():
            fd = fd_grad(objective, p)
            npt.assert_allclose(grads[name], fd, rtol=1e-4, atol=1e-8)

    def test_respects_masks(self, rng):
        policy = ag.DiscretePolicy(3, rng, hidden=6)
        h = rng.normal(size=(2, 6))
        q = rng.normal(size=(2, 3))
        masks = np.array([[True, True, False], [True, True, True]])
        grads = all_actions_gradient(policy, h, q, masks)
        assert any(np.abs(g).max() > 0 for g in grads.values())


class TestSoftUpdate:
    def test_tau_one_copies(self, rng):
        src = {"w": Tensor(rng.normal(size=(3, 3)))}
        dst = {"w": Tensor(rng.normal(size=(3, 3)))}
        soft_update(dst, src, 1.0)
        npt.assert_array_equal(dst["w"].data, src["w"].data)

    def test_tau_zero_is_noop(self, rng):
        src = {"w": Tensor(rng.normal(size=(3, 3)))}
        dst = {"w": Tensor(rng.normal(size=(3, 3)))}
        before = dst["w"].data.copy()
        soft_update(dst, src, 0.0)
        npt.assert_array_equal(dst["w"].data, before)

    @pytest.mark.parametrize("k", [1, 10, 1000])
    def test_geometric_contraction(self, rng, k):
        tau = 0.001
        src = {"w": Tensor(rng.normal(size=(4, 4)))}
        dst = {"w": Tensor(rng.normal(size=(4, 4)))}
        gap0 = np.abs(dst["w"].data - src["w"].data).max()
        for _ in range(k):
            soft_update(dst, src, tau)
        gap = np.abs(dst["w"].data - src["w"].data).max()
        assert abs(gap - gap0 * (1 - tau) ** k) <= 1e-9

    def test_shape_mismatch_rejected(self, rng):
        src = {"w": Tensor(rng.normal(size=(3, 3)))}
        dst = {"w": Tensor(rng.normal(size=(2, 3)))}
        with pytest.raises(ValueError):
            soft_update(dst, src, 0.5)


class TestEpisodeAndBuffer:
    def _episode(self, t=2, version=0):
        return Episode(
            obs=np.zeros((t + 1, 2, 4)),
            state=np.zeros((t + 1, 1)),
            actions=np.zeros((t, 2), dtype=np.int64),
            rewards=np.zeros(t),
            terminal=np.array([False] * (t - 1) + [True]),
            masks=np.ones((t + 1, 2, 3)),
            param_version=version,
        )

    def test_terminal_must_be_last_and_unique(self):
        with pytest.raises(ValueError, match="terminate"):
            Episode(
                obs=np.zeros((3, 2, 4)),
                state=np.zeros((3, 1)),
                actions=np.zeros((2, 2), dtype=np.int64),
                rewards=np.zeros(2),
                terminal=np.array([True, True]),
                masks=np.ones((3, 2, 3)),
            )

    def test_ring_evicts_oldest(self, rng):
        buf = ReplayBuffer(3, rng)
        for v in range(5):
            buf.add(self._episode(version=v))
        assert len(buf) == 3
        assert [e.param_version for e in buf.episodes()] == [2, 3, 4]

    def test_sample_needs_enough_episodes(self, rng):
        buf = ReplayBuffer(10, rng)
        buf.add(self._episode())
        with pytest.raises(ValueError, match="cannot sample"):
            buf.sample(2)

    def test_sampling_is_uniform_without_replacement(self):
        buf = ReplayBuffer(8, np.random.default_rng(3))
        for v in range(8):
            buf.add(self._episode(version=v))
        counts = np.zeros(8)
        for _ in range(2000):
            sample = buf.sample(4)
            versions = [e.param_version for e in sample]
            assert len(set(versions)) == 4
            for v in versions:
                counts[v] += 1
        freq = counts / counts.sum()
        assert np.abs(freq - 1 / 8).max() < 0.02

    def test_replay_serves_stale_parameter_versions(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(), seed=0)
        for _ in range(20):
            learner.train_iteration(env)
        assert learner.param_version > 1
        sampled = learner.buffer.sample(4)
        assert min(e.param_version for e in sampled) < learner.param_version


class TestRollouts:
    @pytest.mark.parametrize("algo,envname", [
        ("nqmix", "matrix"), ("qmix", "two_step"), ("nqmix_continuous", "product"),
    ])
    def test_same_seed_identical_episode(self, algo, envname):
        eps = []
        for _ in range(2):
            env = make_env(envname)
            learner = make_learner(env, algo, tiny_cfg(), seed=11)
            eps.append(learner.generate_episode(env))
        a, b = eps
        npt.assert_array_equal(a.obs, b.obs)
        npt.assert_array_equal(a.actions, b.actions)
        npt.assert_array_equal(a.rewards, b.rewards)

    def test_episode_length_bounded_by_horizon(self):
        for envname in ("matrix", "two_step", "product"):
            env = make_env(envname)
            algo = "nqmix" if env.descriptor.discrete else "nqmix_continuous"
            learner = make_learner(env, algo, tiny_cfg(), seed=0)
            for _ in range(5):
                ep = learner.generate_episode(env)
                assert ep.length <= env.descriptor.horizon

    def test_greedy_rollout_deterministic_given_params(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(), seed=5)
        ep1 = learner.play_episode(env, explore=False, rng=np.random.default_rng(0))
        ep2 = learner.play_episode(env, explore=False, rng=np.random.default_rng(99))
        npt.assert_array_equal(ep1.actions, ep2.actions)

    def test_continuous_behavior_actions_stay_in_bounds(self):
        env = make_env("product")
        learner = make_learner(env, "nqmix_continuous", tiny_cfg(), seed=0)
        for _ in range(30):
            ep = learner.generate_episode(env)
            assert np.abs(ep.actions).max() <= 1.0


class TestCriticUpdate:
    def test_zero_td_error_changes_nothing(self):
        # zero payoffs and zeroed nets: delta == 0 everywhere, and the
        # constant (zero) agent values also null the actor direction
        env = zero_payoff_env()
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=2), seed=0)
        for params in (
            learner.critic.params, learner.mixer.params,
            learner.critic_target.params, learner.mixer_target.params,
        ):
            for p in params.values():
                p.data[...] = 0.0
        episodes = [learner.generate_episode(env) for _ in range(2)]
        before = snapshot(learner)
        learner.update(episodes)
        after = snapshot(learner)
        for k in before:
            if k.startswith(("critic", "mixer", "tc.", "tm.")):
                npt.assert_array_equal(after[k], before[k], err_msg=k)

    def test_loss_decreases_on_fixed_batch(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=2), seed=3)
        episodes = [learner.generate_episode(env) for _ in range(4)]
        first = learner.update(episodes)
        second = learner.update(episodes)
        assert second < first

    def test_critic_gradient_matches_fd(self, rng):
        # composite: squared TD error through trunk, gather and mixer
        env = make_env("matrix")
        desc = env.descriptor
        critic = ag.SharedCritic(desc, rng, hidden=5)
        from nqmix.mixers import NqmixMlpMixer

        mixer = NqmixMlpMixer(2, desc.state_width, rng, hidden=4)
        x = rng.normal(size=(4, ag.agent_input_width(desc)))
        actions = rng.integers(0, 3, size=4)
        state = rng.normal(size=(2, desc.state_width))
        y = rng.normal(size=2)
        params = dict(critic.params, **{f"mx.{k}": v for k, v in mixer.params.items()})

        def build():
            h, q = critic.encode_step(Tensor(x), critic.init_hidden(4))
            taken = ad.reshape(ad.gather(q, actions), (2, 2))
            delta = Tensor(y) - mixer.mix(taken, Tensor(state))
            return ad.mean(ad.mul(delta, delta))

        assert_grads_match_fd(build, params)

    def test_nan_aborts_update(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=2), seed=0)
        episodes = [learner.generate_episode(env) for _ in range(2)]
        learner.critic.params["fc.w0"].data[0, 0] = np.inf
        with pytest.raises(NumericsError):
            learner.update(episodes)


class TestActorUpdate:
    def test_sign_branches_scale_direction(self, rng):
        from nqmix.mixers import sgn

        policy = ag.DiscretePolicy(3, rng, hidden=6)
        h = rng.normal(size=(3, 6))
        q = rng.normal(size=(3, 3))
        base = all_actions_gradient(policy, h, q, None, np.full(3, sgn(2.0)))
        flipped = all_actions_gradient(policy, h, q, None, np.full(3, sgn(-2.0)))
        for k in base:
            npt.assert_array_equal(base[k], -flipped[k])

    def test_actor_never_touches_critic_or_mixer(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=2), seed=1)
        critic_ids = {id(p) for p in learner.opt_critic.params.values()}
        for opt in learner.opt_actors:
            assert critic_ids.isdisjoint({id(p) for p in opt.params.values()})

    def test_policies_move_but_targets_lag(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=4), seed=2)
        episodes = [learner.generate_episode(env) for _ in range(4)]
        before = snapshot(learner)
        learner.update(episodes)
        after = snapshot(learner)
        assert any((after[k] != before[k]).any() for k in after if k.startswith("pol"))
        # single-iteration target motion is bounded by tau * the fresh gap
        tau = learner.cfg.tau_soft
        for name, params, t_params in [
            ("critic", learner.critic.params, learner.critic_target.params),
            ("mixer", learner.mixer.params, learner.mixer_target.params),
        ]:
            for k in params:
                gap = np.abs(params[k].data - t_params[k].data).max()
                moved = np.abs(t_params[k].data - before[f"tc.{k}" if name == "critic" else f"tm.{k}"]).max()
                assert moved <= tau * (gap / (1 - tau)) + 1e-15

    def test_vdn_mixer_degenerates_to_plain_ascent(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(), seed=0, mixer_override="vdn")
        q = np.random.default_rng(0).normal(size=(6, 2, 2))
        states = np.random.default_rng(1).normal(size=(6, 2, 1))
        signs = learner._signs(q, states)
        npt.assert_array_equal(signs, 1.0)

    def test_mixer_negation_flips_every_actor_delta(self):
        # two identical learners; one gets its mixer output layer negated
        env = make_env("matrix")
        learners = [make_learner(env, "nqmix", tiny_cfg(batch_episodes=4), seed=7)
                    for _ in range(2)]
        for key in ("w1", "b1"):
            learners[1].mixer.params[key].data *= -1.0
            learners[1].mixer_target.params[key].data *= -1.0
        episodes = [learners[0].generate_episode(env) for _ in range(4)]
        deltas = []
        for learner in learners:
            before = {
                f"{a}.{k}": p.data.copy()
                for a, pol in enumerate(learner.policies)
                for k, p in pol.params.items()
            }
            learner.update(list(episodes))
            deltas.append({
                key: learner.policies[int(key[0])].params[key[2:]].data - val
                for key, val in before.items()
            })
        for key in deltas[0]:
            d0, d1 = deltas[0][key], deltas[1][key]
            # increments are applied exactly negated; re-measuring them through
            # parameter subtraction reintroduces one rounding step
            npt.assert_allclose(d0, -d1, atol=1e-12, err_msg=key)
            moved = np.abs(d0) > 1e-12
            npt.assert_array_equal(np.sign(d0[moved]), -np.sign(d1[moved]), err_msg=key)
            assert moved.any()


class TestDiscreteBootstrap:
    def test_zero_target_nets_give_reward_targets(self):
        env = make_env("matrix")
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=2), seed=0)
        for params in (learner.critic_target.params, learner.mixer_target.params):
            for p in params.values():
                p.data[...] = 0.0
        episodes = [learner.generate_episode(env) for _ in range(2)]
        batch = collate(episodes)
        targets = learner.bootstrap_targets(batch)
        npt.assert_allclose(targets, batch.rewards)  # terminal one-step game

    def test_two_step_targets_match_manual_composition(self):
        env = make_env("two_step")
        learner = make_learner(env, "nqmix", tiny_cfg(batch_episodes=2), seed=4)
        episodes = [learner.generate_episode(env) for _ in range(3)]
        batch = collate(episodes)
        targets = learner.bootstrap_targets(batch)
        # manual: unroll target trunk, expected value under target policy, mix
        n_ep, t_len = batch.valid.shape
        hs = learner._unroll_target(batch)
        for t in range(t_len):
            q = learner.critic_target.q_values(hs[t + 1]).data.reshape(n_ep, 2, 3)
            v = np.zeros((n_ep, 2))
            for a, pol in enumerate(learner.policies_target):
                h_a = Tensor(hs[t + 1].data.reshape(n_ep, 2, -1)[:, a])
                probs = pol.probs(h_a).data
                v[:, a] = (probs * q[:, a]).sum(axis=1)
            v_tot = learner.mixer_target.mix(Tensor(v), Tensor(batch.state[:, t + 1])).data
            expect = np.where(
                batch.terminal[:, t], batch.rewards[:, t],
                batch.rewards[:, t] + learner.cfg.gamma * v_tot,
            )
            npt.assert_allclose(targets[:, t], expect, atol=1e-12)


class TestQLearningBaseline:
    def test_greedy_bootstrap_equals_joint_enumeration(self):
        # monotone mixing makes the per-agent greedy pick the joint maximum
        env = make_env("matrix")
        learner = make_learner(env, "qmix", tiny_cfg(batch_episodes=2), seed=6)
        episodes = [learner.generate_episode(env) for _ in range(3)]
        batch = collate(episodes)
        n_ep, t_len = batch.valid.shape
        hs = learner._unroll_target(batch)
        for t in range(t_len):
            q = learner.critic_target.q_values(hs[t + 1]).data.reshape(n_ep, 2, 3)
            greedy = q.max(axis=2)
            joint_best = np.full(n_ep, -np.inf)
            for u1, u2 in itertools.product(range(3), range(3)):
                q_pair = np.stack([q[:, 0, u1], q[:, 1, u2]], axis=1)
                mixed = learner.mixer_target.mix(
                    Tensor(q_pair), Tensor(batch.state[:, t + 1])
                ).data
                joint_best = np.maximum(joint_best, mixed)
            via_greedy = learner.mixer_target.mix(
                Tensor(greedy), Tensor(batch.state[:, t + 1])
            ).data
            npt.assert_allclose(via_greedy, joint_best, atol=1e-10)

    def test_terminal_targets_are_rewards(self):
        env = make_env("matrix")
        learner = make_learner(env, "qmix", tiny_cfg(batch_episodes=2), seed=0)
        episodes = [learner.generate_episode(env) for _ in range(2)]
        batch = collate(episodes)
        targets = learner.bootstrap_targets(batch)
        npt.assert_allclose(targets, batch.rewards)

    def test_epsilon_anneals_to_floor(self):
        env = make_env("matrix")
        learner = make_learner(env, "qmix", tiny_cfg(total_steps=1000), seed=0)
        assert learner.epsilon() == 1.0
        learner.env_steps = 150  # halfway through the 30% anneal window
        assert learner.epsilon() == pytest.approx(0.525)
        learner.env_steps = 600
        assert learner.epsilon() == pytest.approx(0.05)


class TestContinuousLearner:
    def test_zero_target_nets_give_reward_targets(self):
        env = make_env("product")
        learner = make_learner(env, "nqmix_continuous", tiny_cfg(batch_episodes=2), seed=0)
        for params in (learner.critic_target.params, learner.mixer_target.params):
            for p in params.values():
                p.data[...] = 0.0
        episodes = [learner.generate_episode(env) for _ in range(2)]
        batch = collate(episodes)
        npt.assert_allclose(learner.bootstrap_targets(batch), batch.rewards)

    def test_targets_match_manual_composition(self):
        env = make_env("product")
        learner = make_learner(env, "nqmix_continuous", tiny_cfg(batch_episodes=2), seed=9)
        episodes = [learner.generate_episode(env) for _ in range(3)]
        batch = collate(episodes)
        targets = learner.bootstrap_targets(batch)
        hs = learner._unroll_target(batch)
        n_ep = len(episodes)
        h1 = hs[1]
        u = np.zeros((n_ep, 2, 1))
        for a, pol in enumerate(learner.policies_target):
            u[:, a] = pol.action(Tensor(h1.data.reshape(n_ep, 2, -1)[:, a])).data
        q = learner.critic_target.q_value(h1, Tensor(u.reshape(-1, 1))).data.reshape(n_ep, 2)
        v_tot = learner.mixer_target.mix(Tensor(q), Tensor(batch.state[:, 1])).data
        expect = np.where(batch.terminal[:, 0], batch.rewards[:, 0],
                          batch.rewards[:, 0] + learner.cfg.gamma * v_tot)
        npt.assert_allclose(targets[:, 0], expect, atol=1e-12)

    def test_value_chain_gradient_matches_fd(self, rng):
        # d/dtheta of Q(h, mu_theta(h)) via the tanh squash
        from nqmix.envs import ProductGame

        desc = ProductGame().descriptor
        critic = ag.SharedCritic(desc, rng, hidden=5)
        policy = ag.ContinuousPolicy(1, -1.0, 1.0, rng, hidden=5)
        h = Tensor(rng.normal(size=(3, 5)))

        def build():
            return ad.mean(critic.q_value(h, policy.action(h)))

        assert_grads_match_fd(build, policy.params)

    def test_zero_value_gradient_freezes_policy(self, rng):
        # value head ignoring its action input => no actor motion
        env = make_env("product")
        learner = make_learner(env, "nqmix_continuous", tiny_cfg(batch_episodes=2), seed=0)
        learner.critic.params["head.w0"].data[learner.critic.hidden :, :] = 0.0
        before = [
            {k: p.data.copy() for k, p in pol.params.items()} for pol in learner.policies
        ]
        h_data = rng.normal(size=(3, 1, 2, learner.critic.hidden))
        signs = np.ones((3, 1, 2))
        learner.actor_update(h_data, signs, np.ones((3, 1)))
        for pol, prev in zip(learner.policies, before):
            for k in prev:
                npt.assert_array_equal(pol.params[k].data, prev[k])


class TestTrainLoopAndCheckpoint:
    def test_zero_total_steps_no_metrics(self):
        env = make_env("matrix")
        rows = list(ln.train(env, "nqmix", tiny_cfg(total_steps=0), 0,
                             evaluate_fn=lambda l: (0.0, 0.0, 0.0)))
        assert rows == []

    def test_identical_seeds_identical_metrics(self):
        def run():
            env = make_env("matrix")
            cfg = tiny_cfg(total_steps=60, eval_interval_steps=20)
            return [
                (r["env_steps"], r["mean_eval_return"], r["mean_eval_success"])
                for r in ln.train(env, "nqmix", cfg, 3,
                                  evaluate_fn=lambda l: __import__("nqmix").harness.evaluate(
                                      l, make_env("matrix"), 4))
            ]

        assert run() == run()

    def test_checkpoint_resume_is_bit_exact(self, tmp_path):
        env = make_env("matrix")
        cfg = tiny_cfg(total_steps=10_000, batch_episodes=4)
        ref = make_learner(env, "nqmix", cfg, seed=21)
        for _ in range(30):
            ref.train_iteration(env)
        path = tmp_path / "ckpt.npz"
        ln.save_checkpoint(ref, path)
        for _ in range(20):
            ref.train_iteration(env)

        resumed = ln.load_checkpoint(path, make_env("matrix"))
        for _ in range(20):
            resumed.train_iteration(env)  # every rollout starts from reset()
        a, b = snapshot(ref), snapshot(resumed)
        for k in a:
            npt.assert_array_equal(a[k], b[k], err_msg=k)
        assert ref.env_steps == resumed.env_steps
        assert ref.rollout_rng.bit_generator.state == resumed.rollout_rng.bit_generator.state

    def test_checkpoint_restores_counters_and_buffer(self, tmp_path):
        env = make_env("two_step")
        learner = make_learner(env, "qmix", tiny_cfg(batch_episodes=4), seed=2)
        for _ in range(12):
            learner.train_iteration(env)
        path = tmp_path / "ckpt.npz"
        ln.save_checkpoint(learner, path)
        loaded = ln.load_checkpoint(path, make_env("two_step"))
        assert loaded.env_steps == learner.env_steps
        assert loaded.episode_count == learner.episode_count
        assert len(loaded.buffer) == len(learner.buffer)
        for ea, eb in zip(learner.buffer.episodes(), loaded.buffer.episodes()):
            npt.assert_array_equal(ea.actions, eb.actions)
            npt.assert_array_equal(ea.rewards, eb.rewards)

    def test_unknown_algo_rejected(self):
        with pytest.raises(ValueError, match="unknown algo"):
            make_learner(make_env("matrix"), "coma", tiny_cfg(), 0)

    def test_algo_env_compatibility(self):
        with pytest.raises(ValueError, match="discrete"):
            make_learner(make_env("product"), "nqmix", tiny_cfg(), 0)
        with pytest.raises(ValueError, match="continuous"):
            make_learner(make_env("matrix"), "nqmix_continuous", tiny_cfg(), 0)
