import numpy as np
import pytest

from helpers import (
    finite_difference_check,
    random_episodes,
    random_features,
    tiny_spec,
)
from uedlab.gridworld import FORWARD, MazeEnv, empty_grid
from uedlab.learner import (
    OptimConfig,
    PolicyHandle,
    RolloutBatch,
    UpdateError,
    act,
    desk_scale_spec,
    gae_advantages,
    loss_and_grads,
    run_episode,
    update,
)
from uedlab.nets import log_softmax


def gae_double_sum(rewards, values, discount, lam):
    """Direct evaluation of the exponentially weighted delta sum."""
    n = len(rewards)
    deltas = [
        rewards[t] + discount * (values[t + 1] if t + 1 < n else 0.0) - values[t]
        for t in range(n)
    ]
    return np.array([
        sum((discount * lam) ** k * deltas[t + k] for k in range(n - t))
        for t in range(n)
    ])


class TestGAE:
    def test_lambda_zero_is_td_error(self):
        rewards = [1.0, 0.5, -0.2]
        values = [0.3, 0.1, 0.7]
        adv = gae_advantages(rewards, values, 0.0, 0.9, 0.0)
        expected = [1.0 + 0.9 * 0.1 - 0.3, 0.5 + 0.9 * 0.7 - 0.1, -0.2 - 0.7]
        assert np.allclose(adv, expected)

    def test_lambda_one_zero_values_is_return_to_go(self):
        rewards = [1.0, 2.0, 4.0]
        adv = gae_advantages(rewards, [0.0, 0.0, 0.0], 0.0, 0.5, 1.0)
        assert np.allclose(adv, [1.0 + 1.0 + 1.0, 2.0 + 2.0, 4.0])

    def test_matches_double_sum(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            rewards = rng.normal(size=6)
            values = rng.normal(size=6)
            adv = gae_advantages(rewards, values, 0.0, 0.95, 0.8)
            assert np.allclose(adv, gae_double_sum(rewards, values, 0.95, 0.8))


class TestAct:
    def setup_method(self):
        self.rng = np.random.default_rng(0)
        self.policy = PolicyHandle.create(tiny_spec(), self.rng)
        grid = empty_grid(width=7, height=7, horizon=10)
        self.obs = MazeEnv(grid).reset()

    def test_log_prob_matches_logits(self):
        action, log_prob, value, state = act(self.policy, self.obs, self.rng)
        net = self.policy.policy_net()
        from uedlab.learner import observation_features
        logits, _, _ = net.step(observation_features(self.obs),
                                net.initial_state())
        assert log_prob == pytest.approx(log_softmax(logits)[action], abs=1e-12)

    def test_greedy_picks_argmax(self):
        a1, _, _, _ = act(self.policy, self.obs, self.rng, greedy=True)
        a2, _, _, _ = act(self.policy, self.obs, self.rng, greedy=True)
        assert a1 == a2

    def test_uniform_sampling_with_zero_params(self):
        spec = tiny_spec()
        zero = PolicyHandle.create(spec, self.rng)
        zero.set_params(np.zeros_like(zero.params))
        counts = np.zeros(spec.n_actions)
        n = 10_000
        for _ in range(n):
            action, log_prob, _, _ = act(zero, self.obs, self.rng)
            counts[action] += 1
            assert log_prob == pytest.approx(np.log(1 / 3))
        # 5-sigma binomial band around n/3
        sigma = np.sqrt(n * (1 / 3) * (2 / 3))
        assert np.all(np.abs(counts - n / 3) < 5 * sigma)

    def test_run_episode_shapes(self):
        grid = empty_grid(width=7, height=7, horizon=8)
        traj = run_episode(self.policy, MazeEnv(grid), self.rng)
        assert traj.terminated
        assert traj.length <= 8
        assert len(traj.observations) == traj.length + 1
        assert len(traj.log_probs) == len(traj.values) == traj.length


class TestGradients:
    def test_finite_difference_small_spec(self):
        rng = np.random.default_rng(1)
        policy = PolicyHandle.create(tiny_spec(), rng)
        episodes = random_episodes(policy, rng, n_episodes=2, length=4)
        config = OptimConfig(entropy_coef=0.01)
        err = finite_difference_check(policy, episodes, config, 60, rng)
        assert err < 1e-4

    def test_finite_difference_designer_inputs(self):
        rng = np.random.default_rng(2)
        spec = tiny_spec(direction_embed=0, timestep_embed=3, latent_dim=4,
                         n_actions=5)
        policy = PolicyHandle.create(spec, rng)
        episodes = random_episodes(policy, rng, n_episodes=1, length=4)
        config = OptimConfig(entropy_coef=0.01)
        err = finite_difference_check(policy, episodes, config, 60, rng)
        assert err < 1e-4

    def test_zero_advantages_leave_policy_gradient_zero(self):
        rng = np.random.default_rng(3)
        policy = PolicyHandle.create(tiny_spec(), rng)
        episodes = random_episodes(policy, rng, n_episodes=1, length=4)
        for ep in episodes:
            ep["advantages"] = np.zeros_like(ep["advantages"])
        config = OptimConfig(entropy_coef=0.0)
        _, pi_grads, vf_grads = loss_and_grads(policy, episodes, config)
        assert np.allclose(pi_grads.flat, 0.0)
        assert not np.allclose(vf_grads.flat, 0.0)


class TestUpdate:
    def _batch(self, policy, rng, n=4):
        grid = empty_grid(width=7, height=7, horizon=10)
        trajs = [run_episode(policy, MazeEnv(grid), rng) for _ in range(n)]
        return RolloutBatch(trajs)

    def test_value_loss_decreases_monotonically(self):
        rng = np.random.default_rng(4)
        policy = PolicyHandle.create(tiny_spec(), rng)
        episodes = self._batch(policy, rng).prepared(OptimConfig())
        config = OptimConfig(learning_rate=0.05)
        losses = []
        from uedlab.learner import _apply_gradients
        for _ in range(50):
            stats, pi_grads, vf_grads = loss_and_grads(policy, episodes, config)
            losses.append(stats["value_loss"])
            pi_grads.flat[:] = 0.0  # train the value head alone
            _apply_gradients(policy, pi_grads, vf_grads, config)
        assert all(b < a + 1e-12 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]

    def test_update_determinism(self):
        rng = np.random.default_rng(5)
        policy_a = PolicyHandle.create(tiny_spec(), rng)
        policy_b = policy_a.clone()
        batch = self._batch(policy_a, np.random.default_rng(6))
        config = OptimConfig(epochs_per_batch=2, minibatch_size=2)
        update(policy_a, batch, config, np.random.default_rng(7))
        update(policy_b, batch, config, np.random.default_rng(7))
        assert np.array_equal(policy_a.params, policy_b.params)

    def test_adam_state_persisted(self):
        rng = np.random.default_rng(8)
        policy = PolicyHandle.create(tiny_spec(), rng)
        batch = self._batch(policy, rng)
        config = OptimConfig(optimizer="adam")
        update(policy, batch, config, rng)
        assert policy.opt_state["t"] >= 1

    def test_non_finite_reward_aborts(self):
        rng = np.random.default_rng(9)
        policy = PolicyHandle.create(tiny_spec(), rng)
        batch = self._batch(policy, rng)
        batch.trajectories[0].rewards[0] = float("nan")
        with pytest.raises(UpdateError):
            update(policy, batch, OptimConfig(), rng)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            RolloutBatch([]).prepared(OptimConfig())

    def test_learning_on_trivial_corridor(self):
        # two forward moves reach the goal; adam should find it quickly
        rng = np.random.default_rng(10)
        spec = desk_scale_spec((5, 5, 3), n_actions=3, direction_embed=5)
        policy = PolicyHandle.create(spec, rng)
        grid = empty_grid(width=5, height=3, agent_start=(1, 1),
                          agent_start_dir=0, goal=(1, 3), horizon=12)
        config = OptimConfig(optimizer="adam", learning_rate=3e-3,
                             entropy_coef=0.01, normalize_advantages=True,
                             discount=0.99)
        for step in range(60):
            trajs = [run_episode(policy, MazeEnv(grid), rng) for _ in range(8)]
            update(policy, RolloutBatch(trajs), config, rng)
        wins = sum(
            run_episode(policy, MazeEnv(grid), rng).undiscounted_return() > 0
            for _ in range(20)
        )
        assert wins >= 18
