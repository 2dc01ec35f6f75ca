"""Tests for the adversarial imitation trainer.

The policy-gradient estimator is validated against an exact bandit
gradient obtained by quadrature plus finite differences — an oracle that
never touches the estimator's own code path — and the discriminator's
backward pass against central finite differences.  Degenerate rigs
(constant discriminator, identical batches) have exact expected outcomes
and are asserted exactly.
"""

import numpy as np
import pytest

from mcteil.mdn import SparseMixturePolicy
from mcteil.trainer import (
    BC_LOG_COLUMNS,
    Discriminator,
    LOG_COLUMNS,
    TrainerConfig,
    behavior_cloning,
    discriminator_update,
    learner_reward,
    policy_update_mcteil,
    policy_update_soft_gail,
    train,
)
from mcteil.trajectories import Episode, TrajectoryBatch


def one_step_batch(states, actions):
    return TrajectoryBatch(
        [Episode(states[i : i + 1], actions[i : i + 1]) for i in range(len(states))]
    )


def half_discriminator():
    """All-zero parameters: logit 0 everywhere, so D is exactly 1/2."""
    disc = Discriminator(1, 1, hidden_width=3, rng=np.random.default_rng(5))
    disc.set_params(np.zeros(disc.n_params))
    return disc


def rigged_discriminator():
    """Hand-set single-hidden-unit scorer: D rises with the action, so the
    surrogate reward favors negative actions."""
    disc = Discriminator(1, 1, hidden_width=1, rng=np.random.default_rng(0))
    disc.set_params(np.array([0.0, 2.0, 0.0, 1.5, 0.0]))
    return disc


class BanditEnv:
    """One-step environment at a fixed state; reward peaks at a = 0.7."""

    state_dim = 1
    action_dim = 1
    max_steps = 1

    def reset_state(self, rng):
        return np.zeros(1)

    def step_batch(self, states, actions):
        rewards = -((actions[:, 0] - 0.7) ** 2)
        return states, rewards, np.ones(len(states), dtype=bool)


class TwoGoalBandit(BanditEnv):
    """Moves to wherever the action points and reports sign-based goals, so
    the training log tracks reachability."""

    def step_batch(self, states, actions):
        rewards = -((actions[:, 0] - 0.7) ** 2)
        return actions.copy(), rewards, np.ones(len(states), dtype=bool)

    def goal_hits(self, final_states):
        return np.stack([final_states[:, 0] > 0.0, final_states[:, 0] < 0.0], axis=1)


def demo_batch(n=400, mean=0.7, sd=0.3, seed=11):
    rng = np.random.default_rng(seed)
    actions = mean + sd * rng.standard_normal((n, 1))
    return one_step_batch(np.zeros((n, 1)), actions)


class TestDiscriminator:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        disc = Discriminator(2, 1, hidden_width=4, rng=rng)
        learner = (rng.normal(size=(6, 2)), rng.normal(size=(6, 1)))
        expert = (rng.normal(size=(5, 2)), rng.normal(size=(5, 1)))
        _, grad = disc.objective_grad(learner, expert)
        theta = disc.get_params()
        step = 1e-6
        fd = np.empty_like(theta)
        for i in range(len(theta)):
            up, dn = theta.copy(), theta.copy()
            up[i] += step
            dn[i] -= step
            disc.set_params(up)
            f_up = disc.objective(learner, expert)
            disc.set_params(dn)
            f_dn = disc.objective(learner, expert)
            fd[i] = (f_up - f_dn) / (2 * step)
        disc.set_params(theta)
        assert np.abs(fd - grad).max() <= 1e-4 * np.abs(grad).max()

    def test_identical_batches_cap_at_indifference(self):
        # when learner and expert data coincide the best the objective can
        # do is log(1/4) per pair, attained exactly at D = 1/2
        rng = np.random.default_rng(1)
        disc = Discriminator(1, 1, hidden_width=8, rng=rng)
        pairs = (rng.normal(size=(40, 1)), rng.normal(size=(40, 1)))
        bound = -2.0 * np.log(2.0)
        for _ in range(400):
            report = discriminator_update(disc, pairs, pairs, lr=0.5)
            assert report.post_objective <= bound + 1e-9
        assert abs(report.post_objective - bound) <= 1e-5
        disc.set_params(np.zeros(disc.n_params))
        assert disc.objective(pairs, pairs) == bound

    def test_separable_batches_improve(self):
        rng = np.random.default_rng(2)
        disc = Discriminator(1, 1, hidden_width=8, rng=rng)
        learner = (np.zeros((30, 1)), 2.0 + 0.1 * rng.standard_normal((30, 1)))
        expert = (np.zeros((30, 1)), -2.0 + 0.1 * rng.standard_normal((30, 1)))
        report = discriminator_update(disc, learner, expert, lr=0.5)
        assert report.post_objective > report.pre_objective

    def test_output_strictly_inside_unit_interval(self):
        disc = Discriminator(1, 1, hidden_width=2, rng=np.random.default_rng(3))
        disc.set_params(1e6 * np.ones(disc.n_params))
        huge = np.full((3, 1), 1e9)
        probs = disc.prob(huge, huge)
        assert np.all(probs > 0.0) and np.all(probs < 1.0)
        assert np.abs(disc.logit(huge, huge)).max() <= 30.0

    def test_validation(self):
        disc = Discriminator(1, 1, hidden_width=2, rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="expected"):
            disc.set_params(np.zeros(3))
        with pytest.raises(ValueError, match="lr"):
            discriminator_update(disc, (np.zeros((1, 1)), np.zeros((1, 1))),
                                 (np.zeros((1, 1)), np.zeros((1, 1))), lr=0.0)
        with pytest.raises(ValueError, match="aligned"):
            disc.objective((np.zeros((2, 1)), np.zeros((3, 1))),
                           (np.zeros((1, 1)), np.zeros((1, 1))))


class TestLearnerReward:
    def test_reward_is_negative_log_d(self):
        disc = rigged_discriminator()
        states = np.zeros((9, 1))
        actions = np.linspace(-2, 2, 9)[:, None]
        reward = learner_reward(disc, states, actions)
        assert np.allclose(reward, -np.log(disc.prob(states, actions)), atol=1e-12)

    def test_reward_falls_as_d_rises(self):
        disc = rigged_discriminator()
        states = np.zeros((9, 1))
        actions = np.linspace(-2, 2, 9)[:, None]
        d = disc.prob(states, actions)
        reward = learner_reward(disc, states, actions)
        order = np.argsort(d)
        assert np.all(np.diff(reward[order]) <= 0.0)


class TestPolicyUpdateExactness:
    def fixed_policy(self):
        return SparseMixturePolicy.constant(
            np.array([0.2, 0.0]), np.array([[-0.8], [0.9]]), np.array([[0.6], [0.5]])
        )

    def sampled_batch(self, policy, n=16):
        u = np.random.default_rng(7).random(n)
        z = np.random.default_rng(8).standard_normal((n, 1))
        actions = policy.sample_batch(np.zeros((n, 1)), u, z)
        return one_step_batch(np.zeros((n, 1)), actions)

    def test_constant_reward_and_zero_alpha_moves_nothing(self):
        # rewards are identical across episodes, so every baseline-centered
        # coefficient is exactly zero — not merely zero in expectation
        policy = self.fixed_policy()
        theta0 = policy.get_params()
        batch = self.sampled_batch(policy)
        report = policy_update_mcteil(policy, half_discriminator(), batch,
                                      alpha=0.0, lr=0.1, gamma=0.9)
        assert report.grad_norm == 0.0
        assert np.array_equal(policy.get_params(), theta0)

    def test_constant_reward_leaves_pure_entropy_ascent(self):
        policy = self.fixed_policy()
        theta0 = policy.get_params()
        batch = self.sampled_batch(policy)
        weights = batch.step_discounts(0.9) / len(batch)
        _, ent_grad = policy.entropy_grad(batch.flat_states(), weights)
        policy_update_mcteil(policy, half_discriminator(), batch,
                             alpha=0.7, lr=0.1, gamma=0.9)
        assert np.array_equal(policy.get_params(), theta0 + 0.1 * (0.7 * ent_grad))

    def test_alpha_zero_collapses_to_plain_adversarial_step(self):
        # with no entropy bonus the sparse and soft updates are the same
        # estimator; on a shared softmax-gated policy they agree bitwise
        pa = SparseMixturePolicy(1, 1, 3, hidden_width=4, gate="softmax",
                                 rng=np.random.default_rng(9))
        pb = SparseMixturePolicy(1, 1, 3, hidden_width=4, gate="softmax",
                                 rng=np.random.default_rng(9))
        assert np.array_equal(pa.get_params(), pb.get_params())
        rng = np.random.default_rng(55)
        u, z = rng.random(32), rng.standard_normal((32, 1))
        actions = pa.sample_batch(np.zeros((32, 1)), u, z)
        batch = one_step_batch(np.zeros((32, 1)), actions)
        disc = rigged_discriminator()
        policy_update_mcteil(pa, disc, batch, alpha=0.0, lr=0.07, gamma=0.9)
        policy_update_soft_gail(pb, disc, batch, alpha=0.0, lr=0.07, gamma=0.9)
        assert np.array_equal(pa.get_params(), pb.get_params())


class TestPolicyGradientUnbiased:
    def test_estimator_mean_matches_exact_bandit_gradient(self):
        """Empirical mean of the score-function step over 10^4 resampled
        batches vs the exact gradient of J = integral pi(a) r(a) da,
        computed by quadrature plus central finite differences."""
        policy = SparseMixturePolicy.constant(
            np.array([0.2, 0.0]), np.array([[-0.8], [0.9]]), np.array([[0.6], [0.5]])
        )
        disc = rigged_discriminator()
        theta0 = policy.get_params()

        grid = np.linspace(-12, 12, 4001)
        dg = grid[1] - grid[0]
        grid_states = np.zeros((len(grid), 1))
        grid_rewards = learner_reward(disc, grid_states, grid[:, None])

        def exact_objective():
            dens = np.exp(policy.log_density_batch(grid_states, grid[:, None]))
            return float((dens * grid_rewards).sum() * dg)

        step = 1e-5
        exact = np.empty_like(theta0)
        for i in range(len(theta0)):
            up, dn = theta0.copy(), theta0.copy()
            up[i] += step
            dn[i] -= step
            policy.set_params(up)
            f_up = exact_objective()
            policy.set_params(dn)
            f_dn = exact_objective()
            exact[i] = (f_up - f_dn) / (2 * step)
        policy.set_params(theta0)

        resamples, batch_size, lr = 10000, 4, 0.1
        rng = np.random.default_rng(2024)
        draws = np.empty((resamples, len(theta0)))
        for r in range(resamples):
            u = rng.random(batch_size)
            z = rng.standard_normal((batch_size, 1))
            actions = policy.sample_batch(np.zeros((batch_size, 1)), u, z)
            batch = one_step_batch(np.zeros((batch_size, 1)), actions)
            policy_update_mcteil(policy, disc, batch, alpha=0.0, lr=lr, gamma=0.9)
            draws[r] = (policy.get_params() - theta0) / lr
            policy.set_params(theta0)

        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / np.sqrt(resamples)
        # parameters feeding dead inputs (state is 0, hidden activations 0)
        # have exactly zero gradient in both estimator and oracle
        dead = se == 0.0
        assert np.abs(mean - exact)[dead].max() == 0.0
        assert np.all(np.abs(mean - exact)[~dead] <= 3.0 * se[~dead])


class TestBanditImprovement:
    def mass_below_zero(self, policy, grid):
        dg = grid[1] - grid[0]
        dens = np.exp(policy.log_density_batch(np.zeros((len(grid), 1)), grid[:, None]))
        return float((dens * (grid < 0)).sum() * dg)

    def run_variant(self, update, gate, alpha, seed, stream_seed):
        policy = SparseMixturePolicy(1, 1, 2, hidden_width=4, gate=gate,
                                     rng=np.random.default_rng(seed))
        disc = rigged_discriminator()
        grid = np.linspace(-12, 12, 2001)
        before = self.mass_below_zero(policy, grid)
        rng = np.random.default_rng(stream_seed)
        for _ in range(50):
            u, z = rng.random(64), rng.standard_normal((64, 1))
            actions = policy.sample_batch(np.zeros((64, 1)), u, z)
            batch = one_step_batch(np.zeros((64, 1)), actions)
            update(policy, disc, batch, alpha=alpha, lr=0.05, gamma=0.9)
        return before, self.mass_below_zero(policy, grid)

    def test_sparse_update_shifts_mass_to_favored_region(self):
        before, after = self.run_variant(policy_update_mcteil, "sparsemax", 0.0, 0, 100)
        assert after > before + 0.3

    def test_soft_update_shifts_mass_to_favored_region(self):
        before, after = self.run_variant(policy_update_soft_gail, "softmax", 0.02, 0, 200)
        assert after > before + 0.3


class TestBehaviorCloning:
    def test_recovers_sample_mean_and_spread(self):
        demos = demo_batch()
        demo_actions = demos.flat_actions()
        policy = SparseMixturePolicy(1, 1, 1, hidden_width=4, rng=np.random.default_rng(3))
        behavior_cloning(policy, demos, epochs=2000, lr=0.05)
        _, mu, sigma = policy.mixture(np.zeros((1, 1)))
        assert abs(mu[0, 0, 0] - demo_actions.mean()) <= 1e-6
        assert abs(sigma[0, 0, 0] - demo_actions.std(ddof=0)) <= 1e-3

    def test_duplicated_demos_reach_same_optimum(self):
        demos = demo_batch()
        doubled = TrajectoryBatch(demos.episodes + demos.episodes)
        pa = SparseMixturePolicy(1, 1, 1, hidden_width=4, rng=np.random.default_rng(3))
        pb = SparseMixturePolicy(1, 1, 1, hidden_width=4, rng=np.random.default_rng(3))
        ra = behavior_cloning(pa, demos, epochs=50, lr=0.05)
        rb = behavior_cloning(pb, doubled, epochs=50, lr=0.05)
        assert np.abs(pa.get_params() - pb.get_params()).max() <= 1e-12
        assert np.abs(ra.nll_history - rb.nll_history).max() <= 1e-12

    def test_nll_never_rises_with_small_lr(self):
        demos = demo_batch()
        policy = SparseMixturePolicy(1, 1, 2, hidden_width=4, rng=np.random.default_rng(6))
        report = behavior_cloning(policy, demos, epochs=200, lr=0.02)
        assert np.all(np.diff(report.nll_history) <= 1e-6)
        assert report.final_nll == report.nll_history[-1]

    def test_validation(self):
        demos = demo_batch(n=4)
        policy = SparseMixturePolicy(1, 1, 1, hidden_width=2, rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="epochs"):
            behavior_cloning(policy, demos, epochs=0, lr=0.1)
        with pytest.raises(ValueError, match="lr"):
            behavior_cloning(policy, demos, epochs=1, lr=0.0)


class TestTrain:
    def small_config(self, **overrides):
        base = dict(variant="mcteil", alpha=0.1, episodes_per_iter=20, iterations=3,
                    n_components=2, hidden_width=4, disc_hidden_width=4, seed=5)
        base.update(overrides)
        return TrainerConfig(**base)

    def test_rerun_is_bit_identical(self, tmp_path):
        demos = demo_batch()
        env = BanditEnv()
        cfg = self.small_config()
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        ra = train(cfg, env, demos=demos, out_dir=str(out_a))
        rb = train(cfg, env, demos=demos, out_dir=str(out_b))
        assert ra.rows == rb.rows
        assert (out_a / "train_log.csv").read_bytes() == (out_b / "train_log.csv").read_bytes()
        assert (out_a / "checkpoint.json").read_bytes() == (out_b / "checkpoint.json").read_bytes()

    def test_adversarial_log_schema(self, tmp_path):
        result = train(self.small_config(), BanditEnv(), demos=demo_batch(),
                       out_dir=str(tmp_path))
        assert result.columns == LOG_COLUMNS
        header = (tmp_path / "train_log.csv").read_text().splitlines()[0]
        assert header == ",".join(LOG_COLUMNS)
        assert len(result.rows) == 3
        assert result.final_row["iteration"] == 2
        restored = SparseMixturePolicy.load(tmp_path / "checkpoint.json")
        assert np.array_equal(restored.get_params(), result.policy.get_params())

    def test_bc_variant_logs_nll(self):
        cfg = self.small_config(variant="bc", n_components=1, policy_lr=0.1)
        result = train(cfg, BanditEnv(), demos=demo_batch())
        assert result.columns == BC_LOG_COLUMNS
        assert "nll" in result.final_row and "disc_objective" not in result.final_row
        nll = [row["nll"] for row in result.rows]
        assert np.all(np.diff(nll) <= 1e-6)

    def test_soft_gail_uses_softmax_gate(self):
        result = train(self.small_config(variant="soft_gail"), BanditEnv(),
                       demos=demo_batch())
        assert result.policy.gate == "softmax"

    def test_sparse_variant_uses_sparsemax_gate(self):
        result = train(self.small_config(), BanditEnv(), demos=demo_batch())
        assert result.policy.gate == "sparsemax"

    def test_reachability_blank_without_goal_reporting(self):
        result = train(self.small_config(iterations=1), BanditEnv(), demos=demo_batch())
        assert result.final_row["reachability"] == ""

    def test_reachability_counts_distinct_goals(self):
        result = train(self.small_config(iterations=1), TwoGoalBandit(), demos=demo_batch())
        assert result.final_row["reachability"] in (1, 2)

    def test_missing_demos_rejected(self):
        with pytest.raises(ValueError, match="demo"):
            train(self.small_config(), BanditEnv())

    def test_config_validation(self):
        with pytest.raises(ValueError, match="variant"):
            TrainerConfig(variant="gail")
        with pytest.raises(ValueError, match="alpha"):
            TrainerConfig(alpha=-0.1)
        with pytest.raises(ValueError, match="gamma"):
            TrainerConfig(gamma=1.0)
        with pytest.raises(ValueError, match="positive"):
            TrainerConfig(iterations=0)
        with pytest.raises(ValueError, match="rates"):
            TrainerConfig(policy_lr=0.0)
        with pytest.raises(ValueError, match="sizes"):
            TrainerConfig(n_components=0)
