"""Adversarial imitation training for sparse mixture policies.

One iteration of the main loop samples a batch of episodes, takes a
gradient ascent step on the discriminator objective

    mean_learner log D(s, a) + mean_expert log(1 - D(s, a)),

and then improves the policy on the surrogate reward ``-log D`` (high
where the discriminator mistakes the learner for the expert).  The policy
step is a plain score-function estimator with a constant batch-mean
baseline, Bessel-corrected so the baseline introduces no bias:

    g = 1/(N-1) * sum_i (G_i - mean G) * sum_t grad log pi(a_t | s_t).

The sparse variant adds the exact gradient of the discounted analytic
Tsallis entropy of the policy at visited states; the soft variant instead
folds ``-alpha log pi(a_t|s_t)`` into the per-step reward and gates its
mixture with softmax.  A behavior-cloning baseline (no discriminator)
closes the set.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .mdn import SparseMixturePolicy, tsallis_entropy_per_sample
from .trajectories import TrajectoryBatch, load_demos, rollout_batch

__all__ = [
    "TrainerConfig",
    "Discriminator",
    "DiscUpdateReport",
    "PolicyUpdateReport",
    "BcReport",
    "TrainResult",
    "learner_reward",
    "discriminator_update",
    "policy_update_mcteil",
    "policy_update_soft_gail",
    "behavior_cloning",
    "train",
]

VARIANTS = ("mcteil", "soft_gail", "bc")

LOG_COLUMNS = (
    "iteration",
    "avg_return",
    "reachability",
    "entropy_estimate",
    "disc_objective",
    "policy_grad_norm",
)
BC_LOG_COLUMNS = (
    "iteration",
    "avg_return",
    "reachability",
    "entropy_estimate",
    "nll",
    "policy_grad_norm",
)


@dataclass(frozen=True)
class TrainerConfig:
    """Knobs of one training cell.  Validated eagerly so a bad experiment
    file fails before any compute is spent."""

    variant: str = "mcteil"
    alpha: float = 0.5
    episodes_per_iter: int = 500
    iterations: int = 100
    gamma: float = 0.95
    policy_lr: float = 0.05
    disc_lr: float = 0.25
    disc_steps: int = 1
    n_components: int = 4
    hidden_width: int = 64
    disc_hidden_width: int = 64
    gate_temperature: float = 1.0
    init_sigma: float = 0.5
    sigma_floor: float = 1e-3
    demo_path: str | None = None
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.alpha < 0.0:
            raise ValueError("alpha must be nonnegative")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if min(self.episodes_per_iter, self.iterations, self.disc_steps) < 1:
            raise ValueError("episode, iteration, and disc-step counts must be positive")
        if min(self.policy_lr, self.disc_lr) <= 0.0:
            raise ValueError("learning rates must be positive")
        if min(self.n_components, self.hidden_width, self.disc_hidden_width) < 1:
            raise ValueError("network sizes must be positive")


class Discriminator:
    """Two-layer tanh classifier over concatenated (state, action) pairs.

    The pre-sigmoid logit is clamped to [-30, 30], keeping D strictly
    inside (0, 1) so both log D and log(1 - D) stay finite.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden_width: int = 64,
        logit_clamp: float = 30.0,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng()
        n_in = state_dim + action_dim
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.hidden_width = int(hidden_width)
        self.logit_clamp = float(logit_clamp)
        self.w_hidden = rng.standard_normal((hidden_width, n_in)) / np.sqrt(n_in)
        self.b_hidden = np.zeros(hidden_width)
        self.w_out = 0.1 * rng.standard_normal(hidden_width) / np.sqrt(hidden_width)
        self.b_out = 0.0

    @property
    def n_params(self) -> int:
        return self.w_hidden.size + self.b_hidden.size + self.w_out.size + 1

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [self.w_hidden.ravel(), self.b_hidden, self.w_out, [self.b_out]]
        )

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters")
        h, n_in = self.w_hidden.shape
        self.w_hidden = flat[: h * n_in].reshape(h, n_in)
        self.b_hidden = flat[h * n_in : h * n_in + h]
        self.w_out = flat[h * n_in + h : h * n_in + 2 * h]
        self.b_out = float(flat[-1])

    def _forward(self, states: np.ndarray, actions: np.ndarray) -> dict:
        x = np.concatenate(
            [np.atleast_2d(np.asarray(states, dtype=float)),
             np.atleast_2d(np.asarray(actions, dtype=float))],
            axis=1,
        )
        h = np.tanh(x @ self.w_hidden.T + self.b_hidden)
        raw = h @ self.w_out + self.b_out
        logit = np.clip(raw, -self.logit_clamp, self.logit_clamp)
        return {"x": x, "h": h, "raw": raw, "logit": logit}

    def logit(self, states, actions) -> np.ndarray:
        return self._forward(states, actions)["logit"]

    def prob(self, states, actions) -> np.ndarray:
        """D(s, a): the probability assigned to 'this pair came from the learner'."""
        return 1.0 / (1.0 + np.exp(-self.logit(states, actions)))

    def objective(self, learner, expert) -> float:
        """mean log D on learner pairs plus mean log(1 - D) on expert pairs."""
        ls, la = _flat_pairs(learner)
        es, ea = _flat_pairs(expert)
        u_l = self.logit(ls, la)
        u_e = self.logit(es, ea)
        return float(-np.logaddexp(0.0, -u_l).mean() - np.logaddexp(0.0, u_e).mean())

    def objective_grad(self, learner, expert) -> tuple[float, np.ndarray]:
        """Objective value and its gradient in the flat parameter layout."""
        ls, la = _flat_pairs(learner)
        es, ea = _flat_pairs(expert)
        cl = self._forward(ls, la)
        ce = self._forward(es, ea)
        value = float(
            -np.logaddexp(0.0, -cl["logit"]).mean() - np.logaddexp(0.0, ce["logit"]).mean()
        )
        d_l = 1.0 / (1.0 + np.exp(cl["logit"]))  # 1 - D on learner pairs
        d_e = -1.0 / (1.0 + np.exp(-ce["logit"]))  # -D on expert pairs
        d_l = np.where(np.abs(cl["raw"]) < self.logit_clamp, d_l, 0.0) / len(d_l)
        d_e = np.where(np.abs(ce["raw"]) < self.logit_clamp, d_e, 0.0) / len(d_e)

        x = np.concatenate([cl["x"], ce["x"]])
        h = np.concatenate([cl["h"], ce["h"]])
        du = np.concatenate([d_l, d_e])
        grad_w_out = du @ h
        grad_b_out = du.sum()
        d_h = du[:, None] * self.w_out
        d_hraw = (1.0 - h**2) * d_h
        grad_w_hidden = d_hraw.T @ x
        grad_b_hidden = d_hraw.sum(axis=0)
        grad = np.concatenate(
            [grad_w_hidden.ravel(), grad_b_hidden, grad_w_out, [grad_b_out]]
        )
        return value, grad


def _flat_pairs(batch) -> tuple[np.ndarray, np.ndarray]:
    """Accept a TrajectoryBatch or a (states, actions) pair of arrays."""
    if isinstance(batch, TrajectoryBatch):
        return batch.flat_states(), batch.flat_actions()
    states, actions = batch
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    if len(states) == 0 or len(states) != len(actions):
        raise ValueError("need nonempty, aligned state/action batches")
    return states, actions


def learner_reward(disc: Discriminator, states, actions) -> np.ndarray:
    """Surrogate reward ``-log D(s, a)``; decreases as D rises, bounded by
    the discriminator's logit clamp."""
    return np.logaddexp(0.0, -disc.logit(states, actions))


@dataclass(frozen=True)
class DiscUpdateReport:
    pre_objective: float
    post_objective: float


def discriminator_update(disc: Discriminator, learner, expert, lr: float) -> DiscUpdateReport:
    """One gradient ascent step on the discrimination objective."""
    if lr <= 0.0:
        raise ValueError("lr must be positive")
    pre, grad = disc.objective_grad(learner, expert)
    disc.set_params(disc.get_params() + lr * grad)
    post = disc.objective(learner, expert)
    return DiscUpdateReport(pre, post)


@dataclass(frozen=True)
class PolicyUpdateReport:
    grad_norm: float
    mean_return: float
    entropy: float


def _score_function_grad(
    policy: SparseMixturePolicy,
    batch: TrajectoryBatch,
    step_rewards: np.ndarray,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """REINFORCE gradient of E[sum_t gamma^t r_t] with a batch-mean baseline.

    Every step of episode i carries the coefficient (G_i - mean G)/(N - 1);
    dividing by N-1 rather than N makes the estimator exactly unbiased
    despite the data-dependent baseline.
    """
    discounts = batch.step_discounts(gamma)
    ep_idx = batch.episode_index()
    n = len(batch)
    returns = np.zeros(n)
    np.add.at(returns, ep_idx, discounts * step_rewards)
    if n > 1:
        coeff_ep = (returns - returns.mean()) / (n - 1)
    else:
        coeff_ep = returns.copy()
    _, grad = policy.weighted_logp_grad(
        batch.flat_states(), batch.flat_actions(), coeff_ep[ep_idx]
    )
    return grad, returns


def policy_update_mcteil(
    policy: SparseMixturePolicy,
    disc: Discriminator,
    batch: TrajectoryBatch,
    alpha: float,
    lr: float,
    gamma: float,
) -> PolicyUpdateReport:
    """Score-function step on reward -log D plus the exact gradient of the
    discounted analytic Tsallis entropy at visited states."""
    states, actions = batch.flat_states(), batch.flat_actions()
    rewards = learner_reward(disc, states, actions)
    rl_grad, returns = _score_function_grad(policy, batch, rewards, gamma)
    ent_weights = batch.step_discounts(gamma) / len(batch)
    ent_value, ent_grad = policy.entropy_grad(states, ent_weights)
    grad = rl_grad + alpha * ent_grad
    policy.set_params(policy.get_params() + lr * grad)
    return PolicyUpdateReport(float(np.linalg.norm(grad)), float(returns.mean()), ent_value)


def policy_update_soft_gail(
    policy: SparseMixturePolicy,
    disc: Discriminator,
    batch: TrajectoryBatch,
    alpha: float,
    lr: float,
    gamma: float,
) -> PolicyUpdateReport:
    """Score-function step on reward -log D - alpha log pi(a|s): the
    log-likelihood entropy bonus enters through the reward, not through an
    analytic pathway."""
    states, actions = batch.flat_states(), batch.flat_actions()
    logp = policy.log_density_batch(states, actions)
    rewards = learner_reward(disc, states, actions) - alpha * logp
    grad, returns = _score_function_grad(policy, batch, rewards, gamma)
    policy.set_params(policy.get_params() + lr * grad)
    gibbs = float((batch.step_discounts(gamma) / len(batch)) @ (-logp))
    return PolicyUpdateReport(float(np.linalg.norm(grad)), float(returns.mean()), gibbs)


@dataclass(frozen=True)
class BcReport:
    nll_history: np.ndarray

    @property
    def final_nll(self) -> float:
        return float(self.nll_history[-1])


def behavior_cloning(
    policy: SparseMixturePolicy, demos: TrajectoryBatch, epochs: int, lr: float
) -> BcReport:
    """Full-batch gradient ascent on the mean demo log likelihood."""
    if epochs < 1 or lr <= 0.0:
        raise ValueError("need epochs >= 1 and lr > 0")
    states, actions = demos.flat_states(), demos.flat_actions()
    coeffs = np.full(len(states), 1.0 / len(states))
    history = []
    for _ in range(epochs):
        logp, grad = policy.weighted_logp_grad(states, actions, coeffs)
        policy.set_params(policy.get_params() + lr * grad)
        history.append(-float(logp.mean()))
    return BcReport(np.asarray(history))


@dataclass
class TrainResult:
    columns: tuple
    rows: list = field(default_factory=list)
    policy: SparseMixturePolicy | None = None
    log_path: str | None = None
    checkpoint_path: str | None = None

    @property
    def final_row(self) -> dict:
        return self.rows[-1]


def _progress_rewards(batch: TrajectoryBatch) -> float:
    return float(batch.episode_returns(1.0).mean())


def train(config: TrainerConfig, env, demos: TrajectoryBatch | None = None,
          out_dir: str | None = None) -> TrainResult:
    """Run one training cell and optionally write its log and checkpoint.

    Randomness is derived entirely from ``config.seed``: the same config
    produces byte-identical logs on rerun.  The environment must follow
    the rollout protocol; if it also exposes ``goal_hits`` the log gains a
    per-iteration reachability count (distinct goals reached across the
    iteration's episodes).
    """
    if demos is None:
        if config.demo_path is None:
            raise ValueError("no demonstrations: set demo_path or pass demos")
        demos = load_demos(config.demo_path)

    seq = np.random.SeedSequence(config.seed)
    policy_seq, disc_seq, roll_seq = seq.spawn(3)
    gate = "softmax" if config.variant == "soft_gail" else "sparsemax"
    policy = SparseMixturePolicy(
        env.state_dim,
        env.action_dim,
        config.n_components,
        hidden_width=config.hidden_width,
        gate=gate,
        gate_temperature=config.gate_temperature,
        sigma_floor=config.sigma_floor,
        init_sigma=config.init_sigma,
        rng=np.random.default_rng(policy_seq),
    )
    disc = None
    demo_pairs = (demos.flat_states(), demos.flat_actions())
    if config.variant != "bc":
        disc = Discriminator(
            env.state_dim,
            env.action_dim,
            hidden_width=config.disc_hidden_width,
            rng=np.random.default_rng(disc_seq),
        )
    roll_rng = np.random.default_rng(roll_seq)

    columns = BC_LOG_COLUMNS if config.variant == "bc" else LOG_COLUMNS
    result = TrainResult(columns=columns, policy=policy)
    track_goals = hasattr(env, "goal_hits")

    for it in range(config.iterations):
        batch = rollout_batch(
            env, policy, config.episodes_per_iter, roll_rng, max_steps=config.max_steps
        )
        reach = ""
        if track_goals:
            reach = int(env.goal_hits(batch.final_states()).any(axis=0).sum())
        row = {"iteration": it, "avg_return": _progress_rewards(batch), "reachability": reach}

        if config.variant == "bc":
            bc = behavior_cloning(policy, demos, epochs=1, lr=config.policy_lr)
            ent = tsallis_entropy_per_sample(policy, batch, config.gamma)
            row["nll"] = bc.final_nll
            row["entropy_estimate"] = ent.value
            row["policy_grad_norm"] = float("nan")
        else:
            for _ in range(config.disc_steps):
                disc_report = discriminator_update(
                    disc, (batch.flat_states(), batch.flat_actions()), demo_pairs,
                    config.disc_lr,
                )
            if config.variant == "mcteil":
                report = policy_update_mcteil(
                    policy, disc, batch, config.alpha, config.policy_lr, config.gamma
                )
            else:
                report = policy_update_soft_gail(
                    policy, disc, batch, config.alpha, config.policy_lr, config.gamma
                )
            row["disc_objective"] = disc_report.post_objective
            row["entropy_estimate"] = report.entropy
            row["policy_grad_norm"] = report.grad_norm
        result.rows.append(row)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "train_log.csv")
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in result.rows:
                writer.writerow([_format_cell(row[c]) for c in columns])
        ckpt_path = os.path.join(out_dir, "checkpoint.json")
        policy.save(ckpt_path)
        result.log_path = log_path
        result.checkpoint_path = ckpt_path
    return result


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
