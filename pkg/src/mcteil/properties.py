"""Self-contained invariant checks, runnable from the command line.

Each check is a small randomized experiment that exercises one library
invariant and returns a ``PropertyResult``.  The suite is what the
``mcteil suite`` subcommand runs; it is intentionally lighter than the
test suite (seconds, not minutes) so it can serve as a smoke check on a
fresh install.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import mdn, multigoal
from .mdp import (
    PolicyTable,
    causal_tsallis_entropy,
    occupancy_from_policy,
    policy_evaluation,
    random_mdp,
    sparse_value_iteration,
    tsallis_entropy_of_occupancy,
)
from .irl import verify_kkt, DualState
from .sparsemax import sparsemax, sparsemax_batch, tsallis_entropy_discrete, brier_score

__all__ = ["PropertyResult", "run_suite", "SUITE"]


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


def _check_sparsemax_projection(rng: np.random.Generator) -> PropertyResult:
    """sparsemax output is the closest simplex point (spot-checked against
    random simplex candidates)."""
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 10))
        z = rng.normal(scale=3.0, size=n)
        p = sparsemax(z).dist.probs
        base = ((p - z) ** 2).sum()
        candidates = rng.dirichlet(np.ones(n), size=200)
        gaps = ((candidates - z) ** 2).sum(axis=1) - base
        worst = min(worst, float(gaps.min()))
    ok = worst >= -1e-9
    return PropertyResult("sparsemax_is_projection", ok,
                          f"worst candidate improvement {worst:.2e}")


def _check_brier_entropy_identity(rng: np.random.Generator) -> PropertyResult:
    """Expected Brier score of a distribution against its own draws equals
    its Tsallis entropy."""
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 8))
        p = rng.dirichlet(np.ones(n))
        expected = sum(p[a] * brier_score(p, a) for a in range(n))
        worst = max(worst, abs(expected - tsallis_entropy_discrete(p)))
    ok = worst <= 1e-12
    return PropertyResult("brier_matches_tsallis", ok, f"max gap {worst:.2e}")


def _check_entropy_forms_agree(rng: np.random.Generator) -> PropertyResult:
    """Policy-form and occupancy-form causal entropy agree on random MDPs."""
    worst = 0.0
    for _ in range(20):
        m = random_mdp(int(rng.integers(3, 12)), int(rng.integers(2, 5)), rng=rng)
        probs, _, _ = sparsemax_batch(rng.normal(size=(m.n_states, m.n_actions)))
        pol = PolicyTable(probs)
        rho = occupancy_from_policy(m, pol)
        gap = abs(causal_tsallis_entropy(m, pol) - tsallis_entropy_of_occupancy(rho))
        worst = max(worst, gap)
    ok = worst <= 1e-10
    return PropertyResult("entropy_policy_vs_occupancy", ok, f"max gap {worst:.2e}")


def _check_solver_kkt(rng: np.random.Generator) -> PropertyResult:
    """Sparse value iteration lands on a point satisfying its optimality
    system."""
    worst = 0.0
    for _ in range(10):
        m = random_mdp(int(rng.integers(3, 10)), int(rng.integers(2, 5)), rng=rng)
        alpha = float(rng.uniform(0.2, 2.0))
        values, policy = sparse_value_iteration(m, alpha, tol=1e-12)
        # one-hot features make theta = the flattened reward table
        dual = DualState(m.reward.ravel(), values.v, 0)
        report = verify_kkt(m, policy, dual, alpha)
        worst = max(worst, report.policy_residual, report.value_residual)
    ok = worst <= 1e-8
    return PropertyResult("solver_satisfies_kkt", ok, f"max residual {worst:.2e}")


def _check_fixed_point_is_evaluation(rng: np.random.Generator) -> PropertyResult:
    """The solver's value function equals a linear-solve evaluation of its
    own policy under the entropy-augmented reward."""
    worst = 0.0
    for _ in range(10):
        m = random_mdp(int(rng.integers(3, 10)), int(rng.integers(2, 5)), rng=rng)
        alpha = float(rng.uniform(0.2, 2.0))
        values, policy = sparse_value_iteration(m, alpha, tol=1e-12)
        v_eval = policy_evaluation(m, policy, entropy_coeff=alpha)
        worst = max(worst, float(np.abs(values.v - v_eval).max()))
    ok = worst <= 1e-8
    return PropertyResult("value_equals_policy_evaluation", ok, f"max gap {worst:.2e}")


def _check_mixture_entropy_gradient(rng: np.random.Generator) -> PropertyResult:
    """Analytic mixture-entropy gradient matches central differences."""
    worst = 0.0
    for _ in range(5):
        k, d = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        w = rng.dirichlet(np.ones(k))
        mu = rng.normal(size=(k, d))
        sigma = rng.uniform(0.3, 1.2, size=(k, d))
        _, d_w, d_mu, d_sigma = mdn.mixture_tsallis_grad(w, mu, sigma)
        h = 1e-6
        for arr, grad in ((mu, d_mu), (sigma, d_sigma)):
            flat, gflat = arr.ravel(), grad.ravel()
            for i in range(flat.size):
                bump = np.zeros_like(flat)
                bump[i] = h
                up = mdn.mixture_tsallis(w, *_restore(mu, sigma, arr, flat + bump))
                dn = mdn.mixture_tsallis(w, *_restore(mu, sigma, arr, flat - bump))
                fd = (up - dn) / (2 * h)
                worst = max(worst, abs(fd - gflat[i]) / max(1.0, abs(fd)))
    ok = worst <= 1e-4
    return PropertyResult("mixture_entropy_gradient", ok, f"max rel err {worst:.2e}")


def _restore(mu, sigma, which, new_flat):
    if which is mu:
        return new_flat.reshape(mu.shape), sigma
    return mu, new_flat.reshape(sigma.shape)


def _check_world_symmetry(rng: np.random.Generator) -> PropertyResult:
    """Rotating a trajectory by 90 degrees preserves its rewards."""
    world = multigoal.MultiGoalWorld()
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    worst = 0.0
    for _ in range(20):
        p = rng.uniform(-0.9, 0.9, size=(1, 2))
        a = rng.uniform(-1.0, 1.0, size=(1, 2))
        _, r1, _ = world.step_batch(p, a)
        _, r2, _ = world.step_batch(p @ rot.T, a @ rot.T)
        worst = max(worst, abs(float(r1[0]) - float(r2[0])))
    ok = worst <= 1e-9
    return PropertyResult("world_quarter_turn_symmetry", ok, f"max reward gap {worst:.2e}")


def _check_rollout_determinism(rng: np.random.Generator) -> PropertyResult:
    """Identical seeds give identical expert demonstrations."""
    world = multigoal.MultiGoalWorld(max_steps=25)
    a = multigoal.generate_expert_demos(world, n_demos=4, rng=np.random.default_rng(7),
                                        grid_n=11)
    b = multigoal.generate_expert_demos(world, n_demos=4, rng=np.random.default_rng(7),
                                        grid_n=11)
    same = all(
        np.array_equal(x.states, y.states) and np.array_equal(x.actions, y.actions)
        for x, y in zip(a.episodes, b.episodes)
    )
    return PropertyResult("expert_demo_determinism", same,
                          "identical" if same else "seed-matched runs diverged")


SUITE: tuple[tuple[str, Callable[[np.random.Generator], PropertyResult]], ...] = (
    ("sparsemax_is_projection", _check_sparsemax_projection),
    ("brier_matches_tsallis", _check_brier_entropy_identity),
    ("entropy_policy_vs_occupancy", _check_entropy_forms_agree),
    ("solver_satisfies_kkt", _check_solver_kkt),
    ("value_equals_policy_evaluation", _check_fixed_point_is_evaluation),
    ("mixture_entropy_gradient", _check_mixture_entropy_gradient),
    ("world_quarter_turn_symmetry", _check_world_symmetry),
    ("expert_demo_determinism", _check_rollout_determinism),
)


def run_suite(seed: int = 0) -> list[PropertyResult]:
    """Run every registered check on its own seeded stream."""
    streams = np.random.SeedSequence(seed).spawn(len(SUITE))
    results = []
    for (name, fn), ss in zip(SUITE, streams):
        try:
            results.append(fn(np.random.default_rng(ss)))
        except Exception as exc:  # a crashed check is a failed check
            results.append(PropertyResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return results
