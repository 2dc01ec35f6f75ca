"""Feature-matching inverse RL with causal Tsallis entropy regularization.

The primal problem is: maximize ``alpha * W(pi)`` over policies subject to
matching the expert's discounted feature expectation.  Its dual is an
unconstrained concave problem over the feature-weight vector theta, whose
inner maximization is exactly a sparse MDP solve with reward
``theta . phi(s, a)``.  ``solve_mcte`` runs plain dual ascent with exact
inner solves; ``verify_kkt`` checks the stationarity conditions that the
recovered policy and values must satisfy; ``robust_bayes_oracle`` is a
brute-force grid minimax of the expected Brier score, the decision-theoretic
face of the same problem, usable on tiny MDPs as an independent check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .mdp import (
    PolicyTable,
    TabularMdp,
    occupancy_from_policy,
    sparse_value_iteration,
    tsallis_entropy_of_occupancy,
)
from .sparsemax import sparsemax_batch
from .trajectories import TrajectoryBatch

__all__ = [
    "DualState",
    "KktReport",
    "McteSolution",
    "MinimaxResult",
    "feature_expectation",
    "empirical_feature_expectation",
    "solve_mcte",
    "verify_kkt",
    "robust_bayes_oracle",
    "mcte_objective_value",
    "simplex_grid",
    "write_residual_report",
]

# Brute-force minimax enumerates |grid|^S joint policies; cap the blowup
# with an explicit guard rather than an out-of-memory surprise.
_MAX_ENUMERATED_POLICIES = 300_000


@dataclass(frozen=True)
class DualState:
    """Dual variables of the feature-matching problem.

    theta are the feature weights (the recovered reward is theta . phi)
    and c are the per-state flow multipliers, equal to the fixed-point
    state values of the induced sparse MDP.
    """

    theta: np.ndarray
    c: np.ndarray
    step_count: int


@dataclass(frozen=True)
class KktReport:
    """Sup-norm residuals of the two stationarity conditions."""

    policy_residual: float
    value_residual: float


@dataclass(frozen=True)
class McteSolution:
    """Best-iterate result of dual ascent plus its convergence history."""

    policy: PolicyTable
    dual: DualState
    grad_norms: np.ndarray
    kkt_policy: np.ndarray
    kkt_value: np.ndarray
    best_step: int
    converged: bool

    def history_rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (i, float(g), float(kp), float(kv))
            for i, (g, kp, kv) in enumerate(
                zip(self.grad_norms, self.kkt_policy, self.kkt_value)
            )
        ]


@dataclass(frozen=True)
class MinimaxResult:
    """Outcome of the grid minimax: the decision policy, the game value,
    and the worst-case nature policy attaining it."""

    policy: PolicyTable
    value: float
    nature: PolicyTable


def feature_expectation(mdp: TabularMdp, policy: PolicyTable) -> np.ndarray:
    """Exact discounted feature expectation ``sum_{s,a} rho_pi(s,a) phi(s,a)``."""
    rho = occupancy_from_policy(mdp, policy).rho
    return np.einsum("sa,saf->f", rho, mdp.features)


def empirical_feature_expectation(
    demos: TrajectoryBatch, gamma: float, features: np.ndarray
) -> np.ndarray:
    """Monte Carlo feature expectation from demonstrated index trajectories.

    ``(1/N) sum_i sum_t gamma^t phi(s_it, a_it)`` where episodes carry
    integer state and action ids matching the feature table's first two
    axes.
    """
    phi = np.asarray(features, dtype=float)
    if phi.ndim != 3:
        raise ValueError("features must be an (S, A, F) table")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    states = demos.flat_states()
    actions = demos.flat_actions()
    if states.ndim != 1 or not np.issubdtype(states.dtype, np.integer):
        raise ValueError("empirical feature expectations need integer state ids")
    weights = demos.step_discounts(gamma) / len(demos)
    return np.einsum("n,nf->f", weights, phi[states, actions])


def verify_kkt(
    mdp: TabularMdp, policy: PolicyTable, dual: DualState, alpha: float
) -> KktReport:
    """Residuals of the stationarity system at (policy, dual).

    With ``q(s, a) = theta . phi(s, a) + gamma * sum_s' c(s') T(s'|s, a)``,
    an exact solution satisfies ``pi(.|s) = sparsemax(q(s, .)/alpha)`` and
    ``c(s) = alpha * (1/2 sum_{a in S(s)}((q/alpha)^2 - tau^2) + 1/2)``.
    Returns the sup-norm violation of each condition.
    """
    if alpha <= 0.0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be a positive real, got {alpha!r}")
    theta = np.asarray(dual.theta, dtype=float)
    c = np.asarray(dual.c, dtype=float)
    r_theta = np.einsum("saf,f->sa", mdp.features, theta)
    q = r_theta + mdp.discount * np.einsum("sax,x->sa", mdp.transition, c)
    probs, tau, _ = sparsemax_batch(q / alpha)
    scaled = q / alpha
    inside = np.where(probs > 0.0, scaled**2 - tau[:, None] ** 2, 0.0)
    c_implied = alpha * (0.5 * inside.sum(axis=1) + 0.5)
    return KktReport(
        policy_residual=float(np.max(np.abs(policy.probs - probs))),
        value_residual=float(np.max(np.abs(c - c_implied))),
    )


def solve_mcte(
    mdp: TabularMdp,
    mu_expert: np.ndarray,
    alpha: float = 1.0,
    lr: float = 1.0,
    iters: int = 500,
    tol: float = 1e-8,
    vi_tol: float = 1e-10,
) -> McteSolution:
    """Dual ascent on the feature-matching problem with exact inner solves.

    Each iteration plants reward ``theta . phi`` into the MDP, solves the
    sparse MDP exactly, and steps theta along the constraint violation
    ``mu_expert - mu_theta`` with a fixed learning rate.  The returned
    iterate is the one with the smallest gradient norm seen (best-iterate
    rule), with ``c`` set to that iterate's fixed-point state values.
    Lagrange multipliers for the nonnegativity constraints are never
    materialized; sparsemax absorbs them.
    """
    mu_expert = np.asarray(mu_expert, dtype=float)
    if mu_expert.shape != (mdp.n_features,):
        raise ValueError(
            f"expert features must have shape ({mdp.n_features},), got {mu_expert.shape}"
        )
    if lr <= 0.0 or iters < 1:
        raise ValueError("need lr > 0 and at least one iteration")

    theta = np.zeros(mdp.n_features)
    grad_norms, kkt_pol, kkt_val = [], [], []
    best = None  # (grad_norm, theta, policy, values, step)

    for step in range(iters):
        r_theta = np.einsum("saf,f->sa", mdp.features, theta)
        values, policy = sparse_value_iteration(mdp.with_reward(r_theta), alpha, tol=vi_tol)
        mu = feature_expectation(mdp, policy)
        grad = mu_expert - mu
        grad_norm = float(np.linalg.norm(grad))
        report = verify_kkt(mdp, policy, DualState(theta, values.v, step), alpha)
        grad_norms.append(grad_norm)
        kkt_pol.append(report.policy_residual)
        kkt_val.append(report.value_residual)
        if best is None or grad_norm < best[0]:
            best = (grad_norm, theta.copy(), policy, values, step)
        if grad_norm <= tol:
            break
        theta = theta + lr * grad

    _, theta_best, policy_best, values_best, best_step = best
    dual = DualState(theta_best, values_best.v, len(grad_norms))
    return McteSolution(
        policy=policy_best,
        dual=dual,
        grad_norms=np.asarray(grad_norms),
        kkt_policy=np.asarray(kkt_pol),
        kkt_value=np.asarray(kkt_val),
        best_step=best_step,
        converged=bool(best[0] <= tol),
    )


def write_residual_report(path, solution: McteSolution) -> None:
    """CSV of per-iteration gradient norms and KKT residuals."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "grad_norm", "kkt_residual_policy", "kkt_residual_value"])
        for row in solution.history_rows():
            writer.writerow([row[0]] + [repr(x) for x in row[1:]])


def simplex_grid(n_outcomes: int, step: float) -> np.ndarray:
    """All probability vectors over n outcomes with entries on a step grid.

    The grid resolution snaps to 1/round(1/step).  Enumeration uses the
    stars-and-bars bijection, so the row count is C(m + n - 1, n - 1)
    with m = round(1/step).
    """
    if not 0.0 < step <= 0.5:
        raise ValueError(f"grid step must lie in (0, 0.5], got {step!r}")
    m = int(round(1.0 / step))
    rows = []
    for dividers in combinations(range(m + n_outcomes - 1), n_outcomes - 1):
        prev = -1
        counts = []
        for d in dividers:
            counts.append(d - prev - 1)
            prev = d
        counts.append(m + n_outcomes - 2 - prev)
        rows.append(counts)
    return np.asarray(rows, dtype=float) / m


def robust_bayes_oracle(
    mdp: TabularMdp,
    mu_expert: np.ndarray | None,
    grid_step: float,
    feature_tol: float | None = None,
) -> MinimaxResult:
    """Brute-force minimax of the expected Brier score on a tiny MDP.

    The decision maker picks a predictive policy pi, nature picks a
    behavior policy whose feature expectation stays within ``feature_tol``
    (default ``grid_step * max|phi|``) of the expert's, and the payoff is
    nature's expected discounted Brier score of pi.  Both players range
    over per-state simplex grids.  ``mu_expert=None`` removes the
    constraint entirely.  Exponential in the state count by construction;
    guarded to n_states * n_actions <= 8.
    """
    n_s, n_a = mdp.n_states, mdp.n_actions
    if n_s * n_a > 8:
        raise ValueError("brute-force minimax is limited to n_states * n_actions <= 8")
    if not 0.0 < grid_step <= 0.1:
        raise ValueError(f"grid step must lie in (0, 0.1], got {grid_step!r}")

    per_state = simplex_grid(n_a, grid_step)
    n_grid = per_state.shape[0]
    if n_grid**n_s > _MAX_ENUMERATED_POLICIES:
        raise ValueError(
            f"grid would enumerate {n_grid**n_s} joint policies; coarsen grid_step"
        )
    combos = list(product(range(n_grid), repeat=n_s))
    policies = per_state[np.asarray(combos)]  # (n_pol, S, A)
    n_pol = policies.shape[0]

    # Occupancies of every candidate nature policy (reward plays no role).
    occupancies = np.empty((n_pol, n_s, n_a))
    for i in range(n_pol):
        occupancies[i] = occupancy_from_policy(mdp, PolicyTable(policies[i])).rho

    if mu_expert is None:
        admissible = np.arange(n_pol)
    else:
        mu_expert = np.asarray(mu_expert, dtype=float)
        if feature_tol is None:
            feature_tol = grid_step * float(np.max(np.abs(mdp.features)))
        mus = np.einsum("nsa,saf->nf", occupancies, mdp.features)
        admissible = np.flatnonzero(np.max(np.abs(mus - mu_expert), axis=1) <= feature_tol)
        if admissible.size == 0:
            raise ValueError(
                "no grid policy meets the feature constraint; "
                "widen feature_tol or refine grid_step"
            )
    nature_rho = occupancies[admissible].reshape(admissible.size, n_s * n_a)

    # Brier table of each decision policy: B[s, a] is the score suffered
    # when nature plays a in s.  E_nature[B] is then a flat dot product.
    sq = (policies**2).sum(axis=2, keepdims=True)
    brier = 0.5 * (1.0 - 2.0 * policies + sq)  # (n_pol, S, A)
    brier_flat = brier.reshape(n_pol, n_s * n_a)

    best_idx, best_worst = -1, np.inf
    chunk = 4096
    for start in range(0, n_pol, chunk):
        scores = brier_flat[start : start + chunk] @ nature_rho.T
        worst = scores.max(axis=1)
        local = int(worst.argmin())
        if worst[local] < best_worst:
            best_worst = float(worst[local])
            best_idx = start + local

    # nature's reply to the minimax policy; ties (e.g. against the uniform
    # decision rule, where every behavior scores alike) break toward the
    # maximum-entropy occupancy, nature's canonical equalizer
    replies = brier_flat[best_idx] @ nature_rho.T
    tied = np.flatnonzero(replies >= replies.max() - 1e-12)
    entropies = [
        tsallis_entropy_of_occupancy(nature_rho[i].reshape(n_s, n_a)) for i in tied
    ]
    best_nature = int(tied[int(np.argmax(entropies))])

    return MinimaxResult(
        policy=PolicyTable(policies[best_idx]),
        value=best_worst,
        nature=PolicyTable(policies[admissible[best_nature]]),
    )


def mcte_objective_value(mdp: TabularMdp, policy: PolicyTable) -> float:
    """The alpha-free objective ``W`` evaluated through the occupancy form."""
    return tsallis_entropy_of_occupancy(occupancy_from_policy(mdp, policy))
