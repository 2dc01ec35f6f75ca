"""Finite MDPs, occupancy measures, and entropy-regularized planning.

A tabular MDP bundles transitions, rewards, a discount, an initial
distribution, and per-pair feature vectors.  On top of it we provide:

* discounted occupancy measures and their inverse (policy extraction),
* the causal Tsallis entropy of a policy and its occupancy-measure form,
* sparse value iteration, whose per-state policy is the sparsemax of
  Q/alpha, alongside the classical soft (log-sum-exp) solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .sparsemax import SUM_ATOL, SIMPLEX_ATOL, sparsemax_batch

__all__ = [
    "ConvergenceError",
    "TabularMdp",
    "PolicyTable",
    "OccupancyMeasure",
    "ValueTable",
    "occupancy_from_policy",
    "policy_from_occupancy",
    "tsallis_entropy_of_occupancy",
    "causal_tsallis_entropy",
    "sparse_bellman_backup",
    "sparse_value_iteration",
    "soft_value_iteration",
    "policy_evaluation",
    "random_mdp",
    "gridworld_mdp",
    "save_mdp",
    "load_mdp",
]


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its budget.

    Carries the last sup-norm residual so callers can decide whether the
    answer is merely slow or actually diverging.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def _normalize_rows(arr: np.ndarray, what: str) -> np.ndarray:
    """Validate stochastic rows along the last axis, renormalizing drift."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} entries must be finite")
    if np.any(arr < -SIMPLEX_ATOL):
        raise ValueError(f"{what} has a negative entry ({arr.min()!r})")
    arr = np.maximum(arr, 0.0)
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SUM_ATOL):
        bad = float(sums.flat[np.argmax(np.abs(sums - 1.0))])
        raise ValueError(f"{what} row sums to {bad!r}, not 1")
    return arr / sums[..., None]


@dataclass(frozen=True)
class TabularMdp:
    """A finite MDP ``(S, A, T, r, gamma, d, phi)``.

    transition has shape (S, A, S) with stochastic last axis, reward is
    (S, A), initial is a distribution over states, and features is an
    (S, A, F) array of per-pair feature vectors.  ``features=None``
    installs one-hot indicator features with F = S * A.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    initial: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        d = np.asarray(self.initial, dtype=float)
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise ValueError(f"transition must be (S, A, S), got {t.shape}")
        n_s, n_a = t.shape[0], t.shape[1]
        if r.shape != (n_s, n_a):
            raise ValueError(f"reward must be {(n_s, n_a)}, got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if d.shape != (n_s,):
            raise ValueError(f"initial must be ({n_s},), got {d.shape}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount!r}")
        phi = self.features
        if phi is None:
            phi = np.eye(n_s * n_a).reshape(n_s, n_a, n_s * n_a)
        else:
            phi = np.asarray(phi, dtype=float)
            if phi.ndim != 3 or phi.shape[:2] != (n_s, n_a):
                raise ValueError(f"features must be (S, A, F), got {phi.shape}")
            if not np.all(np.isfinite(phi)):
                raise ValueError("features must be finite")
        object.__setattr__(self, "transition", _normalize_rows(t, "transition"))
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial", _normalize_rows(d, "initial distribution"))
        object.__setattr__(self, "features", phi)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_features(self) -> int:
        return self.features.shape[2]

    def with_reward(self, reward: np.ndarray) -> "TabularMdp":
        """Same dynamics and features, different reward table."""
        return replace(self, reward=np.asarray(reward, dtype=float))


@dataclass(frozen=True)
class PolicyTable:
    """Stationary stochastic policy: row s is a distribution over actions."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[1] == 0:
            raise ValueError(f"policy table must be (S, A), got {p.shape}")
        object.__setattr__(self, "probs", _normalize_rows(p, "policy"))

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "PolicyTable":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def support_sizes(self) -> np.ndarray:
        return (self.probs > 0.0).sum(axis=1)


@dataclass(frozen=True)
class OccupancyMeasure:
    """Discounted state-action visitation ``rho(s, a) = E sum_t gamma^t 1{s_t=s, a_t=a}``."""

    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=float)
        if r.ndim != 2:
            raise ValueError(f"occupancy must be (S, A), got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("occupancy entries must be finite")
        if np.any(r < -SIMPLEX_ATOL):
            raise ValueError(f"occupancy has a negative entry ({r.min()!r})")
        object.__setattr__(self, "rho", np.maximum(r, 0.0))

    @property
    def state_mass(self) -> np.ndarray:
        return self.rho.sum(axis=1)

    def flow_residual(self, mdp: TabularMdp) -> float:
        """Sup-norm violation of the discounted Bellman flow constraint."""
        inflow = mdp.initial + mdp.discount * np.einsum(
            "xas,xa->s", mdp.transition, self.rho
        )
        return float(np.max(np.abs(self.state_mass - inflow)))


@dataclass(frozen=True)
class ValueTable:
    """State values and state-action values of one solver run."""

    v: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if v.ndim != 1 or q.ndim != 2 or q.shape[0] != v.size:
            raise ValueError("values must be v:(S,), q:(S, A)")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(q))):
            raise ValueError("values must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "q", q)


def _transition_under_policy(mdp: TabularMdp, policy: PolicyTable) -> np.ndarray:
    """State-to-state kernel P_pi[s, s'] = sum_a pi(a|s) T(s'|s, a)."""
    return np.einsum("sa,sax->sx", policy.probs, mdp.transition)


def occupancy_from_policy(mdp: TabularMdp, policy: PolicyTable) -> OccupancyMeasure:
    """Exact discounted occupancy of a stationary policy.

    Solves the state-mass balance ``m = d + gamma * P_pi^T m`` directly and
    splits the mass across actions with the policy.  For gamma < 1 the
    system matrix is nonsingular; a LinAlgError here means the inputs were
    corrupted rather than ill-conditioned.
    """
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy shape does not match the MDP")
    p_pi = _transition_under_policy(mdp, policy)
    lhs = np.eye(mdp.n_states) - mdp.discount * p_pi.T
    mass = np.linalg.solve(lhs, mdp.initial)
    return OccupancyMeasure(mass[:, None] * policy.probs)


def policy_from_occupancy(rho) -> PolicyTable:
    """Conditional policy ``pi(a|s) = rho(s, a) / sum_a rho(s, a)``.

    States with zero visitation mass get a uniform row: the occupancy
    carries no information about them and uniform keeps the table valid.
    """
    r = rho.rho if isinstance(rho, OccupancyMeasure) else np.asarray(rho, dtype=float)
    r = OccupancyMeasure(r).rho
    mass = r.sum(axis=1)
    n_actions = r.shape[1]
    probs = np.full_like(r, 1.0 / n_actions)
    pos = mass > 0.0
    probs[pos] = r[pos] / mass[pos, None]
    return PolicyTable(probs)


def tsallis_entropy_of_occupancy(rho) -> float:
    """Causal Tsallis entropy written on the occupancy itself.

    ``1/2 * sum_{s,a} rho(s,a) * (1 - rho(s,a) / sum_a' rho(s,a'))`` with
    zero-mass states contributing nothing.  Strictly concave over the
    feasible flow polytope, and equal to the policy form of the entropy
    when rho is the occupancy of that policy.
    """
    r = rho.rho if isinstance(rho, OccupancyMeasure) else OccupancyMeasure(rho).rho
    mass = r.sum(axis=1)
    pos = mass > 0.0
    ratio = r[pos] / mass[pos, None]
    return 0.5 * float((r[pos] * (1.0 - ratio)).sum())


def causal_tsallis_entropy(mdp: TabularMdp, policy: PolicyTable) -> float:
    """Expected discounted Tsallis entropy of the action distributions.

    ``sum_s m_pi(s) * 1/2 * (1 - sum_a pi(a|s)^2)`` with the discounted
    state mass obtained by a direct linear solve.
    """
    mass = occupancy_from_policy(mdp, policy).state_mass
    per_state = 0.5 * (1.0 - (policy.probs**2).sum(axis=1))
    return float(mass @ per_state)


def _backup_values(q: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Sparse Bellman state values and policy from a Q table."""
    probs, tau, _ = sparsemax_batch(q / alpha)
    scaled = q / alpha
    inside = np.where(probs > 0.0, scaled**2 - tau[:, None] ** 2, 0.0)
    v = alpha * (0.5 * inside.sum(axis=1) + 0.5)
    return v, probs

def sparse_bellman_backup(
    mdp: TabularMdp, v: np.ndarray, alpha: float
) -> tuple[ValueTable, PolicyTable]:
    """One application of the Tsallis-regularized Bellman operator.

    Q(s, a) = r(s, a) + gamma * sum_s' V(s') T(s'|s, a); the greedy policy
    is sparsemax(Q(s, .)/alpha) and the new state value is

        V(s) = alpha * (1/2 * sum_{a in S(s)} ((Q/alpha)^2 - tau^2) + 1/2)

    where S(s) is the sparsemax support and tau its threshold.  For any
    alpha > 0 the operator is a gamma-contraction in the sup norm.
    """
    if alpha <= 0.0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be a positive real, got {alpha!r}")
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,) or not np.all(np.isfinite(v)):
        raise ValueError("v must be a finite vector of state values")
    q = mdp.reward + mdp.discount * np.einsum("sax,x->sa", mdp.transition, v)
    v_new, probs = _backup_values(q, alpha)
    return ValueTable(v_new, q), PolicyTable(probs)


def _iterate_to_fixed_point(mdp, alpha, tol, max_iter, backup):
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for _ in range(max_iter):
        v_next = backup(v)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= tol:
            return v
    raise ConvergenceError(
        f"value iteration did not reach tol={tol:g} in {max_iter} sweeps", residual
    )


def sparse_value_iteration(
    mdp: TabularMdp,
    alpha: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> tuple[ValueTable, PolicyTable]:
    """Iterate the sparse Bellman operator to its unique fixed point.

    Returns values and the sparsemax policy recomputed coherently at the
    converged V, so that ``q = r + gamma T v`` and ``pi = sparsemax(q/alpha)``
    hold for the returned tables up to the convergence tolerance.
    """
    if alpha <= 0.0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be a positive real, got {alpha!r}")

    def one_sweep(v):
        q = mdp.reward + mdp.discount * np.einsum("sax,x->sa", mdp.transition, v)
        return _backup_values(q, alpha)[0]

    v = _iterate_to_fixed_point(mdp, alpha, tol, max_iter, one_sweep)
    q = mdp.reward + mdp.discount * np.einsum("sax,x->sa", mdp.transition, v)
    _, probs = _backup_values(q, alpha)
    return ValueTable(v, q), PolicyTable(probs)


def _logsumexp_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1)
    return m + np.log(np.exp(z - m[:, None]).sum(axis=1))


def soft_value_iteration(
    mdp: TabularMdp,
    alpha: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> tuple[ValueTable, PolicyTable]:
    """Shannon-regularized baseline: V = alpha * logsumexp(Q/alpha).

    The policy is the softmax of Q/alpha, which has full support
    everywhere -- the reference point against which sparsemax planning
    is compared.
    """
    if alpha <= 0.0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be a positive real, got {alpha!r}")

    def one_sweep(v):
        q = mdp.reward + mdp.discount * np.einsum("sax,x->sa", mdp.transition, v)
        return alpha * _logsumexp_rows(q / alpha)

    v = _iterate_to_fixed_point(mdp, alpha, tol, max_iter, one_sweep)
    q = mdp.reward + mdp.discount * np.einsum("sax,x->sa", mdp.transition, v)
    scaled = q / alpha - (q / alpha).max(axis=1, keepdims=True)
    expd = np.exp(scaled)
    return ValueTable(v, q), PolicyTable(expd / expd.sum(axis=1, keepdims=True))


def policy_evaluation(
    mdp: TabularMdp, policy: PolicyTable, entropy_coeff: float = 0.0
) -> np.ndarray:
    """Exact value of a fixed policy under reward plus an entropy bonus.

    Solves ``v = r_pi + entropy_coeff * w_pi + gamma * P_pi v`` directly,
    where w_pi(s) is the per-state Tsallis entropy of pi(.|s).  This is an
    independent route to the sparse fixed point: evaluating the sparsemax
    policy with ``entropy_coeff=alpha`` must reproduce sparse value
    iteration's V.
    """
    r_pi = (policy.probs * mdp.reward).sum(axis=1)
    w_pi = 0.5 * (1.0 - (policy.probs**2).sum(axis=1))
    p_pi = _transition_under_policy(mdp, policy)
    lhs = np.eye(mdp.n_states) - mdp.discount * p_pi
    return np.linalg.solve(lhs, r_pi + entropy_coeff * w_pi)


def random_mdp(
    n_states: int,
    n_actions: int,
    rng: np.random.Generator,
    discount: float = 0.9,
    features: np.ndarray | None = None,
) -> TabularMdp:
    """A dense random MDP: Dirichlet(1) rows, U(-1, 1) rewards."""
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    initial = rng.dirichlet(np.ones(n_states))
    return TabularMdp(transition, reward, discount, initial, features)


def gridworld_mdp(
    side: int = 5,
    discount: float = 0.9,
    reward: np.ndarray | None = None,
    goal_reward: float = 1.0,
    step_reward: float = -0.04,
) -> TabularMdp:
    """A side x side gridworld with four deterministic move actions.

    Moves that would leave the grid stay in place.  The default reward is
    ``step_reward`` everywhere and ``goal_reward`` for any action taken in
    the far corner; pass an explicit (S, 4) table to override.  Features
    are one-hot per state-action pair, the natural rig for feature-matching
    recovery experiments.
    """
    n_states = side * side
    moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    transition = np.zeros((n_states, 4, n_states))
    for row in range(side):
        for col in range(side):
            s = row * side + col
            for a, (dr, dc) in enumerate(moves):
                nr, nc = row + dr, col + dc
                if not (0 <= nr < side and 0 <= nc < side):
                    nr, nc = row, col
                transition[s, a, nr * side + nc] = 1.0
    if reward is None:
        reward = np.full((n_states, 4), step_reward)
        reward[n_states - 1, :] = goal_reward
    initial = np.zeros(n_states)
    initial[0] = 1.0
    return TabularMdp(transition, reward, discount, initial)


def save_mdp(mdp: TabularMdp, path) -> None:
    """Write an MDP as self-describing JSON (full float round-trip)."""
    payload = {
        "kind": "tabular_mdp",
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.discount,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "initial": mdp.initial.tolist(),
        "features": mdp.features.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_mdp(path) -> TabularMdp:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("kind") != "tabular_mdp":
        raise ValueError(f"{path} does not contain a tabular MDP")
    return TabularMdp(
        np.asarray(payload["transition"], dtype=float),
        np.asarray(payload["reward"], dtype=float),
        float(payload["gamma"]),
        np.asarray(payload["initial"], dtype=float),
        np.asarray(payload["features"], dtype=float),
    )
