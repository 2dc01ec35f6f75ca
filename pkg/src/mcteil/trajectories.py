"""Episode containers, demonstration files, and batched rollouts.

Environments used here follow a small protocol: ``state_dim``,
``action_dim`` and ``max_steps`` attributes, ``reset_state(rng)``
returning a start vector, and ``step_batch(states, actions)`` returning
``(next_states, rewards, dones)`` for a batch of concurrent episodes.

Rollout randomness is pre-assigned per episode: each episode owns an
independent generator seeded upfront, so a trajectory depends only on the
policy, the environment, and its own stream -- never on how episodes are
interleaved or scheduled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Episode", "TrajectoryBatch", "rollout_batch", "save_demos", "load_demos"]


@dataclass(frozen=True)
class Episode:
    """One trajectory: per-step states and actions, optional rewards.

    ``states[t]`` is the state in which ``actions[t]`` was taken;
    ``final_state`` is where the episode ended (useful for goal checks,
    not part of the on-disk demonstration format).  Tabular problems may
    use 1-D integer arrays instead of state/action vectors.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray | None = None
    final_state: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.states)
        a = np.asarray(self.actions)
        if len(s) != len(a) or len(s) == 0:
            raise ValueError("states and actions must be nonempty and aligned")
        if self.rewards is not None and len(self.rewards) != len(s):
            raise ValueError("rewards must align with steps")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class TrajectoryBatch:
    """An ordered collection of episodes with flattening helpers."""

    episodes: list[Episode] = field(default_factory=list)

    def __post_init__(self):
        if not self.episodes:
            raise ValueError("a trajectory batch must hold at least one episode")

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def total_steps(self) -> int:
        return sum(len(ep) for ep in self.episodes)

    def flat_states(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(ep.states) for ep in self.episodes])

    def flat_actions(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(ep.actions) for ep in self.episodes])

    def flat_rewards(self) -> np.ndarray:
        if any(ep.rewards is None for ep in self.episodes):
            raise ValueError("batch has episodes without recorded rewards")
        return np.concatenate([ep.rewards for ep in self.episodes])

    def step_times(self) -> np.ndarray:
        """Within-episode time index t for every flattened step."""
        return np.concatenate([np.arange(len(ep)) for ep in self.episodes])

    def episode_index(self) -> np.ndarray:
        """Episode id for every flattened step."""
        return np.concatenate(
            [np.full(len(ep), i, dtype=int) for i, ep in enumerate(self.episodes)]
        )

    def step_discounts(self, gamma: float) -> np.ndarray:
        """gamma**t for every flattened step."""
        return np.concatenate([gamma ** np.arange(len(ep), dtype=float) for ep in self.episodes])

    def episode_returns(self, gamma: float = 1.0) -> np.ndarray:
        """Discounted sum of recorded rewards per episode."""
        out = np.empty(len(self.episodes))
        for i, ep in enumerate(self.episodes):
            if ep.rewards is None:
                raise ValueError("batch has episodes without recorded rewards")
            out[i] = float(ep.rewards @ gamma ** np.arange(len(ep), dtype=float))
        return out

    def final_states(self) -> np.ndarray:
        rows = []
        for ep in self.episodes:
            if ep.final_state is None:
                raise ValueError("batch has episodes without a recorded final state")
            rows.append(ep.final_state)
        return np.stack(rows)


def rollout_batch(env, policy, n_episodes: int, rng: np.random.Generator,
                  max_steps: int | None = None) -> TrajectoryBatch:
    """Collect episodes in lockstep with per-episode random streams.

    Each episode draws a private seed from ``rng`` first, then consumes
    only its own generator: the start state, one uniform per step for
    discrete choices inside the policy, and one normal vector per step
    for continuous noise.  Stepping happens vectorized across all still
    active episodes.
    """
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    horizon = int(max_steps if max_steps is not None else env.max_steps)
    ds, da = env.state_dim, env.action_dim

    seeds = rng.integers(np.iinfo(np.int64).max, size=n_episodes)
    uniforms = np.empty((n_episodes, horizon))
    normals = np.empty((n_episodes, horizon, da))
    states = np.empty((n_episodes, ds))
    for e in range(n_episodes):
        child = np.random.default_rng(seeds[e])
        states[e] = env.reset_state(child)
        uniforms[e] = child.random(horizon)
        normals[e] = child.standard_normal((horizon, da))

    state_log = np.zeros((n_episodes, horizon, ds))
    action_log = np.zeros((n_episodes, horizon, da))
    reward_log = np.zeros((n_episodes, horizon))
    lengths = np.zeros(n_episodes, dtype=int)
    finals = states.copy()
    active = np.ones(n_episodes, dtype=bool)

    for t in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        acts = policy.sample_batch(states[idx], uniforms[idx, t], normals[idx, t])
        nxt, rew, done = env.step_batch(states[idx], acts)
        state_log[idx, t] = states[idx]
        action_log[idx, t] = acts
        reward_log[idx, t] = rew
        lengths[idx] = t + 1
        states[idx] = nxt
        finals[idx] = nxt
        active[idx] = ~np.asarray(done, dtype=bool)

    episodes = [
        Episode(
            states=state_log[e, : lengths[e]].copy(),
            actions=action_log[e, : lengths[e]].copy(),
            rewards=reward_log[e, : lengths[e]].copy(),
            final_state=finals[e].copy(),
        )
        for e in range(n_episodes)
    ]
    return TrajectoryBatch(episodes)


def save_demos(batch: TrajectoryBatch, path) -> None:
    """Write demonstrations as a text table, one row per step.

    Columns: episode_id, t, state components s0..s{d-1}, action components
    a0..a{d-1}.  Floats are written with ``repr`` so a read back restores
    them bit-for-bit.
    """
    first = batch.episodes[0]
    if np.asarray(first.states).ndim != 2 or np.asarray(first.actions).ndim != 2:
        raise ValueError("demonstration files hold vector-valued states and actions")
    s = first.states
    a = first.actions
    header = (
        ["episode_id", "t"]
        + [f"s{i}" for i in range(s.shape[1])]
        + [f"a{i}" for i in range(a.shape[1])]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for eid, ep in enumerate(batch.episodes):
            for t in range(len(ep)):
                row = [eid, t]
                row += [repr(float(x)) for x in ep.states[t]]
                row += [repr(float(x)) for x in ep.actions[t]]
                writer.writerow(row)


def load_demos(path) -> TrajectoryBatch:
    """Read a demonstration table written by :func:`save_demos`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_s = sum(1 for name in header if name.startswith("s"))
        n_a = sum(1 for name in header if name.startswith("a"))
        if header[:2] != ["episode_id", "t"] or n_s == 0 or n_a == 0:
            raise ValueError(f"{path} is not a demonstration table")
        rows = list(reader)
    episodes: list[Episode] = []
    current: int | None = None
    s_rows: list[list[float]] = []
    a_rows: list[list[float]] = []

    def flush():
        if current is not None:
            episodes.append(Episode(np.asarray(s_rows), np.asarray(a_rows)))

    for row in rows:
        eid = int(row[0])
        if eid != current:
            flush()
            current, s_rows, a_rows = eid, [], []
        s_rows.append([float(x) for x in row[2 : 2 + n_s]])
        a_rows.append([float(x) for x in row[2 + n_s : 2 + n_s + n_a]])
    flush()
    return TrajectoryBatch(episodes)
