"""A planar point-mass world with four goals, built for mode-coverage studies.

The arena is the square [-L, L]^2 with four attracting goals on the
diagonal corners and four repulsive bumps on the edge midpoints, all
modeled as Gaussian kernels of a common width.  The per-step reward is
potential-based: the gain in summed attractor kernels between the old and
new position, minus a proximity penalty under the repulsor kernels at the
new position, plus a one-time bonus on the step that first enters a
goal's capture radius.  The layout has exact 4-fold rotational symmetry,
so an optimal agent has four equally good things to do from the center --
which is the point: a learner that covers all four modes is
distinguishable from one that collapses onto a single goal.

Experts are produced by snapping the world to a grid, solving the induced
finite MDP with sparse value iteration, and rolling the grid policy out
in the snapped dynamics while emitting continuous states (cell centers)
and actions (unit direction vectors).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mdp import PolicyTable, TabularMdp, ValueTable, sparse_value_iteration
from .trajectories import Episode, TrajectoryBatch, rollout_batch

__all__ = [
    "MultiGoalWorld",
    "EnvState",
    "GridSpec",
    "GridPolicy",
    "reset",
    "step",
    "compass_directions",
    "build_grid_mdp",
    "solve_grid_expert",
    "generate_expert_demos",
    "reachability",
    "save_world",
    "load_world",
]

_CORNERS = np.array([[0.8, 0.8], [-0.8, 0.8], [-0.8, -0.8], [0.8, -0.8]])
_EDGES = np.array([[0.8, 0.0], [0.0, 0.8], [-0.8, 0.0], [0.0, -0.8]])


def _default_attractors() -> np.ndarray:
    return _CORNERS.copy()


def _default_repulsors() -> np.ndarray:
    return _EDGES.copy()


@dataclass(frozen=True)
class MultiGoalWorld:
    """World constants.  The defaults reproduce the standard four-goal layout."""

    half_width: float = 1.0
    attractors: np.ndarray = field(default_factory=_default_attractors)
    repulsors: np.ndarray = field(default_factory=_default_repulsors)
    dt: float = 2.0 / 21.0
    max_steps: int = 60
    attract_gain: float = 1.0
    repel_gain: float = 0.5
    capture_bonus: float = 1.0
    kernel_width: float = 0.3
    goal_radius: float = 0.15
    action_max: float = 1.0
    start_jitter: float = 0.04

    def __post_init__(self):
        att = np.asarray(self.attractors, dtype=float)
        rep = np.asarray(self.repulsors, dtype=float)
        if att.ndim != 2 or att.shape[1] != 2 or len(att) == 0:
            raise ValueError("attractors must be a nonempty (G, 2) array")
        if rep.ndim != 2 or rep.shape[1] != 2:
            raise ValueError("repulsors must be an (R, 2) array")
        if np.any(np.abs(att) > self.half_width) or np.any(np.abs(rep) > self.half_width):
            raise ValueError("all landmarks must lie inside the arena")
        if len(np.unique(att, axis=0)) != len(att):
            raise ValueError("attractors must be distinct")
        for name in ("dt", "kernel_width", "goal_radius", "action_max", "half_width"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1 or self.start_jitter < 0.0 or self.capture_bonus < 0.0:
            raise ValueError("need max_steps >= 1, start_jitter >= 0, capture_bonus >= 0")
        object.__setattr__(self, "attractors", att)
        object.__setattr__(self, "repulsors", rep)

    # -- rollout protocol ------------------------------------------------
    state_dim = 2
    action_dim = 2

    def potential(self, positions: np.ndarray) -> np.ndarray:
        """Summed attractor kernels at each position."""
        p = np.atleast_2d(positions)
        d2 = ((p[:, None, :] - self.attractors[None]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * self.kernel_width**2)).sum(axis=1)

    def repulsion(self, positions: np.ndarray) -> np.ndarray:
        """Summed repulsor kernels at each position."""
        p = np.atleast_2d(positions)
        if len(self.repulsors) == 0:
            return np.zeros(len(p))
        d2 = ((p[:, None, :] - self.repulsors[None]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * self.kernel_width**2)).sum(axis=1)

    def reset_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-self.start_jitter, self.start_jitter, size=2)

    def step_batch(
        self, positions: np.ndarray, actions: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized dynamics: clamp the action, move by dt, clip to the
        arena, and score the move.  ``done`` marks goal capture only; the
        horizon is the caller's business."""
        p = np.atleast_2d(np.asarray(positions, dtype=float))
        a = np.clip(np.atleast_2d(np.asarray(actions, dtype=float)),
                    -self.action_max, self.action_max)
        nxt = np.clip(p + self.dt * a, -self.half_width, self.half_width)
        reward = self.attract_gain * (self.potential(nxt) - self.potential(p))
        reward = reward - self.repel_gain * self.repulsion(nxt)
        captured = self.goal_hits(nxt).any(axis=1)
        entered = captured & ~self.goal_hits(p).any(axis=1)
        reward = reward + self.capture_bonus * entered
        return nxt, reward, captured

    def goal_hits(self, positions: np.ndarray) -> np.ndarray:
        """Boolean (B, G) table: which attractors each position has captured."""
        p = np.atleast_2d(positions)
        d2 = ((p[:, None, :] - self.attractors[None]) ** 2).sum(axis=2)
        return d2 <= self.goal_radius**2


@dataclass(frozen=True)
class EnvState:
    """Continuous environment state: a position inside the arena plus the
    number of steps taken so far."""

    position: np.ndarray
    steps: int = 0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if p.shape != (2,) or not np.all(np.isfinite(p)):
            raise ValueError("position must be a finite 2-vector")
        object.__setattr__(self, "position", p)


def reset(world: MultiGoalWorld, rng: np.random.Generator) -> EnvState:
    """Start an episode near the center with uniform jitter."""
    return EnvState(world.reset_state(rng), 0)


def step(
    world: MultiGoalWorld, state: EnvState, action: np.ndarray
) -> tuple[EnvState, float, bool]:
    """Single-episode step; done on goal capture or horizon exhaustion."""
    nxt, reward, captured = world.step_batch(state.position[None], np.asarray(action)[None])
    new_state = EnvState(nxt[0], state.steps + 1)
    done = bool(captured[0]) or new_state.steps >= world.max_steps
    return new_state, float(reward[0]), done


def compass_directions(n: int = 8) -> np.ndarray:
    """n direction vectors at equal angles, starting east and turning
    counterclockwise, scaled to unit sup-norm.

    The environment clamps actions per axis, so its natural unit ball is
    the sup-norm one; with ``dt`` equal to the grid pitch, every direction
    then advances exactly one cell along each active axis and the snapped
    dynamics reproduce the continuous motion from cell centers.
    """
    if n < 2:
        raise ValueError("need at least two directions")
    angles = 2.0 * np.pi * np.arange(n) / n
    raw = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    raw[np.abs(raw) < 1e-12] = 0.0
    return raw / np.abs(raw).max(axis=1, keepdims=True)


@dataclass(frozen=True)
class GridSpec:
    """Discretization of a world: cell centers, the action direction set,
    and bookkeeping for snapping continuous positions to cells."""

    world: MultiGoalWorld
    n: int
    centers: np.ndarray
    directions: np.ndarray
    goal_cells: np.ndarray
    start_cell: int

    def cell_of(self, positions: np.ndarray) -> np.ndarray:
        """Index of the nearest cell center for each position."""
        p = np.atleast_2d(positions)
        width = 2.0 * self.world.half_width / self.n
        cols = np.clip(((p[:, 0] + self.world.half_width) / width).astype(int), 0, self.n - 1)
        rows = np.clip(((p[:, 1] + self.world.half_width) / width).astype(int), 0, self.n - 1)
        return rows * self.n + cols


def build_grid_mdp(
    world: MultiGoalWorld,
    grid_n: int = 21,
    n_directions: int = 8,
    gamma: float = 0.95,
) -> tuple[TabularMdp, GridSpec]:
    """Snap the world to a grid_n x grid_n lattice of cell centers.

    Actions are unit compass directions; a move lands on the cell nearest
    to ``clip(center + dt * direction)``, and its reward is the world's
    continuous reward for that center-to-center displacement.  Cells whose
    center lies within the goal radius of an attractor are absorbing with
    zero reward, so episodes effectively end there.  The start
    distribution is the center cell.
    """
    if grid_n < 3:
        raise ValueError("grid_n must be at least 3")
    width = 2.0 * world.half_width / grid_n
    coords = -world.half_width + width * (np.arange(grid_n) + 0.5)
    xx, yy = np.meshgrid(coords, coords)
    centers = np.stack([xx.ravel(), yy.ravel()], axis=1)
    n_states = grid_n * grid_n
    directions = compass_directions(n_directions)
    goal_cells = (
        ((centers[:, None, :] - world.attractors[None]) ** 2).sum(axis=2)
        <= world.goal_radius**2
    ).any(axis=1)

    spec = GridSpec(
        world=world,
        n=grid_n,
        centers=centers,
        directions=directions,
        goal_cells=goal_cells,
        start_cell=int(np.argmin((centers**2).sum(axis=1))),
    )

    transition = np.zeros((n_states, n_directions, n_states))
    reward = np.zeros((n_states, n_directions))
    for a, direction in enumerate(directions):
        landing = np.clip(
            centers + world.dt * direction, -world.half_width, world.half_width
        )
        nxt = spec.cell_of(landing)
        moved = centers[nxt]
        r = world.attract_gain * (world.potential(moved) - world.potential(centers))
        r = r - world.repel_gain * world.repulsion(moved)
        r = r + world.capture_bonus * goal_cells[nxt]
        for s in range(n_states):
            if goal_cells[s]:
                transition[s, a, s] = 1.0
            else:
                transition[s, a, nxt[s]] = 1.0
                reward[s, a] = r[s]

    initial = np.zeros(n_states)
    initial[spec.start_cell] = 1.0
    mdp = TabularMdp(transition, reward, gamma, initial)
    return mdp, spec


@dataclass(frozen=True)
class GridPolicy:
    """A tabular policy on a grid, usable as a continuous-world policy: it
    snaps the position to a cell and emits that cell's sampled direction."""

    grid: GridSpec
    table: PolicyTable

    def sample_batch(self, states, uniforms, normals=None) -> np.ndarray:
        cells = self.grid.cell_of(states)
        probs = self.table.probs[cells]
        cum = np.cumsum(probs, axis=1)
        choice = (cum < np.asarray(uniforms)[:, None]).sum(axis=1)
        choice = np.minimum(choice, probs.shape[1] - 1)
        return self.grid.directions[choice]

    def act(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(np.asarray(state)[None], rng.random(1))[0]


def solve_grid_expert(
    world: MultiGoalWorld,
    grid_n: int = 21,
    n_directions: int = 8,
    alpha: float = 0.05,
    gamma: float = 0.95,
) -> tuple[GridPolicy, ValueTable, TabularMdp]:
    """Sparse-value-iteration expert on the snapped world."""
    mdp, spec = build_grid_mdp(world, grid_n, n_directions, gamma)
    values, table = sparse_value_iteration(mdp, alpha)
    return GridPolicy(spec, table), values, mdp


def generate_expert_demos(
    world: MultiGoalWorld,
    n_demos: int = 300,
    rng: np.random.Generator | None = None,
    grid_n: int = 21,
    n_directions: int = 8,
    alpha: float = 0.05,
    gamma: float = 0.95,
) -> TrajectoryBatch:
    """Roll the grid expert out in the snapped dynamics.

    Emitted states are cell centers and actions are unit direction
    vectors, so demonstrations live in the continuous interface while the
    underlying motion is exactly the solved MDP.  Every episode runs until
    it enters a goal cell or the horizon runs out.
    """
    if n_demos < 1:
        raise ValueError("need at least one demonstration")
    if grid_n < 8:
        raise ValueError("expert discretization needs grid_n >= 8")
    rng = rng if rng is not None else np.random.default_rng()
    expert, _, mdp = solve_grid_expert(world, grid_n, n_directions, alpha, gamma)
    spec = expert.grid
    table = expert.table.probs
    cum = np.cumsum(table, axis=1)
    next_cell = mdp.transition.argmax(axis=2)  # deterministic rows

    seeds = rng.integers(np.iinfo(np.int64).max, size=n_demos)
    episodes = []
    for e in range(n_demos):
        child = np.random.default_rng(seeds[e])
        draws = child.random(world.max_steps)
        s = spec.start_cell
        s_rows, a_rows, r_rows = [], [], []
        for t in range(world.max_steps):
            a = int(np.minimum((cum[s] < draws[t]).sum(), table.shape[1] - 1))
            s_rows.append(spec.centers[s])
            a_rows.append(spec.directions[a])
            r_rows.append(mdp.reward[s, a])
            s = int(next_cell[s, a])
            if spec.goal_cells[s]:
                break
        episodes.append(
            Episode(
                np.asarray(s_rows),
                np.asarray(a_rows),
                np.asarray(r_rows),
                final_state=spec.centers[s].copy(),
            )
        )
    return TrajectoryBatch(episodes)


def reachability(policy, world: MultiGoalWorld, n_episodes: int,
                 rng: np.random.Generator) -> int:
    """Distinct attractors captured at least once over fresh rollouts."""
    batch = rollout_batch(world, policy, n_episodes, rng)
    hits = world.goal_hits(batch.final_states())
    return int(hits.any(axis=0).sum())


def save_world(world: MultiGoalWorld, path) -> None:
    payload = {
        "kind": "multigoal_world",
        "half_width": world.half_width,
        "attractors": world.attractors.tolist(),
        "repulsors": world.repulsors.tolist(),
        "dt": world.dt,
        "max_steps": world.max_steps,
        "attract_gain": world.attract_gain,
        "repel_gain": world.repel_gain,
        "capture_bonus": world.capture_bonus,
        "kernel_width": world.kernel_width,
        "goal_radius": world.goal_radius,
        "action_max": world.action_max,
        "start_jitter": world.start_jitter,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_world(path) -> MultiGoalWorld:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("kind") != "multigoal_world":
        raise ValueError(f"{path} does not contain a world layout")
    return MultiGoalWorld(
        half_width=payload["half_width"],
        attractors=np.asarray(payload["attractors"], dtype=float),
        repulsors=np.asarray(payload["repulsors"], dtype=float),
        dt=payload["dt"],
        max_steps=int(payload["max_steps"]),
        attract_gain=payload["attract_gain"],
        repel_gain=payload["repel_gain"],
        capture_bonus=payload["capture_bonus"],
        kernel_width=payload["kernel_width"],
        goal_radius=payload["goal_radius"],
        action_max=payload["action_max"],
        start_jitter=payload["start_jitter"],
    )
