"""Tests for the four-goal planar world and its grid-solved expert.

The layout has exact 4-fold rotational symmetry, the snapped dynamics
(sup-norm unit directions, dt equal to the grid pitch) reproduce the
continuous motion from cell centers, and the solved expert is the oracle
for multi-modality and reachability claims.
"""

import numpy as np
import pytest

from mcteil.mdp import policy_evaluation
from mcteil.multigoal import (
    EnvState,
    GridPolicy,
    MultiGoalWorld,
    build_grid_mdp,
    compass_directions,
    generate_expert_demos,
    load_world,
    reachability,
    reset,
    save_world,
    solve_grid_expert,
    step,
)
from mcteil.trajectories import load_demos, rollout_batch, save_demos


def rotate90(points):
    """Quarter turn counterclockwise: (x, y) -> (-y, x)."""
    points = np.atleast_2d(points)
    return np.stack([-points[:, 1], points[:, 0]], axis=1)


class StraightToGoal:
    """Moves with full per-axis speed toward one fixed attractor."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def sample_batch(self, states, uniforms, normals=None):
        gap = self.target[None] - np.atleast_2d(states)
        return np.sign(gap)


class Motionless:
    def sample_batch(self, states, uniforms, normals=None):
        return np.zeros_like(np.atleast_2d(states))


class TestDynamics:
    def test_zero_action_stays_put(self):
        world = MultiGoalWorld()
        positions = np.array([[0.0, 0.0], [0.3, -0.2]])
        nxt, reward, done = world.step_batch(positions, np.zeros((2, 2)))
        assert np.array_equal(nxt, positions)
        # no movement means no potential change: only the proximity penalty
        assert np.allclose(reward, -world.repel_gain * world.repulsion(positions), atol=1e-15)
        assert not done.any()

    def test_step_toward_attractor_gains_potential(self):
        world = MultiGoalWorld()
        center = np.zeros((1, 2))
        nxt, _, _ = world.step_batch(center, np.array([[1.0, 1.0]]))
        assert world.potential(nxt)[0] > world.potential(center)[0]
        # outside the repulsor belt the full reward is positive too
        near = np.array([[0.55, 0.55]])
        _, reward, _ = world.step_batch(near, np.array([[1.0, 1.0]]))
        assert reward[0] > 0.0

    def test_action_clamped_per_axis(self):
        world = MultiGoalWorld()
        p = np.array([[0.1, 0.1]])
        wild, _, _ = world.step_batch(p, np.array([[25.0, -60.0]]))
        tame, _, _ = world.step_batch(p, np.array([[1.0, -1.0]]))
        assert np.array_equal(wild, tame)

    def test_position_clipped_to_arena(self):
        world = MultiGoalWorld()
        edge = np.array([[world.half_width, 0.0]])
        nxt, _, _ = world.step_batch(edge, np.array([[1.0, 0.0]]))
        assert nxt[0, 0] == world.half_width

    def test_capture_pays_bonus_once(self):
        world = MultiGoalWorld()
        # 3.5 steps west of the first attractor: one east step stays outside
        # the capture radius (2.5 dt = 0.24), the next enters it (1.5 dt = 0.14)
        approach = np.array([world.attractors[0] - [3.5 * world.dt, 0.0]])
        east = np.array([[1.0, 0.0]])
        mid, r1, d1 = world.step_batch(approach, east)
        assert not d1[0]
        inside, r2, d2 = world.step_batch(mid, east)
        assert d2[0] and world.goal_hits(inside)[0, 0]
        assert r2[0] > world.capture_bonus / 2.0  # entry step carries the bonus
        _, r3, d3 = world.step_batch(inside, east)
        assert d3[0] and r3[0] < world.capture_bonus / 2.0  # no second payout

    def test_single_step_interface_and_horizon(self):
        world = MultiGoalWorld(max_steps=3)
        state = reset(world, np.random.default_rng(0))
        assert np.abs(state.position).max() <= world.start_jitter
        done = False
        for expected_steps in (1, 2, 3):
            state, reward, done = step(world, state, np.zeros(2))
            assert state.steps == expected_steps
        assert done  # horizon exhausted even though no goal was reached

    def test_mirrored_actions_give_mirrored_rewards(self):
        world = MultiGoalWorld()
        rng = np.random.default_rng(3)
        positions = rng.uniform(-0.9, 0.9, size=(50, 2))
        actions = rng.uniform(-1, 1, size=(50, 2))
        flip = np.array([-1.0, 1.0])
        _, r_orig, _ = world.step_batch(positions, actions)
        _, r_flip, _ = world.step_batch(positions * flip, actions * flip)
        assert np.abs(r_orig - r_flip).max() <= 1e-9

    def test_quarter_turn_reward_invariance(self):
        world = MultiGoalWorld()
        rng = np.random.default_rng(4)
        positions = rng.uniform(-0.95, 0.95, size=(60, 2))
        actions = rng.uniform(-1, 1, size=(60, 2))
        _, r_orig, _ = world.step_batch(positions, actions)
        _, r_rot, _ = world.step_batch(rotate90(positions), rotate90(actions))
        assert np.abs(r_orig - r_rot).max() <= 1e-9

    def test_goal_hits_permute_under_rotation(self):
        world = MultiGoalWorld()
        rng = np.random.default_rng(5)
        positions = rng.uniform(-1, 1, size=(40, 2))
        hits = world.goal_hits(positions)
        rotated = world.goal_hits(rotate90(positions))
        # the quarter turn sends each corner to the next one in the stored order
        perm = np.array(
            [np.flatnonzero((rotate90(world.attractors[i : i + 1])[0] == world.attractors)
                            .all(axis=1))[0] for i in range(4)]
        )
        assert np.array_equal(rotated[:, perm], hits)

    def test_world_validation(self):
        with pytest.raises(ValueError, match="inside"):
            MultiGoalWorld(attractors=np.array([[2.0, 0.0]]))
        with pytest.raises(ValueError, match="distinct"):
            MultiGoalWorld(attractors=np.array([[0.5, 0.5], [0.5, 0.5]]))
        with pytest.raises(ValueError, match="dt"):
            MultiGoalWorld(dt=0.0)
        with pytest.raises(ValueError, match="capture_bonus"):
            MultiGoalWorld(capture_bonus=-1.0)
        with pytest.raises(ValueError, match="finite"):
            EnvState(np.array([np.nan, 0.0]))


class TestCompassDirections:
    def test_unit_sup_norm_and_orientation(self):
        dirs = compass_directions(8)
        assert dirs.shape == (8, 2)
        assert np.allclose(np.abs(dirs).max(axis=1), 1.0, atol=1e-15)
        assert np.array_equal(dirs[0], [1.0, 0.0])  # east first
        assert np.array_equal(dirs[2], [0.0, 1.0])  # then counterclockwise
        angles = np.arctan2(dirs[:, 1], dirs[:, 0])
        assert np.allclose(np.diff(np.unwrap(angles)), np.pi / 4, atol=1e-12)

    def test_too_few_rejected(self):
        with pytest.raises(ValueError, match="two"):
            compass_directions(1)


class TestGridExpert:
    def test_center_policy_is_multi_modal(self):
        world = MultiGoalWorld()
        expert, _, _ = solve_grid_expert(world)
        center = expert.table.probs[expert.grid.start_cell]
        support = np.flatnonzero(center > 0.0)
        assert len(support) >= 2
        # with the symmetric default layout the four diagonal moves tie
        assert set(support.tolist()) == {1, 3, 5, 7}
        assert np.allclose(center[support], 0.25, atol=1e-9)

    def test_goal_cells_absorb_with_zero_reward(self):
        world = MultiGoalWorld()
        mdp, spec = build_grid_mdp(world, grid_n=15)
        goals = np.flatnonzero(spec.goal_cells)
        assert len(goals) > 0
        for s in goals:
            assert np.all(mdp.transition[s, :, s] == 1.0)
            assert np.all(mdp.reward[s] == 0.0)

    def test_start_cell_is_arena_center(self):
        world = MultiGoalWorld()
        _, spec = build_grid_mdp(world, grid_n=21)
        assert np.abs(spec.centers[spec.start_cell]).max() <= 1e-12

    def test_entering_goal_cell_rewards_bonus(self):
        world = MultiGoalWorld()
        mdp, spec = build_grid_mdp(world)
        goals = np.flatnonzero(spec.goal_cells)
        entry = ~spec.goal_cells[:, None] & np.isin(
            mdp.transition.argmax(axis=2), goals
        )
        assert entry.any()
        assert mdp.reward[entry].min() > world.capture_bonus / 2.0

    def test_snapped_moves_match_continuous_from_centers(self):
        # dt equals the grid pitch and directions have unit sup-norm, so an
        # unclipped step from a non-goal center lands exactly on the next
        # center; at the wall the continuous motion saturates while centers
        # stay inset, which is the one place the two may differ
        world = MultiGoalWorld()
        mdp, spec = build_grid_mdp(world)
        free = np.flatnonzero(~spec.goal_cells)
        dirs = spec.directions
        checked = 0
        for a in range(len(dirs)):
            landing = spec.centers[free] + world.dt * dirs[a]
            interior = np.abs(landing).max(axis=1) <= world.half_width
            cells = free[interior]
            nxt, _, _ = world.step_batch(
                spec.centers[cells], np.tile(dirs[a], (len(cells), 1))
            )
            snapped = spec.centers[mdp.transition[cells, a].argmax(axis=1)]
            assert np.abs(nxt - snapped).max() <= 1e-9
            checked += len(cells)
        assert checked > 2000

    def test_grid_size_validated(self):
        world = MultiGoalWorld()
        with pytest.raises(ValueError, match="grid_n"):
            build_grid_mdp(world, grid_n=2)
        with pytest.raises(ValueError, match="grid_n"):
            generate_expert_demos(world, 5, np.random.default_rng(0), grid_n=5)
        with pytest.raises(ValueError, match="demonstration"):
            generate_expert_demos(world, 0, np.random.default_rng(0))


class TestExpertDemos:
    def test_all_episodes_reach_an_attractor(self):
        world = MultiGoalWorld()
        demos = generate_expert_demos(world, 300, np.random.default_rng(11))
        assert len(demos) == 300
        finals = demos.final_states()
        assert world.goal_hits(finals).any(axis=1).all()
        assert max(len(ep) for ep in demos.episodes) <= world.max_steps

    def test_demos_cover_all_four_corners(self):
        world = MultiGoalWorld()
        demos = generate_expert_demos(world, 300, np.random.default_rng(11))
        hits = world.goal_hits(demos.final_states())
        assert hits.any(axis=0).sum() == 4

    def test_demo_actions_are_grid_directions(self):
        world = MultiGoalWorld()
        demos = generate_expert_demos(world, 40, np.random.default_rng(2))
        actions = demos.flat_actions()
        assert np.allclose(np.abs(actions).max(axis=1), 1.0, atol=1e-15)
        dirs = compass_directions(8)
        match = (actions[:, None, :] == dirs[None]).all(axis=2)
        assert match.any(axis=1).all()

    def test_same_seed_same_demos(self):
        world = MultiGoalWorld()
        a = generate_expert_demos(world, 25, np.random.default_rng(9))
        b = generate_expert_demos(world, 25, np.random.default_rng(9))
        assert len(a) == len(b)
        for ep_a, ep_b in zip(a.episodes, b.episodes):
            assert np.array_equal(ep_a.states, ep_b.states)
            assert np.array_equal(ep_a.actions, ep_b.actions)
            assert np.array_equal(ep_a.rewards, ep_b.rewards)

    def test_demo_file_round_trip(self, tmp_path):
        world = MultiGoalWorld()
        demos = generate_expert_demos(world, 12, np.random.default_rng(4))
        path = tmp_path / "demos.csv"
        save_demos(demos, path)
        back = load_demos(path)
        assert len(back) == len(demos)
        for ep_a, ep_b in zip(demos.episodes, back.episodes):
            assert np.array_equal(ep_a.states, ep_b.states)
            assert np.array_equal(ep_a.actions, ep_b.actions)


class TestReachability:
    def test_expert_reaches_all_four_goals(self):
        world = MultiGoalWorld()
        expert, _, _ = solve_grid_expert(world)
        assert reachability(expert, world, 500, np.random.default_rng(0)) == 4

    def test_single_minded_policy_reaches_one(self):
        world = MultiGoalWorld()
        policy = StraightToGoal(world.attractors[0])
        assert reachability(policy, world, 50, np.random.default_rng(1)) == 1

    def test_motionless_policy_reaches_none(self):
        world = MultiGoalWorld()
        assert reachability(Motionless(), world, 20, np.random.default_rng(2)) == 0


class TestFidelity:
    def test_continuous_return_tracks_tabular_value(self):
        # reward-only evaluation of the solved policy (the value iteration
        # objective also accrues the entropy bonus, which rollouts do not)
        world = MultiGoalWorld()
        expert, _, mdp = solve_grid_expert(world)
        value = policy_evaluation(mdp, expert.table)[expert.grid.start_cell]
        batch = rollout_batch(world, expert, 300, np.random.default_rng(7))
        returns = batch.episode_returns(mdp.discount)
        assert abs(returns.mean() - value) <= 0.1 * abs(value)

    def test_snapped_demo_returns_match_tabular_value(self):
        world = MultiGoalWorld()
        expert, _, mdp = solve_grid_expert(world)
        value = policy_evaluation(mdp, expert.table)[expert.grid.start_cell]
        demos = generate_expert_demos(world, 200, np.random.default_rng(13))
        assert abs(demos.episode_returns(mdp.discount).mean() - value) <= 0.02 * abs(value)


class TestWorldSerialization:
    def test_round_trip(self, tmp_path):
        world = MultiGoalWorld(dt=0.1, max_steps=40, repel_gain=0.25, start_jitter=0.01)
        path = tmp_path / "world.json"
        save_world(world, path)
        back = load_world(path)
        assert back.half_width == world.half_width
        assert np.array_equal(back.attractors, world.attractors)
        assert np.array_equal(back.repulsors, world.repulsors)
        for name in ("dt", "max_steps", "attract_gain", "repel_gain", "capture_bonus",
                     "kernel_width", "goal_radius", "action_max", "start_jitter"):
            assert getattr(back, name) == getattr(world, name)

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "not_a_world"}')
        with pytest.raises(ValueError, match="world"):
            load_world(path)


class TestGridPolicyInterface:
    def test_sampling_follows_cell_distribution(self):
        world = MultiGoalWorld()
        expert, _, _ = solve_grid_expert(world)
        start = expert.grid.start_cell
        probs = expert.table.probs[start]
        n = 40000
        rng = np.random.default_rng(6)
        actions = expert.sample_batch(np.zeros((n, 2)), rng.random(n))
        dirs = expert.grid.directions
        idx = (actions[:, None, :] == dirs[None]).all(axis=2).argmax(axis=1)
        freq = np.bincount(idx, minlength=len(dirs)) / n
        se = np.sqrt(probs * (1 - probs) / n)
        assert np.all(np.abs(freq - probs) <= 3 * se + 1e-12)

    def test_act_returns_single_direction(self):
        world = MultiGoalWorld()
        expert, _, _ = solve_grid_expert(world)
        action = expert.act(np.zeros(2), np.random.default_rng(3))
        assert action.shape == (2,)
        assert np.abs(action).max() == 1.0
