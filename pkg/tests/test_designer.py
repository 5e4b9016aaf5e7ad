import numpy as np
import pytest

from uedlab.designer import (
    DEFAULT_BLOCK_BUDGET,
    LATENT_DIM,
    adversary_episode,
    design_reset,
    design_step,
    random_design,
)
from uedlab.gridworld import GOAL, WALL, grid_metrics

# chi-squared critical values at the 1% level
CHI2_99_DF48 = 73.68
CHI2_99_DF168 = 214.6


class ScriptedActor:
    """Plays a fixed action sequence (cycled); log_prob/value are zero."""

    def __init__(self, actions):
        self.actions = list(actions)
        self.i = 0

    def reset(self):
        self.i = 0

    def act(self, observation):
        action = self.actions[self.i % len(self.actions)]
        self.i += 1
        return action, 0.0, 0.0


class TestDesignReset:
    def test_latent_dimension(self):
        assert design_reset(0).z.shape == (LATENT_DIM,)

    def test_same_seed_same_latent(self):
        assert np.array_equal(design_reset(42).z, design_reset(42).z)

    def test_fresh_state_empty(self):
        state = design_reset(0)
        assert state.t == 0
        assert state.agent_pos is None
        assert int(np.sum(state.cells[1:-1, 1:-1] == WALL)) == 0
        assert int(np.sum(state.cells == GOAL)) == 0

    def test_default_step_count(self):
        assert design_reset(0).total_steps == 2 + DEFAULT_BLOCK_BUDGET


class TestDesignStep:
    def test_goal_on_agent_relocates(self):
        for seed in range(20):
            state = design_reset(seed, width=5, height=5, block_budget=1)
            design_step(state, 4)  # agent at the center tile
            design_step(state, 4)  # goal aimed at the same tile
            goal = tuple(np.argwhere(state.cells == GOAL)[0])
            assert goal != state.agent_pos

    def test_wall_on_agent_is_noop(self):
        state = design_reset(0, width=5, height=5, block_budget=3)
        design_step(state, 0)
        design_step(state, 8)
        before = state.cells.copy()
        design_step(state, 0)  # wall aimed at the agent's tile
        assert np.array_equal(state.cells, before)

    def test_wall_on_wall_is_noop(self):
        state = design_reset(0, width=5, height=5, block_budget=3)
        design_step(state, 0)
        design_step(state, 8)
        design_step(state, 4)
        before = state.cells.copy()
        design_step(state, 4)
        assert np.array_equal(state.cells, before)

    def test_step_after_done_raises(self):
        state = design_reset(0, width=5, height=5, block_budget=0)
        design_step(state, 0)
        design_step(state, 1)
        assert state.done
        with pytest.raises(RuntimeError):
            design_step(state, 2)

    def test_full_episode_budget(self):
        state = design_reset(0)
        rng = np.random.default_rng(1)
        while not state.done:
            design_step(state, int(rng.integers(state.n_tiles)))
        assert state.t == 52
        grid = state.to_grid()
        assert grid_metrics(grid).num_blocks <= DEFAULT_BLOCK_BUDGET

    def test_fuzz_validity(self):
        rng = np.random.default_rng(2)
        for trial in range(300):
            state = design_reset(rng.integers(2 ** 63), width=7, height=7,
                                 block_budget=int(rng.integers(0, 26)))
            while not state.done:
                design_step(state, int(rng.integers(state.n_tiles)))
            grid = state.to_grid()  # validate() runs inside
            assert grid_metrics(grid).num_blocks <= state.block_budget

    def test_collision_reduces_block_count(self):
        state = design_reset(0, width=7, height=7, block_budget=5)
        design_step(state, 0)
        design_step(state, 24)
        for _ in range(5):
            design_step(state, 12)  # same tile every time
        grid = state.to_grid()
        assert grid_metrics(grid).num_blocks == 1


class TestRandomDesign:
    def test_zero_blocks(self):
        grid = random_design(np.random.default_rng(0), block_count_range=(0, 0))
        assert grid_metrics(grid).num_blocks == 0

    def test_exact_block_count(self):
        for seed in range(10):
            grid = random_design(np.random.default_rng(seed),
                                 block_count_range=(50, 50))
            assert grid_metrics(grid).num_blocks == 50

    def test_range_exceeding_tiles_raises(self):
        with pytest.raises(ValueError):
            random_design(np.random.default_rng(0),
                          block_count_range=(0, 200), width=9, height=9)

    def test_agent_position_uniformity(self):
        # 9x9 grid has 49 interior tiles; chi-squared against uniform
        rng = np.random.default_rng(3)
        counts = np.zeros(49)
        n = 10_000
        for _ in range(n):
            grid = random_design(rng, block_count_range=(0, 0), width=9,
                                 height=9)
            r, c = grid.agent_start
            counts[(r - 1) * 7 + (c - 1)] += 1
        expected = n / 49
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < CHI2_99_DF48


class TestAdversaryEpisode:
    def test_trajectory_shape(self):
        grid, traj = adversary_episode(ScriptedActor([0, 5, 9]), rng_seed=0,
                                       width=7, height=7, block_budget=8)
        assert traj.length == 2 + 8
        assert len(traj.observations) == traj.length + 1
        assert all(r == 0.0 for r in traj.rewards)
        grid_metrics(grid)

    def test_deterministic_given_seed(self):
        a = adversary_episode(ScriptedActor([1, 2, 3, 4]), rng_seed=7,
                              width=7, height=7, block_budget=6)[0]
        b = adversary_episode(ScriptedActor([1, 2, 3, 4]), rng_seed=7,
                              width=7, height=7, block_budget=6)[0]
        assert a == b

    def test_observation_contents(self):
        state = design_reset(0, width=5, height=5, block_budget=2)
        design_step(state, 4)
        obs = state.observe()
        assert obs.t == 1
        assert obs.full_grid_view.shape == (5, 5, 3)
        assert obs.full_grid_view[state.agent_pos][2] == 1.0
        assert obs.z.shape == (LATENT_DIM,)
