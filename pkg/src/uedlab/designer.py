"""The environment-designing adversary's MDP and the domain-randomization
generator.

A design episode lasts 2 + block_budget steps: step 0 places the agent,
step 1 places the goal, and every later step places a wall.  Placement
collisions follow the rules below, which guarantee every completed design is
a valid Grid no matter what action sequence was played:

  * goal aimed at the agent's tile -> relocated to a uniformly random free tile
  * wall aimed at any occupied tile (agent, goal, wall) -> no-op
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Trajectory
from .gridworld import FLOOR, GOAL, WALL, Grid

LATENT_DIM = 50
DEFAULT_BLOCK_BUDGET = 50


@dataclass(frozen=True)
class AdversaryObservation:
    """Fully observed design state: whole-grid channels plus step and latent.

    Channels of ``full_grid_view`` are binary planes (wall, goal, agent);
    an all-zero cell is empty floor.
    """

    full_grid_view: np.ndarray  # (height, width, 3)
    t: int
    z: np.ndarray  # (LATENT_DIM,)


@dataclass
class DesignState:
    cells: np.ndarray  # (height, width), mutable during construction
    agent_pos: tuple[int, int] | None
    agent_dir: int | None
    t: int
    z: np.ndarray
    done: bool
    block_budget: int
    horizon: int
    rng: np.random.Generator

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def n_tiles(self) -> int:
        """Number of interior tiles, i.e. the designer's action-space size."""
        return (self.height - 2) * (self.width - 2)

    @property
    def total_steps(self) -> int:
        return 2 + self.block_budget

    def tile(self, index: int) -> tuple[int, int]:
        """Row-major interior tile for an action index."""
        if not 0 <= index < self.n_tiles:
            raise ValueError(f"tile index {index} out of range")
        w = self.width - 2
        return 1 + index // w, 1 + index % w

    def observe(self) -> AdversaryObservation:
        view = np.zeros((self.height, self.width, 3), dtype=np.float64)
        view[:, :, 0] = self.cells == WALL
        view[:, :, 1] = self.cells == GOAL
        if self.agent_pos is not None:
            view[self.agent_pos][2] = 1.0
        return AdversaryObservation(full_grid_view=view, t=self.t, z=self.z)

    def to_grid(self) -> Grid:
        if not self.done:
            raise RuntimeError("design episode is not finished")
        return Grid(
            self.cells.copy(), self.agent_pos, self.agent_dir, self.horizon
        ).validate()


def design_reset(
    rng_seed,
    width: int = 15,
    height: int = 15,
    block_budget: int = DEFAULT_BLOCK_BUDGET,
    horizon: int = 250,
) -> DesignState:
    """Fresh design state: empty walled grid, step 0, z ~ N(0, I) in R^50."""
    rng = np.random.default_rng(rng_seed)
    cells = np.full((height, width), FLOOR, dtype=np.int8)
    cells[0, :] = cells[-1, :] = WALL
    cells[:, 0] = cells[:, -1] = WALL
    return DesignState(
        cells=cells,
        agent_pos=None,
        agent_dir=None,
        t=0,
        z=rng.standard_normal(LATENT_DIM),
        done=False,
        block_budget=block_budget,
        horizon=horizon,
        rng=rng,
    )


def design_step(state: DesignState, action: int) -> DesignState:
    """Applies one placement action in place and returns the state."""
    if state.done:
        raise RuntimeError("design_step() called on a finished design")
    pos = state.tile(int(action))
    if state.t == 0:
        state.agent_pos = pos
        state.agent_dir = int(state.rng.integers(4))
    elif state.t == 1:
        if pos == state.agent_pos:
            free = [
                (r, c)
                for r in range(1, state.height - 1)
                for c in range(1, state.width - 1)
                if state.cells[r, c] == FLOOR and (r, c) != state.agent_pos
            ]
            pos = free[int(state.rng.integers(len(free)))]
        state.cells[pos] = GOAL
    else:
        occupied = state.cells[pos] != FLOOR or pos == state.agent_pos
        if not occupied:
            state.cells[pos] = WALL
    state.t += 1
    if state.t >= state.total_steps:
        state.done = True
    return state


def random_design(
    rng: np.random.Generator,
    block_count_range: tuple[int, int] = (0, DEFAULT_BLOCK_BUDGET),
    width: int = 15,
    height: int = 15,
    horizon: int = 250,
) -> Grid:
    """Domain randomization: uniform block count, then agent/goal/blocks
    placed by uniform sampling without replacement over interior tiles."""
    lo, hi = block_count_range
    n_tiles = (width - 2) * (height - 2)
    if not (0 <= lo <= hi and hi + 2 <= n_tiles):
        raise ValueError("block_count_range exceeds available free tiles")
    n_blocks = int(rng.integers(lo, hi + 1))
    picks = rng.choice(n_tiles, size=n_blocks + 2, replace=False)
    w = width - 2
    tiles = [(1 + int(i) // w, 1 + int(i) % w) for i in picks]
    cells = np.full((height, width), FLOOR, dtype=np.int8)
    cells[0, :] = cells[-1, :] = WALL
    cells[:, 0] = cells[:, -1] = WALL
    agent = tiles[0]
    cells[tiles[1]] = GOAL
    for t in tiles[2:]:
        cells[t] = WALL
    return Grid(cells, agent, int(rng.integers(4)), horizon).validate()


def adversary_episode(actor, rng_seed, **design_kwargs) -> tuple[Grid, Trajectory]:
    """Rolls the design MDP under ``actor`` and returns the finished Grid plus
    the adversary's trajectory.

    ``actor`` must provide reset() and act(observation) -> (action, log_prob,
    value).  Per-step rewards are 0; the training strategy fills in the
    terminal regret reward afterwards.
    """
    state = design_reset(rng_seed, **design_kwargs)
    actor.reset()
    traj = Trajectory(observations=[state.observe()], actions=[], rewards=[])
    while not state.done:
        obs = traj.observations[-1]
        action, log_prob, value = actor.act(obs)
        design_step(state, action)
        traj.observations.append(state.observe())
        traj.actions.append(int(action))
        traj.rewards.append(0.0)
        traj.log_probs.append(float(log_prob))
        traj.values.append(float(value))
    traj.terminated = True
    return state.to_grid(), traj
