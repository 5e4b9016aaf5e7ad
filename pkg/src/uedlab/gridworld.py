"""Partially observable maze navigation on a walled grid.

Tiles are addressed as (row, col) with row 0 at the top.  Directions are
0=east, 1=south, 2=west, 3=north, so turning right is +1 mod 4.

ASCII map format (newline-delimited, rectangular):
    '#'  wall
    '.'  floor
    'G'  goal (exactly one)
    '>', 'v', '<', '^'  agent start, facing east/south/west/north (exactly one)
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

WALL, FLOOR, GOAL = 0, 1, 2

# (drow, dcol) per direction.
DIR_VECS = ((0, 1), (1, 0), (0, -1), (-1, 0))
DIR_CHARS = ">v<^"

ACTIONS = ("turn_left", "turn_right", "forward")
TURN_LEFT, TURN_RIGHT, FORWARD = 0, 1, 2

VIEW_SIZE = 5


class InvalidGridError(ValueError):
    pass


class MapParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {col}" if col is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.col = col


@dataclass
class Grid:
    """An immutable, fully specified maze instance."""

    cells: np.ndarray  # (height, width) of WALL/FLOOR/GOAL
    agent_start: tuple[int, int]
    agent_start_dir: int
    horizon: int = 250

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        self.cells.setflags(write=False)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def goal(self) -> tuple[int, int]:
        rows, cols = np.nonzero(self.cells == GOAL)
        return int(rows[0]), int(cols[0])

    def validate(self):
        h, w = self.cells.shape
        if h < 3 or w < 3:
            raise InvalidGridError("grid must be at least 3x3")
        border = np.concatenate(
            [self.cells[0], self.cells[-1], self.cells[:, 0], self.cells[:, -1]]
        )
        if not np.all(border == WALL):
            raise InvalidGridError("outer border must be all walls")
        if int(np.sum(self.cells == GOAL)) != 1:
            raise InvalidGridError("grid must contain exactly one goal")
        r, c = self.agent_start
        if not (0 <= r < h and 0 <= c < w) or self.cells[r, c] != FLOOR:
            raise InvalidGridError("agent start must be a floor tile")
        if self.agent_start_dir not in (0, 1, 2, 3):
            raise InvalidGridError("agent direction must be in 0..3")
        if self.horizon < 1:
            raise InvalidGridError("horizon must be >= 1")
        return self

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            np.array_equal(self.cells, other.cells)
            and self.agent_start == other.agent_start
            and self.agent_start_dir == other.agent_start_dir
            and self.horizon == other.horizon
        )


@dataclass
class AgentState:
    position: tuple[int, int]
    direction: int
    steps_taken: int = 0


@dataclass(frozen=True)
class AgentObservation:
    """Egocentric 5x5x3 view (agent bottom-center, facing up) plus direction.

    Channels are binary indicator planes: wall-or-out-of-bounds, goal, floor.
    """

    view: np.ndarray
    direction: int


@dataclass(frozen=True)
class GridMetrics:
    num_blocks: int
    distance_to_goal: int
    passable_path_length: int


def empty_grid(width=15, height=15, agent_start=(1, 1), agent_start_dir=0,
               goal=None, horizon=250) -> Grid:
    """All-floor interior with a wall border; goal defaults to the far corner."""
    cells = np.full((height, width), FLOOR, dtype=np.int8)
    cells[0, :] = cells[-1, :] = WALL
    cells[:, 0] = cells[:, -1] = WALL
    if goal is None:
        goal = (height - 2, width - 2)
    cells[goal] = GOAL
    return Grid(cells, agent_start, agent_start_dir, horizon).validate()


def egocentric_view(grid: Grid, position, direction) -> np.ndarray:
    """5x5x3 binary view with the agent at the bottom-center cell facing up.

    Walls do not occlude: every cell in the 5x5 cone is visible.
    Out-of-bounds cells are encoded as walls.
    """
    v = VIEW_SIZE
    view = np.zeros((v, v, 3), dtype=np.float64)
    fwd = DIR_VECS[direction]
    right = DIR_VECS[(direction + 1) % 4]
    r0, c0 = position
    for vr in range(v):
        for vc in range(v):
            f = (v - 1) - vr
            s = vc - v // 2
            r = r0 + f * fwd[0] + s * right[0]
            c = c0 + f * fwd[1] + s * right[1]
            if 0 <= r < grid.height and 0 <= c < grid.width:
                tag = grid.cells[r, c]
            else:
                tag = WALL
            view[vr, vc, {WALL: 0, GOAL: 1, FLOOR: 2}[int(tag)]] = 1.0
    return view


class MazeEnv:
    """Episode simulator for one Grid.  Not shared across workers."""

    def __init__(self, grid: Grid):
        grid.validate()
        self.grid = grid
        self.state: AgentState | None = None
        self.done = True

    def reset(self) -> AgentObservation:
        self.state = AgentState(self.grid.agent_start, self.grid.agent_start_dir)
        self.done = False
        return self._observe()

    def _observe(self) -> AgentObservation:
        return AgentObservation(
            view=egocentric_view(self.grid, self.state.position, self.state.direction),
            direction=self.state.direction,
        )

    def step(self, action: int):
        """Returns (observation, reward, done).

        Reaching the goal at step M yields reward 1 - 0.9 * (M / T); all other
        steps yield 0.  The episode also ends when steps_taken hits the horizon.
        """
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        st = self.state
        reward = 0.0
        if action == TURN_LEFT:
            st.direction = (st.direction - 1) % 4
        elif action == TURN_RIGHT:
            st.direction = (st.direction + 1) % 4
        elif action == FORWARD:
            dr, dc = DIR_VECS[st.direction]
            r, c = st.position[0] + dr, st.position[1] + dc
            if self.grid.cells[r, c] != WALL:
                st.position = (r, c)
        else:
            raise ValueError(f"unknown action {action}")
        st.steps_taken += 1
        if self.grid.cells[st.position] == GOAL:
            reward = 1.0 - 0.9 * (st.steps_taken / self.grid.horizon)
            self.done = True
        elif st.steps_taken >= self.grid.horizon:
            self.done = True
        return self._observe(), reward, self.done


def shortest_path_length(grid: Grid) -> int:
    """BFS distance (4-connected moves) from agent start to the goal over
    non-wall tiles; 0 if the goal is unreachable."""
    start = grid.agent_start
    goal = grid.goal
    dist = {start: 0}
    queue = deque([start])
    while queue:
        pos = queue.popleft()
        if pos == goal:
            return dist[pos]
        for dr, dc in DIR_VECS:
            nxt = (pos[0] + dr, pos[1] + dc)
            if nxt not in dist and grid.cells[nxt] != WALL:
                dist[nxt] = dist[pos] + 1
                queue.append(nxt)
    return 0


def grid_metrics(grid: Grid) -> GridMetrics:
    interior = grid.cells[1:-1, 1:-1]
    gr, gc = grid.goal
    ar, ac = grid.agent_start
    return GridMetrics(
        num_blocks=int(np.sum(interior == WALL)),
        distance_to_goal=abs(gr - ar) + abs(gc - ac),
        passable_path_length=shortest_path_length(grid),
    )


def parse_map(text: str, horizon: int = 250) -> Grid:
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise MapParseError("empty map")
    width = len(lines[0])
    agent = None
    agent_dir = None
    cells = np.full((len(lines), width), WALL, dtype=np.int8)
    goal_count = 0
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapParseError("ragged row", line=r + 1)
        for c, ch in enumerate(line):
            if ch == "#":
                cells[r, c] = WALL
            elif ch == ".":
                cells[r, c] = FLOOR
            elif ch == "G":
                if goal_count:
                    raise MapParseError("duplicate goal", line=r + 1, col=c + 1)
                goal_count += 1
                cells[r, c] = GOAL
            elif ch in DIR_CHARS:
                if agent is not None:
                    raise MapParseError("duplicate agent", line=r + 1, col=c + 1)
                agent = (r, c)
                agent_dir = DIR_CHARS.index(ch)
                cells[r, c] = FLOOR
            else:
                raise MapParseError(f"unknown character {ch!r}", line=r + 1, col=c + 1)
    if agent is None:
        raise MapParseError("missing agent")
    if goal_count == 0:
        raise MapParseError("missing goal")
    return Grid(cells, agent, agent_dir, horizon).validate()


def render_map(grid: Grid) -> str:
    rows = []
    for r in range(grid.height):
        row = []
        for c in range(grid.width):
            if (r, c) == grid.agent_start:
                row.append(DIR_CHARS[grid.agent_start_dir])
            else:
                row.append({WALL: "#", FLOOR: ".", GOAL: "G"}[int(grid.cells[r, c])])
        rows.append("".join(row))
    return "\n".join(rows) + "\n"
