"""Object-fetching gridworld with noisy position and area observations.

The robot state is ``(x, y, l, d, h)``: row, column, area label, heading and
whether the object is held. ``x``, ``y`` and ``l`` are observed through a
noisy window sensor; ``d`` and ``h`` are observed exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np

from .belief import AttributeSpace, FactoredModel, check_stochastic

GRID_SIZE = 13
N_AREAS = 4
AREA_NAMES = ("room1", "corridor", "room2", "hall")
WALL = -1
OBS_P = 0.3
OBS_RADIUS = 2

R_BUMP = -10.0
R_STEP = -1.0
R_GRAB = 20.0
R_DELIVER = 100.0
REWARDS = (R_BUMP, R_STEP, R_GRAB, R_DELIVER)


class Action(IntEnum):
    TurnLeft = 0
    TurnRight = 1
    Move = 2
    Grab = 3


class Direction(IntEnum):
    North = 0
    East = 1
    South = 2
    West = 3

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]

    @classmethod
    def from_letter(cls, c: str) -> "Direction":
        return {"N": cls.North, "E": cls.East, "S": cls.South, "W": cls.West}[c.upper()]

    @property
    def letter(self) -> str:
        return self.name[0]


_DELTAS = {0: (-1, 0), 1: (0, 1), 2: (1, 0), 3: (0, -1)}


class MapFormatError(ValueError):
    pass


class TerminalStateError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GridMap:
    """Area labels per cell (``-1`` for walls) plus the three fixed positions."""

    areas: np.ndarray
    object_start: tuple[int, int]
    target: tuple[int, int]
    robot_start: tuple[int, int, Direction]

    def __post_init__(self):
        a = np.array(self.areas, dtype=int)
        a.setflags(write=False)
        object.__setattr__(self, "areas", a)
        if a.ndim != 2:
            raise MapFormatError("area grid must be 2-D")
        r, c, d = self.robot_start
        object.__setattr__(self, "robot_start", (int(r), int(c), Direction(d)))
        cells = {"object": self.object_start, "target": self.target, "robot": (r, c)}
        for name, cell in cells.items():
            if not self.is_free(*cell):
                raise MapFormatError(f"{name} position {cell} is not a free cell")
        if len(set(map(tuple, cells.values()))) != 3:
            raise MapFormatError("object, target and robot must occupy distinct cells")
        missing = set(range(N_AREAS)) - set(np.unique(a[a >= 0]).tolist())
        if missing:
            raise MapFormatError(f"areas {sorted(missing)} do not occur on the map")

    @property
    def shape(self) -> tuple[int, int]:
        return self.areas.shape

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.shape[0] and 0 <= y < self.shape[1]

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and self.areas[x, y] != WALL

    def free_mask(self) -> np.ndarray:
        return self.areas != WALL

    def render(self, state: "RobotState | None" = None) -> str:
        rows = [["#" if v == WALL else str(v) for v in row] for row in self.areas]
        rows[self.target[0]][self.target[1]] = "T"
        if state is None or not state.h:
            rows[self.object_start[0]][self.object_start[1]] = "o"
        if state is not None:
            rows[state.x][state.y] = "^>v<"[state.d]
        return "\n".join("".join(r) for r in rows)


def parse_map(text: str, source: str = "<string>") -> GridMap:
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    grid, meta = lines[:GRID_SIZE], lines[GRID_SIZE:]
    if len(grid) != GRID_SIZE or any(":" in ln for ln in grid):
        raise MapFormatError(f"{source}: expected {GRID_SIZE} grid rows")
    areas = np.empty((GRID_SIZE, GRID_SIZE), dtype=int)
    for i, ln in enumerate(grid):
        if len(ln) != GRID_SIZE:
            raise MapFormatError(f"{source}: row {i} has {len(ln)} cells, expected {GRID_SIZE}")
        for j, ch in enumerate(ln):
            if ch == "#":
                areas[i, j] = WALL
            elif ch in "0123":
                areas[i, j] = int(ch)
            else:
                raise MapFormatError(f"{source}: unknown cell character {ch!r} at ({i},{j})")
    fields = {}
    for ln in meta:
        key, _, val = ln.partition(":")
        fields[key.strip()] = [v.strip() for v in val.split(",")]
    try:
        obj = tuple(int(v) for v in fields["object"])
        tgt = tuple(int(v) for v in fields["target"])
        rx, ry, rd = fields["robot"]
        robot = (int(rx), int(ry), Direction.from_letter(rd))
    except (KeyError, ValueError) as err:
        raise MapFormatError(f"{source}: missing or malformed object/target/robot lines") from err
    try:
        return GridMap(areas, obj, tgt, robot)
    except MapFormatError as err:
        raise MapFormatError(f"{source}: {err}") from err


def format_map(grid: GridMap) -> str:
    rows = ["".join("#" if v == WALL else str(v) for v in row) for row in grid.areas]
    rx, ry, rd = grid.robot_start
    rows += [
        f"object: {grid.object_start[0]},{grid.object_start[1]}",
        f"target: {grid.target[0]},{grid.target[1]}",
        f"robot: {rx},{ry},{rd.letter}",
    ]
    return "\n".join(rows) + "\n"


def load_map(path: str | os.PathLike | None = None) -> GridMap:
    """Load a map file; ``None`` loads the packaged default map."""
    if path is None:
        text = resources.files("kbpomdp").joinpath("data/default_map.txt").read_text()
        return parse_map(text, "default_map.txt")
    return parse_map(Path(path).read_text(), str(path))


@dataclass(frozen=True)
class RobotState:
    x: int
    y: int
    l: int
    d: Direction
    h: bool = False
    terminal: bool = False


@dataclass(frozen=True)
class Observation:
    ox: int
    oy: int
    ol: int
    d: Direction
    h: bool

    def as_dict(self) -> dict[str, int]:
        return {"x": self.ox, "y": self.oy, "l": self.ol, "d": int(self.d), "h": int(self.h)}


def area_of(x: int, y: int, grid: GridMap) -> int:
    if not grid.is_free(x, y):
        raise ValueError(f"({x},{y}) is a wall or off the map")
    return int(grid.areas[x, y])


def reset(grid: GridMap, rng=None) -> RobotState:
    """Fresh episode: robot at its start pose, object not held. ``rng`` is unused."""
    x, y, d = grid.robot_start
    return RobotState(x, y, area_of(x, y, grid), d, False)


def step(state: RobotState, action: Action, grid: GridMap) -> tuple[RobotState, float, bool]:
    """Deterministic transition. Returns ``(next_state, reward, terminal)``."""
    if state.terminal:
        raise TerminalStateError("episode already finished")
    action = Action(action)
    if action is Action.TurnLeft:
        return replace(state, d=Direction((state.d - 1) % 4)), R_STEP, False
    if action is Action.TurnRight:
        return replace(state, d=Direction((state.d + 1) % 4)), R_STEP, False
    dx, dy = Direction(state.d).delta
    fx, fy = state.x + dx, state.y + dy
    if action is Action.Grab:
        if not state.h and (fx, fy) == grid.object_start:
            return replace(state, h=True), R_GRAB, False
        return state, R_STEP, False
    if not grid.is_free(fx, fy):
        return state, R_BUMP, False
    nxt = replace(state, x=fx, y=fy, l=int(grid.areas[fx, fy]))
    if nxt.h and (fx, fy) == grid.target:
        return replace(nxt, terminal=True), R_DELIVER, True
    return nxt, R_STEP, False


def window(value: int, lo: int, hi: int, radius: int = OBS_RADIUS) -> range:
    return range(max(lo, value - radius), min(hi, value + radius) + 1)


def observation_likelihood(observed: int, hypothesis: int, lo: int, hi: int, p: float = OBS_P) -> float:
    """P(observed | true value = hypothesis) under the window sensor."""
    w = window(hypothesis, lo, hi)
    if observed not in w:
        return 0.0
    k = len(w)
    if k == 1:
        return 1.0
    return p if observed == hypothesis else (1.0 - p) / (k - 1)


def sample_window(value: int, lo: int, hi: int, rng: np.random.Generator, p: float = OBS_P) -> int:
    w = window(value, lo, hi)
    if len(w) == 1 or rng.random() < p:
        return value
    others = [v for v in w if v != value]
    return others[int(rng.integers(len(others)))]


def observe(state: RobotState, rng: np.random.Generator, p: float = OBS_P, grid_size: int = GRID_SIZE) -> Observation:
    hi = grid_size - 1
    return Observation(
        sample_window(state.x, 0, hi, rng, p),
        sample_window(state.y, 0, hi, rng, p),
        sample_window(state.l, 0, N_AREAS - 1, rng, p),
        state.d,
        state.h,
    )


def observation_table(size: int, p: float = OBS_P) -> np.ndarray:
    """Row ``v`` is the distribution of the observation when the true value is ``v``."""
    z = np.array([[observation_likelihood(o, v, 0, size - 1, p) for o in range(size)] for v in range(size)])
    return check_stochastic(z, atol=1e-12, what="observation table")


# -- factored filter models derived from the map ---------------------------

STATE_SPACE = AttributeSpace(("x", "y", "l", "d", "h"), (GRID_SIZE, GRID_SIZE, N_AREAS, 4, 2))
PARTIAL = ("x", "y", "l")


def _move_tables(grid: GridMap, heading: Direction) -> dict[str, np.ndarray]:
    """Transition tables for x, y and l under Move, averaging over free cells per value."""
    n_x, n_y = grid.shape
    tx = np.zeros((n_x, n_x))
    ty = np.zeros((n_y, n_y))
    tl = np.zeros((N_AREAS, N_AREAS))
    dx, dy = heading.delta
    for x, y in zip(*np.nonzero(grid.free_mask())):
        fx, fy = (x + dx, y + dy) if grid.is_free(x + dx, y + dy) else (x, y)
        tx[x, fx] += 1
        ty[y, fy] += 1
        tl[grid.areas[x, y], grid.areas[fx, fy]] += 1
    tables = {}
    for name, t in (("x", tx), ("y", ty), ("l", tl)):
        s = t.sum(axis=1, keepdims=True)
        empty = s[:, 0] == 0
        t[empty] = np.eye(t.shape[0])[empty]
        s[empty] = 1
        tables[name] = check_stochastic(t / s, what=f"{name} transition")
    return tables


def build_filter_model(grid: GridMap, p: float = OBS_P) -> FactoredModel:
    """Factored model for the robot's belief filter.

    Transitions are keyed by ``(action, heading)`` because the heading is
    observed exactly. Turns and grabs leave x, y, l unchanged; a Move shifts
    each value by the fraction of its free cells whose forward neighbour is free.
    """
    transitions: dict[str, dict] = {a: {} for a in PARTIAL}
    for heading in Direction:
        for name, t in _move_tables(grid, heading).items():
            transitions[name][(Action.Move, heading)] = t
    n_x, n_y = grid.shape
    observations = {
        "x": observation_table(n_x, p),
        "y": observation_table(n_y, p),
        "l": observation_table(N_AREAS, p),
    }
    return FactoredModel(STATE_SPACE, transitions, observations)
