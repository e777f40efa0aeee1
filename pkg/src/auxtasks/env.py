"""HomeGrid: a deterministic grid world whose cells may hold objects.

The agent observes the proposition of the object on its current cell (if any).
Tasks are satisfied by visiting object cells in the order a formula demands.
"""

from __future__ import annotations

import csv
import enum
import io
import re
import shlex
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

Cell = tuple[int, int]

WALL, FLOOR, START = "X", ".", "S"
_PROP = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class MapError(ValueError):
    pass


class Action(enum.IntEnum):
    Up = 0
    Down = 1
    Left = 2
    Right = 3


ACTIONS = tuple(Action)
_DELTAS = {Action.Up: (0, -1), Action.Down: (0, 1), Action.Left: (-1, 0), Action.Right: (1, 0)}


@dataclass(frozen=True)
class ObjectPlacement:
    proposition: str
    display_name: str
    cell: Cell
    room: str


@dataclass(frozen=True)
class EnvState:
    agent_cell: Cell
    steps_taken: int = 0


@dataclass(frozen=True, eq=False)
class GridMap:
    width: int
    height: int
    walls: frozenset
    objects: tuple
    rooms: Mapping[str, frozenset]
    start_cell: Cell
    # dense indices used by the learner: free cells in row-major order
    cells: tuple = field(init=False, repr=False)
    cell_index: Mapping[Cell, int] = field(init=False, repr=False)
    next_cell: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cells = tuple((x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.walls)
        index = {c: i for i, c in enumerate(cells)}
        nxt = np.empty((len(cells), len(ACTIONS)), dtype=np.int64)
        for c, i in index.items():
            for a in ACTIONS:
                nxt[i, a] = index[_move(self, c, a)]
        nxt.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "cell_index", index)
        object.__setattr__(self, "next_cell", nxt)
        object.__setattr__(self, "_by_cell", {o.cell: o for o in self.objects})

    @property
    def propositions(self) -> frozenset[str]:
        return frozenset(o.proposition for o in self.objects)

    def object_at(self, cell: Cell) -> Optional[ObjectPlacement]:
        return self._by_cell.get(cell)

    def find(self, proposition: str) -> ObjectPlacement:
        for o in self.objects:
            if o.proposition == proposition:
                return o
        raise KeyError(proposition)

    def room_of(self, cell: Cell) -> Optional[str]:
        for name, cells in self.rooms.items():
            if cell in cells:
                return name
        return None

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height


def _move(grid: GridMap, cell: Cell, action: Action) -> Cell:
    dx, dy = _DELTAS[Action(action)]
    nxt = (cell[0] + dx, cell[1] + dy)
    if not grid.in_bounds(nxt) or nxt in grid.walls:
        return cell
    return nxt


LegendEntry = Union[tuple[str, str], tuple[str, str, str]]


def load_map(
    map_text: str,
    legend: Mapping[str, LegendEntry],
    rooms: Optional[Mapping[str, Sequence[tuple[int, int, int, int]]]] = None,
) -> GridMap:
    """Build a :class:`GridMap` from an ASCII grid and an object legend.

    ``legend`` maps a map letter to ``(display_name, room)`` (the letter is
    then the proposition) or ``(proposition, display_name, room)``.
    ``rooms`` optionally maps a room name to inclusive rectangles
    ``(x0, y0, x1, y1)``; without it a room is the set of its object cells.
    """
    rows = [r for r in map_text.strip("\n").splitlines()]
    rows = [r.rstrip() for r in rows]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise MapError("non-rectangular map")
    width, height = len(rows[0]), len(rows)

    walls, start, objects = set(), None, []
    seen_letters = set()
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == WALL:
                walls.add((x, y))
            elif ch == FLOOR:
                continue
            elif ch == START:
                if start is not None:
                    raise MapError("more than one start cell")
                start = (x, y)
            elif ch in legend:
                if ch in seen_letters:
                    raise MapError(f"duplicate object letter {ch!r}")
                seen_letters.add(ch)
                entry = legend[ch]
                prop, display, room = (ch, *entry) if len(entry) == 2 else entry
                if not _PROP.fullmatch(prop):
                    raise MapError(f"invalid proposition {prop!r}")
                objects.append(ObjectPlacement(prop, display, (x, y), room))
            else:
                raise MapError(f"unknown map symbol {ch!r} at ({x},{y})")
    if start is None:
        raise MapError("missing start cell")
    missing = set(legend) - seen_letters
    if missing:
        raise MapError(f"legend letters not on the map: {sorted(missing)}")
    props = [o.proposition for o in objects]
    if len(set(props)) != len(props):
        raise MapError("duplicate proposition in legend")

    if rooms:
        room_cells = {
            name: frozenset(
                (x, y)
                for (x0, y0, x1, y1) in rects
                for y in range(y0, y1 + 1)
                for x in range(x0, x1 + 1)
                if (x, y) not in walls and 0 <= x < width and 0 <= y < height
            )
            for name, rects in rooms.items()
        }
        for o in objects:
            if o.cell not in room_cells.get(o.room, ()):
                raise MapError(f"object {o.proposition} at {o.cell} lies outside room {o.room!r}")
    else:
        grouped: dict[str, set] = {}
        for o in objects:
            grouped.setdefault(o.room, set()).add(o.cell)
        room_cells = {k: frozenset(v) for k, v in grouped.items()}

    objects.sort(key=lambda o: o.proposition)
    return GridMap(width, height, frozenset(walls), tuple(objects), room_cells, start)


def parse_map_file(text: str) -> GridMap:
    """Parse the map file format: grid, blank line, then legend lines.

    Legend lines are ``<letter> <proposition> "<display name>" <room>``;
    lines ``room <x0> <y0> <x1> <y1> <room name>`` declare room rectangles.
    ``#`` starts a comment line.
    """
    lines = text.splitlines()
    try:
        split = next(i for i, line in enumerate(lines) if not line.strip())
    except StopIteration:
        split = len(lines)
    grid = "\n".join(lines[:split])
    legend: dict[str, LegendEntry] = {}
    rooms: dict[str, list] = {}
    for raw in lines[split:]:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = shlex.split(line)
        if parts[0] == "room":
            if len(parts) < 6:
                raise MapError(f"bad room line: {raw!r}")
            x0, y0, x1, y1 = map(int, parts[1:5])
            rooms.setdefault(" ".join(parts[5:]), []).append((x0, y0, x1, y1))
            continue
        if len(parts) < 4 or len(parts[0]) != 1:
            raise MapError(f"bad legend line: {raw!r}")
        letter, prop, display = parts[:3]
        if letter in legend:
            raise MapError(f"duplicate object letter {letter!r}")
        legend[letter] = (prop, display, " ".join(parts[3:]))
    return load_map(grid, legend, rooms or None)


def load_map_file(path: Union[str, Path, None] = None) -> GridMap:
    """Load a map file; ``None`` loads the bundled default HomeGrid."""
    if path is None:
        text = resources.files("auxtasks.data").joinpath("homegrid.map").read_text()
    else:
        text = Path(path).read_text()
    return parse_map_file(text)


def default_map_path() -> Path:
    return Path(str(resources.files("auxtasks.data").joinpath("homegrid.map")))


def reset(grid: GridMap) -> EnvState:
    return EnvState(grid.start_cell, 0)


def step(grid: GridMap, s: EnvState, a: Action) -> EnvState:
    """Move one cell; blocked moves leave the agent in place but still count."""
    return EnvState(_move(grid, s.agent_cell, a), s.steps_taken + 1)


def label(grid: GridMap, s: EnvState) -> frozenset[str]:
    obj = grid.object_at(s.agent_cell)
    return frozenset() if obj is None else frozenset([obj.proposition])


# ---------------------------------------------------------------------------
# visitation heatmaps: arrays indexed [y, x]

def new_heatmap(grid: GridMap) -> np.ndarray:
    return np.zeros((grid.height, grid.width), dtype=np.int64)


def record_visit(heatmap: np.ndarray, s: EnvState, grid: Optional[GridMap] = None) -> np.ndarray:
    if grid is not None and heatmap.shape != (grid.height, grid.width):
        raise MapError(f"heatmap shape {heatmap.shape} does not match map {(grid.height, grid.width)}")
    x, y = s.agent_cell
    if not (0 <= y < heatmap.shape[0] and 0 <= x < heatmap.shape[1]):
        raise MapError(f"cell {s.agent_cell} outside heatmap of shape {heatmap.shape}")
    heatmap[y, x] += 1
    return heatmap


def heatmap_to_csv(heatmap: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in heatmap:
        writer.writerow(int(v) for v in row)
    return buf.getvalue()


def heatmap_from_csv(text: str) -> np.ndarray:
    rows = [list(map(int, r)) for r in csv.reader(io.StringIO(text)) if r]
    return np.array(rows, dtype=np.int64)


def room_fractions(grid: GridMap, heatmap: np.ndarray) -> dict[str, float]:
    total = heatmap.sum()
    out = {}
    for name, cells in sorted(grid.rooms.items()):
        count = sum(int(heatmap[y, x]) for x, y in cells)
        out[name] = count / total if total else 0.0
    return out


def shortest_path_length(grid: GridMap, source: Cell, target: Cell) -> Optional[int]:
    """Plain BFS distance between two cells."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        c = queue.popleft()
        if c == target:
            return dist[c]
        for a in ACTIONS:
            n = _move(grid, c, a)
            if n not in dist:
                dist[n] = dist[c] + 1
                queue.append(n)
    return None
