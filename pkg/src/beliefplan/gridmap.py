"""Occupancy-grid maps: ASCII parsing, line of sight, and shortest paths.

Map files are plain text, one row per line: ``#`` obstacle, ``.`` free,
``G`` goal (free), ``R`` start (free).  Cells are addressed as (row, col).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# neighbor order fixes tie-breaking everywhere paths are computed
NEIGHBOR_OFFSETS = ((-1, 0), (0, -1), (0, 1), (1, 0))


@dataclass(frozen=True)
class GridMap:
    free: np.ndarray  # bool, True where traversable
    cell_size: float = 1.0
    goal: tuple[int, int] | None = None
    start: tuple[int, int] | None = None

    def __post_init__(self):
        free = np.asarray(self.free, dtype=bool)
        free.setflags(write=False)
        object.__setattr__(self, "free", free)
        for name in ("goal", "start"):
            cell = getattr(self, name)
            if cell is not None:
                cell = (int(cell[0]), int(cell[1]))
                if not self.in_bounds(cell) or not free[cell]:
                    raise ConfigurationError(f"{name} cell {cell} is not a free map cell")
                object.__setattr__(self, name, cell)

    @property
    def height(self) -> int:
        return self.free.shape[0]

    @property
    def width(self) -> int:
        return self.free.shape[1]

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def free_cells(self) -> list[tuple[int, int]]:
        return [tuple(rc) for rc in np.argwhere(self.free)]

    def neighbors(self, cell):
        r, c = cell
        for dr, dc in NEIGHBOR_OFFSETS:
            nxt = (r + dr, c + dc)
            if self.in_bounds(nxt) and self.free[nxt]:
                yield nxt


def parse_map(text: str, cell_size: float = 1.0) -> GridMap:
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ConfigurationError("map text is empty")
    width = max(len(r) for r in rows)
    free = np.zeros((len(rows), width), dtype=bool)
    goal = start = None
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            if ch in ".GR":
                free[r, c] = True
                if ch == "G":
                    goal = (r, c)
                elif ch == "R":
                    start = (r, c)
            elif ch == " ":
                continue
            else:
                raise ConfigurationError(f"unknown map character {ch!r} at row {r}, col {c}")
    return GridMap(free=free, cell_size=cell_size, goal=goal, start=start)


def format_map(grid: GridMap) -> str:
    out = []
    for r in range(grid.height):
        row = []
        for c in range(grid.width):
            if not grid.free[r, c]:
                row.append("#")
            elif grid.goal == (r, c):
                row.append("G")
            elif grid.start == (r, c):
                row.append("R")
            else:
                row.append(".")
        out.append("".join(row))
    return "\n".join(out) + "\n"


def load_map(path, cell_size: float = 1.0) -> GridMap:
    with open(path, encoding="utf-8") as fh:
        return parse_map(fh.read(), cell_size=cell_size)


def save_map(grid: GridMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_map(grid))


def line_of_sight(grid: GridMap, a, b, range_m: float) -> bool:
    """True iff b is within range of a and the ray between cell centers is clear.

    The ray is walked with an integer grid traversal (Amanatides-Woo); a cell
    blocks the ray only if the segment actually enters its interior.
    """
    ar, ac = a
    br, bc = b
    if not (grid.in_bounds(a) and grid.in_bounds(b)):
        raise ConfigurationError(f"cells {a}, {b} must lie on the map")
    dist = np.hypot(br - ar, bc - ac) * grid.cell_size
    if dist > range_m:
        return False
    if a == b:
        return grid.free[a]
    if not (grid.free[a] and grid.free[b]):
        return False

    # traverse in continuous coordinates with cell centers at (r+0.5, c+0.5)
    x0, y0 = ar + 0.5, ac + 0.5
    x1, y1 = br + 0.5, bc + 0.5
    dx, dy = x1 - x0, y1 - y0
    r, c = ar, ac
    step_r = 0 if dx == 0 else (1 if dx > 0 else -1)
    step_c = 0 if dy == 0 else (1 if dy > 0 else -1)
    t_max_r = np.inf if dx == 0 else ((r + (step_r > 0)) - x0) / dx
    t_max_c = np.inf if dy == 0 else ((c + (step_c > 0)) - y0) / dy
    t_delta_r = np.inf if dx == 0 else abs(1.0 / dx)
    t_delta_c = np.inf if dy == 0 else abs(1.0 / dy)
    while (r, c) != (br, bc):
        if t_max_r < t_max_c:
            r += step_r
            t_max_r += t_delta_r
        elif t_max_c < t_max_r:
            c += step_c
            t_max_c += t_delta_c
        else:
            # exact corner crossing: step diagonally, grazing does not block
            r += step_r
            c += step_c
            t_max_r += t_delta_r
            t_max_c += t_delta_c
        if not grid.free[r, c]:
            return False
    return True


def bfs_distances(grid: GridMap, source) -> dict[tuple[int, int], int]:
    """Free-space hop counts from a source cell over the 4-neighborhood."""
    if not grid.free[tuple(source)]:
        raise ConfigurationError(f"BFS source {source} is not free")
    dist = {tuple(source): 0}
    queue = deque([tuple(source)])
    while queue:
        cell = queue.popleft()
        for nxt in grid.neighbors(cell):
            if nxt not in dist:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


def step_toward(grid: GridMap, origin, target) -> tuple[int, int]:
    """Next cell on a shortest path from origin to target (ties: lexicographic).

    Returns the origin itself when the target is unreachable or already met.
    """
    origin = tuple(origin)
    target = tuple(target)
    if origin == target:
        return origin
    dist = bfs_distances(grid, target)
    if origin not in dist:
        return origin
    best = origin
    best_d = dist[origin]
    for nxt in sorted(grid.neighbors(origin)):
        if dist.get(nxt, np.inf) < best_d:
            best = nxt
            best_d = dist[nxt]
    return best
