"""Person-finding model: known robot pose, belief over a wandering person.

The person performs a lazy random walk on the free cells; the robot detects
the person when it has line of sight within sensor range (1% false
negatives, no false positives).  A "not detected" reading extinguishes most
of the belief mass inside the sensed region; a detection reveals the
person's cell.  An episode succeeds when robot and person share a cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .gridmap import GridMap, line_of_sight

ROBOT_MOVES = ((-1, 0), (0, -1), (0, 1), (1, 0))  # up, left, right, down
ROBOT_ACTIONS = ("up", "left", "right", "down")


@dataclass(frozen=True)
class PersonFindingModel:
    grid: GridMap
    sensing_range: float = 3.0
    false_negative_rate: float = 0.01
    person_diffusion: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.false_negative_rate < 1.0:
            raise ConfigurationError("false negative rate must lie in [0, 1)")
        if not 0.0 <= self.person_diffusion <= 1.0:
            raise ConfigurationError("diffusion probability must lie in [0, 1]")


class PersonFindingProblem:
    """Precomputed dynamics for one map: diffusion kernel and visibility sets."""

    def __init__(self, model: PersonFindingModel):
        grid = model.grid
        cells = grid.free_cells()
        if len(cells) < 2:
            raise ConfigurationError("person finding needs at least 2 free cells")
        if grid.start is None:
            raise ConfigurationError("person-finding map needs a robot start cell")
        self.model = model
        self.grid = grid
        self.cells = cells
        self.cell_of = {cell: k for k, cell in enumerate(cells)}
        self.free_count = len(cells)
        self.start_index = self.cell_of[grid.start]

        # person motion: stay, or move to a uniformly random free 4-neighbor
        F = self.free_count
        D = np.zeros((F, F))
        for k, cell in enumerate(cells):
            nbrs = [self.cell_of[n] for n in grid.neighbors(cell)]
            if nbrs and model.person_diffusion > 0:
                D[k, k] = 1.0 - model.person_diffusion
                for n in nbrs:
                    D[k, n] = model.person_diffusion / len(nbrs)
            else:
                D[k, k] = 1.0
        self.diffusion = D

        vis = np.zeros((F, F), dtype=bool)
        for i in range(F):
            vis[i, i] = True
            for j in range(i + 1, F):
                if line_of_sight(grid, cells[i], cells[j], model.sensing_range):
                    vis[i, j] = vis[j, i] = True
        self.visible = vis

    def uniform_belief(self) -> np.ndarray:
        return np.full(self.free_count, 1.0 / self.free_count)

    def move_robot(self, robot: int, action: int) -> int:
        r, c = self.cells[robot]
        dr, dc = ROBOT_MOVES[action]
        target = (r + dr, c + dc)
        if self.grid.in_bounds(target) and self.grid.free[target]:
            return self.cell_of[target]
        return robot

    def diffuse(self, belief: np.ndarray) -> np.ndarray:
        return belief @ self.diffusion

    def detection_prob(self, belief: np.ndarray, robot: int) -> float:
        """Chance the sensor reports the person given the (diffused) belief."""
        seen = float(belief[self.visible[robot]].sum())
        return seen * (1.0 - self.model.false_negative_rate)

    def not_detected_update(self, belief: np.ndarray, robot: int):
        """Posterior and likelihood for a 'not detected' reading at the robot cell."""
        lik = np.where(self.visible[robot], self.model.false_negative_rate, 1.0)
        unnorm = belief * lik
        total = float(unnorm.sum())
        if total <= 0.0:
            raise ConfigurationError(
                "not-detected reading has zero probability; person must be visible"
            )
        return unnorm / total, total

    def sample_person_step(self, person: int, rng: np.random.Generator) -> int:
        return int(rng.choice(self.free_count, p=self.diffusion[person]))


def build_person_finding(grid: GridMap, model: PersonFindingModel | None = None,
                         **kwargs) -> PersonFindingProblem:
    if model is None:
        model = PersonFindingModel(grid=grid, **kwargs)
    elif model.grid is not grid:
        model = PersonFindingModel(
            grid=grid,
            sensing_range=model.sensing_range,
            false_negative_rate=model.false_negative_rate,
            person_diffusion=model.person_diffusion,
        )
    return PersonFindingProblem(model)
