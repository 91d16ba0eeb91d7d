"""Benchmark POMDP constructors: two-corridor maze, corridor and grid navigation.

All generators return fully validated ``Pomdp`` instances with dense tensors.
Angular noise uses discretized von Mises distributions so corridor positions
wrap cleanly.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .gridmap import GridMap, bfs_distances
from .pomdp import Pomdp


def discretized_von_mises(n: int, mean: float = 0.0, kappa: float = 1.0) -> np.ndarray:
    """Circular bump over n states: p(i) ~ exp(kappa * cos(2*pi*(i - mean)/n))."""
    if n < 1:
        raise ConfigurationError("support size must be at least 1")
    if kappa < 0:
        raise ConfigurationError("concentration must be nonnegative")
    angles = 2.0 * np.pi * (np.arange(n) - mean) / n
    weights = np.exp(kappa * np.cos(angles))
    return weights / weights.sum()


def build_two_corridor_maze(
    states_per_corridor: int,
    motion_kappa: float = 100.0,
    obs_kappa: float = 4.0,
    goal_halfwidth: int = 1,
    reward_goal: float = 100.0,
    reward_miss: float = -100.0,
    step_cost: float = -1.0,
    initial_kappa: float = 1.0,
) -> Pomdp:
    """Two circular corridors sharing a position coordinate.

    Motion and positional sensing only ever reveal the position modulo the
    corridor length; a dedicated sense action identifies the corridor.  The
    goal position differs between corridors and declaring ends the episode.
    """
    N = states_per_corridor
    if N < 2:
        raise ConfigurationError("need at least 2 states per corridor")
    S, A, Z = 2 * N, 4, N + 2
    actions = ("left", "right", "sense_corridor", "declare_goal")
    states = tuple(f"c{c}p{i}" for c in range(2) for i in range(N))
    observations = tuple(f"pos{k}" for k in range(N)) + ("corridor0", "corridor1")

    T = np.zeros((S, A, S))
    move_kernels = {
        0: discretized_von_mises(N, mean=-1.0, kappa=motion_kappa),
        1: discretized_von_mises(N, mean=1.0, kappa=motion_kappa),
    }
    for c in range(2):
        base = c * N
        for a, kernel in move_kernels.items():
            for i in range(N):
                T[base + i, a, base:base + N] = np.roll(kernel, i)
        for a in (2, 3):  # sensing and declaring do not move the agent
            T[base:base + N, a, base:base + N] = np.eye(N)

    O = np.zeros((Z, A, S))
    pos_obs = np.empty((N, N))  # pos_obs[z, j] = p(z | position j)
    for j in range(N):
        pos_obs[:, j] = discretized_von_mises(N, mean=j, kappa=obs_kappa)
    for c in range(2):
        base = c * N
        for a in (0, 1):
            O[:N, a, base:base + N] = pos_obs
        for a in (2, 3):
            O[N + c, a, base:base + N] = 1.0

    goals = (N // 4, (3 * N) // 4)  # one goal position per corridor
    R = np.full((S, A), step_cost)
    R[:, 3] = reward_miss
    for c in range(2):
        for d in range(-goal_halfwidth, goal_halfwidth + 1):
            R[c * N + (goals[c] + d) % N, 3] = reward_goal

    position_prior = discretized_von_mises(N, mean=N // 2, kappa=initial_kappa)
    p0 = 0.5 * np.concatenate([position_prior, position_prior])

    return Pomdp(
        states=states,
        actions=actions,
        observations=observations,
        transition=T,
        observation=O,
        reward=R,
        discount=1.0,
        initial_belief=p0,
        terminal_actions=frozenset({3}),
    )


def build_corridor_nav(
    length_states: int = 40,
    goal: int = 26,
    door: int = 1,
    starts: tuple[int, int] = (3, 36),
    goal_halfwidth: int = 2,
    move_probs: tuple[float, float, float] = (0.9, 0.05, 0.05),
    range_noise: tuple[float, ...] = (0.1, 0.8, 0.1),
    door_false_negative: float = 0.01,
    reward_goal: float = 1000.0,
    reward_miss: float = -1000.0,
    step_cost: float = -1.0,
) -> Pomdp:
    """A 1-D corridor with hidden orientation and a localizing door landmark.

    States are (orientation, position); orientation 0 faces increasing
    positions.  Range readings measure the distance to the wall the robot is
    facing, so a state and its mirror image produce identical readings; only
    the door (placed off-center) breaks the symmetry.  The initial belief
    puts equal mass on one start position per orientation, a mirrored pair,
    so localizing requires a detour to the door before heading for the goal.
    """
    L = length_states
    if not 0 <= goal < L or not 0 <= door < L:
        raise ConfigurationError("goal and door must be corridor positions")
    if any(not 0 <= p < L for p in starts):
        raise ConfigurationError("start positions must lie in the corridor")
    if abs(sum(move_probs) - 1.0) > 1e-12 or abs(sum(range_noise) - 1.0) > 1e-12:
        raise ConfigurationError("noise distributions must sum to 1")

    S, A = 2 * L, 3
    actions = ("forward", "backward", "at_goal")
    states = tuple(f"{o}p{i}" for o in "+-" for i in range(L))
    # z = (reading, door flag); readings run 1..L
    observations = tuple(f"r{r}d{d}" for r in range(1, L + 1) for d in range(2))
    Z = 2 * L

    def sidx(o, i):
        return o * L + i

    p_move, p_stay, p_over = move_probs
    T = np.zeros((S, A, S))
    for o in range(2):
        h = 1 if o == 0 else -1
        for i in range(L):
            for a, direction in ((0, h), (1, -h)):
                for steps, p in ((1, p_move), (0, p_stay), (2, p_over)):
                    j = int(np.clip(i + direction * steps, 0, L - 1))
                    T[sidx(o, i), a, sidx(o, j)] += p
            T[sidx(o, i), 2, sidx(o, i)] = 1.0  # declaring does not move

    shifts = np.arange(len(range_noise)) - (len(range_noise) - 1) // 2
    O = np.zeros((Z, A, S))
    for o in range(2):
        for i in range(L):
            front = L - i if o == 0 else i + 1
            p_door = (1.0 - door_false_negative) if abs(i - door) <= 1 else 0.0
            reading_probs = np.zeros(L + 1)  # index by reading value
            for shift, p in zip(shifts, range_noise):
                reading_probs[int(np.clip(front + shift, 1, L))] += p
            s = sidx(o, i)
            for r in range(1, L + 1):
                if reading_probs[r] == 0.0:
                    continue
                O[(r - 1) * 2 + 0, :, s] = reading_probs[r] * (1.0 - p_door)
                O[(r - 1) * 2 + 1, :, s] = reading_probs[r] * p_door

    R = np.full((S, A), step_cost)
    R[:, 2] = reward_miss
    for o in range(2):
        lo, hi = max(0, goal - goal_halfwidth), min(L - 1, goal + goal_halfwidth)
        R[sidx(o, lo):sidx(o, hi) + 1, 2] = reward_goal

    p0 = np.zeros(S)
    p0[sidx(0, starts[0])] = 0.5
    p0[sidx(1, starts[1])] = 0.5

    return Pomdp(
        states=states,
        actions=actions,
        observations=observations,
        transition=T,
        observation=O,
        reward=R,
        discount=1.0,
        initial_belief=p0,
        terminal_actions=frozenset({2}),
    )


HEADINGS = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W


def _ray_distance(grid: GridMap, cell, direction) -> int:
    """Cells the ray advances before hitting an obstacle or the boundary (>= 1)."""
    r, c = cell
    dr, dc = direction
    d = 0
    while True:
        r += dr
        c += dc
        if not grid.in_bounds((r, c)) or not grid.free[r, c]:
            return d + 1
        d += 1


def grid_nav_state_names(grid: GridMap) -> tuple[str, ...]:
    return tuple(f"r{r}c{c}h{h}" for (r, c) in grid.free_cells() for h in range(4))


def build_grid_nav(
    grid: GridMap,
    motion_noise: float = 0.1,
    sensor_range_m: float = 2.0,
    obs_noise: float = 0.05,
    reward_goal: float = 1000.0,
    reward_miss: float = -1000.0,
    step_cost: float = -1.0,
    uniform_start: bool = False,
) -> Pomdp:
    """Heading-aware navigation on an occupancy grid.

    The sensor quantizes the free distance in the four heading-relative
    directions into near / mid / far buckets, which reproduces the usual
    corridor and open-room ambiguities at map scale.
    """
    if grid.goal is None or grid.start is None:
        raise ConfigurationError("grid navigation needs both a start and a goal cell")
    cells = grid.free_cells()
    cell_of = {cell: k for k, cell in enumerate(cells)}
    reach = bfs_distances(grid, grid.start)
    if grid.goal not in reach:
        raise ConfigurationError("goal is unreachable from the start cell")

    F = len(cells)
    S, A = F * 4, 4
    actions = ("forward", "rotate_left", "rotate_right", "at_goal")
    states = grid_nav_state_names(grid)
    range_cells = max(1, int(round(sensor_range_m / grid.cell_size)))

    def sidx(cell, h):
        return cell_of[cell] * 4 + h

    T = np.zeros((S, A, S))
    for cell in cells:
        for h in range(4):
            s = sidx(cell, h)
            dr, dc = HEADINGS[h]
            target = (cell[0] + dr, cell[1] + dc)
            if grid.in_bounds(target) and grid.free[target]:
                T[s, 0, sidx(target, h)] += 1.0 - motion_noise
                T[s, 0, s] += motion_noise
            else:
                T[s, 0, s] = 1.0
            T[s, 1, sidx(cell, (h - 1) % 4)] = 1.0
            T[s, 2, sidx(cell, (h + 1) % 4)] = 1.0
            T[s, 3, s] = 1.0

    # bucket 0: wall adjacent, 1: within sensor range, 2: beyond range
    def bucket(dist):
        if dist <= 1:
            return 0
        if dist <= range_cells:
            return 1
        return 2

    def bucket_probs(true_bucket):
        p = np.zeros(3)
        p[true_bucket] = 1.0 - obs_noise
        if true_bucket == 0:
            p[1] += obs_noise
        elif true_bucket == 2:
            p[1] += obs_noise
        else:
            p[0] += obs_noise / 2
            p[2] += obs_noise / 2
        return p

    Z = 81
    observations = tuple(
        f"f{f}l{le}b{b}r{ri}"
        for f in range(3) for le in range(3) for b in range(3) for ri in range(3)
    )
    ray = {cell: [_ray_distance(grid, cell, d) for d in HEADINGS] for cell in cells}
    O = np.zeros((Z, A, S))
    for cell in cells:
        for h in range(4):
            s = sidx(cell, h)
            # heading-relative order: front, left, back, right
            rel = (h, (h - 1) % 4, (h + 2) % 4, (h + 1) % 4)
            per_dir = [bucket_probs(bucket(ray[cell][d])) for d in rel]
            probs = np.einsum(
                "a,b,c,d->abcd", per_dir[0], per_dir[1], per_dir[2], per_dir[3]
            ).ravel()
            O[:, :, s] = probs[:, None]

    R = np.full((S, A), step_cost)
    R[:, 3] = reward_miss
    for h in range(4):
        R[sidx(grid.goal, h), 3] = reward_goal

    p0 = np.zeros(S)
    if uniform_start:
        p0[:] = 1.0 / S
    else:
        for h in range(4):
            p0[sidx(grid.start, h)] = 0.25

    return Pomdp(
        states=states,
        actions=actions,
        observations=observations,
        transition=T,
        observation=O,
        reward=R,
        discount=1.0,
        initial_belief=p0,
        terminal_actions=frozenset({3}),
    )
