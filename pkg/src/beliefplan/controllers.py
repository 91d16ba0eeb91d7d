"""Baseline controllers, belief-sample collection, and trial simulation.

Belief-space policies are plain callables: ``action = policy(belief)`` for
flat POMDPs, ``action = policy(robot_cell_index, person_belief)`` for the
person-finding problem (the pursuit controller additionally receives the
revealed person cell through the trial runner).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epca import BeliefSet
from .errors import NumericalError
from .gridmap import bfs_distances
from .personfind import ROBOT_MOVES, PersonFindingProblem
from .pomdp import Pomdp, belief_predict, belief_update, simulate_step


def solve_underlying_mdp(model: Pomdp, tol: float = 1e-9, max_iters: int = 100_000):
    """Value iteration on the fully observable MDP.

    Terminal actions contribute no continuation value, which makes the
    undiscounted episodic problems contract.  Returns (values, greedy policy).
    """
    S = model.state_count
    V = np.zeros(S)
    terminal = sorted(model.terminal_actions)
    for _ in range(max_iters):
        Q = model.reward + model.discount * (model.transition @ V)
        if terminal:
            Q[:, terminal] = model.reward[:, terminal]
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    else:
        raise NumericalError(f"state value iteration did not converge in {max_iters} iterations")
    Q = model.reward + model.discount * (model.transition @ V)
    if terminal:
        Q[:, terminal] = model.reward[:, terminal]
    return V, Q.argmax(axis=1)


def ml_heuristic(model: Pomdp, mdp_policy: np.ndarray):
    """Act as the MDP policy prescribes at the belief's most likely state."""

    def policy(belief: np.ndarray) -> int:
        return int(mdp_policy[int(np.argmax(belief))])

    return policy


def collect_beliefs(
    model: Pomdp,
    n: int,
    explore_prob: float,
    rng: np.random.Generator,
    max_episode_steps: int = 100,
) -> BeliefSet:
    """Record n filtered beliefs along semi-random episodes.

    Each step records the current belief, then acts: with probability
    ``explore_prob`` a uniform-random action, otherwise the ML-heuristic
    action.  Episodes restart from the initial belief on terminal actions.
    """
    if n < 1:
        raise ValueError("need at least one belief sample")
    _, mdp_policy = solve_underlying_mdp(model)
    ml = ml_heuristic(model, mdp_policy)
    explore_actions = [a for a in range(model.action_count) if a not in model.terminal_actions]
    if not explore_actions:
        explore_actions = list(range(model.action_count))
    columns = np.empty((model.state_count, n))
    count = 0
    while count < n:
        belief = model.initial_belief.copy()
        state = int(rng.choice(model.state_count, p=model.initial_belief))
        for _ in range(max_episode_steps):
            columns[:, count] = belief
            count += 1
            if count >= n:
                break
            if rng.random() < explore_prob:
                action = explore_actions[int(rng.integers(len(explore_actions)))]
            else:
                action = ml(belief)
            state, obs, _ = simulate_step(model, state, action, rng)
            if action in model.terminal_actions:
                break
            belief, _ = belief_update(model, belief_predict(model, belief, action), action, obs)
    return BeliefSet(columns)


@dataclass
class TrialResult:
    steps: int
    total_reward: float
    declared: bool
    final_reward: float

    @property
    def success(self) -> bool:
        return self.declared and self.final_reward > 0


def run_pomdp_trial(model: Pomdp, policy, rng: np.random.Generator,
                    max_steps: int = 200) -> TrialResult:
    """Simulate one episode of a belief-fed policy with exact filtering."""
    state = int(rng.choice(model.state_count, p=model.initial_belief))
    belief = model.initial_belief.copy()
    total = 0.0
    for t in range(max_steps):
        action = policy(belief)
        state, obs, reward = simulate_step(model, state, action, rng)
        total += reward
        if action in model.terminal_actions:
            return TrialResult(steps=t + 1, total_reward=total, declared=True, final_reward=reward)
        belief, _ = belief_update(model, belief_predict(model, belief, action), action, obs)
    return TrialResult(steps=max_steps, total_reward=total, declared=False, final_reward=float("nan"))


# ---------------------------------------------------------------------------
# Person finding


class _PathCache:
    """Memoized BFS next-step lookups on the free-cell graph."""

    def __init__(self, problem: PersonFindingProblem):
        self.problem = problem
        self._dists: dict[tuple[int, int], dict] = {}

    def action_toward(self, robot: int, target: int):
        if robot == target:
            return None
        grid = self.problem.grid
        origin = self.problem.cells[robot]
        goal = self.problem.cells[target]
        dist = self._dists.get(goal)
        if dist is None:
            dist = bfs_distances(grid, goal)
            self._dists[goal] = dist
        if origin not in dist:
            return None
        best, best_d = None, dist[origin]
        for nxt in sorted(grid.neighbors(origin)):
            d = dist.get(nxt)
            if d is not None and d < best_d:
                best, best_d = nxt, d
        if best is None:
            return None
        delta = (best[0] - origin[0], best[1] - origin[1])
        return ROBOT_MOVES.index(delta)


def ml_person_heuristic(problem: PersonFindingProblem):
    """Drive toward the single most likely person cell."""
    paths = _PathCache(problem)

    def policy(robot: int, belief: np.ndarray):
        return paths.action_toward(robot, int(np.argmax(belief)))

    return policy


def closest_heuristic(problem: PersonFindingProblem, threshold: float = 1e-6):
    """Drive toward the nearest cell still carrying belief mass."""
    paths = _PathCache(problem)
    grid = problem.grid

    def policy(robot: int, belief: np.ndarray):
        dist = bfs_distances(grid, problem.cells[robot])
        best = None
        for k, cell in enumerate(problem.cells):
            if belief[k] <= threshold:
                continue
            d = dist.get(cell)
            if d is None:
                continue
            key = (d, cell)
            if best is None or key < best[0]:
                best = (key, k)
        if best is None:
            return None
        return paths.action_toward(robot, best[1])

    return policy


def densest_heuristic(problem: PersonFindingProblem):
    """Drive toward the cell from which the most belief mass is visible."""
    paths = _PathCache(problem)

    def policy(robot: int, belief: np.ndarray):
        visible_mass = problem.visible @ belief
        return paths.action_toward(robot, int(np.argmax(visible_mass)))

    return policy


def oracle_pursuit(problem: PersonFindingProblem):
    """Cheating lower bound: shortest-path pursuit of the true person cell."""
    paths = _PathCache(problem)

    def policy(robot: int, person: int):
        return paths.action_toward(robot, person)

    return policy


@dataclass
class PersonTrialResult:
    captured: bool
    steps: int


def run_person_trial(
    problem: PersonFindingProblem,
    policy,
    rng: np.random.Generator,
    max_steps: int = 400,
    use_true_person: bool = False,
    on_step=None,
) -> PersonTrialResult:
    """One search episode.  Capture means sharing the person's cell.

    Once the sensor reveals the person, every controller switches to direct
    shortest-path pursuit until sight is lost again; controllers therefore
    differ only in how they search.  ``on_step`` (if given) is called with
    (robot, belief, detected) before each decision, for belief logging.
    """
    paths = _PathCache(problem)
    person = int(rng.integers(problem.free_count))
    robot = problem.start_index
    belief = problem.uniform_belief()
    revealed = None
    for t in range(max_steps):
        if robot == person:
            return PersonTrialResult(captured=True, steps=t)
        if on_step is not None:
            on_step(robot, belief, revealed)
        if revealed is not None:
            action = paths.action_toward(robot, revealed)
        elif use_true_person:
            action = policy(robot, person)
        else:
            action = policy(robot, belief)
        if action is not None:
            robot = problem.move_robot(robot, action)
        if robot == person:
            return PersonTrialResult(captured=True, steps=t + 1)
        person = problem.sample_person_step(person, rng)
        if robot == person:
            return PersonTrialResult(captured=True, steps=t + 1)
        belief = problem.diffuse(belief)
        seen = problem.visible[robot, person]
        detected = bool(seen and rng.random() >= problem.model.false_negative_rate)
        if detected:
            belief = np.zeros(problem.free_count)
            belief[person] = 1.0
            revealed = person
        else:
            belief, _ = problem.not_detected_update(belief, robot)
            revealed = None
    return PersonTrialResult(captured=False, steps=max_steps)


def collect_person_beliefs(
    problem: PersonFindingProblem,
    n: int,
    explore_prob: float,
    rng: np.random.Generator,
    max_episode_steps: int = 400,
) -> BeliefSet:
    """Record person beliefs along semi-random pursuit episodes."""
    if n < 1:
        raise ValueError("need at least one belief sample")
    ml = ml_person_heuristic(problem)
    columns = np.empty((problem.free_count, n))
    count = 0

    def recorder(robot, belief, revealed):
        nonlocal count
        if count < n:
            columns[:, count] = belief
            count += 1

    def policy(robot, belief):
        if rng.random() < explore_prob:
            return int(rng.integers(len(ROBOT_MOVES)))
        return ml(robot, belief)

    while count < n:
        run_person_trial(problem, policy, rng, max_steps=max_episode_steps, on_step=recorder)
    return BeliefSet(columns[:, :n])
