"""Planner for the person-finding problem: known robot cell, compressed person belief.

The planner state is (robot cell, person-belief prototype) plus one absorbing
success state entered on detection.  Robot motion is deterministic; the
person-belief side of the transition runs the diffusion + visibility filter
through the compression, exactly like the flat planner's pipeline but with
only two observation outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controllers import _PathCache
from .epca import EpcaConfig, compress, compress_batch
from .errors import ConfigurationError, NumericalError
from .personfind import ROBOT_MOVES, PersonFindingProblem
from .planner import BeliefPrototypeSet, nearest_prototype

SUCCESS = -1  # successor marker for the absorbing detection outcome


@dataclass
class FactoredPlan:
    problem: PersonFindingProblem
    basis: np.ndarray
    cfg: EpcaConfig
    prototypes: BeliefPrototypeSet
    rewards: np.ndarray  # (F*K, A)
    p_detect: np.ndarray  # (F*K, A)
    next_state: np.ndarray  # (F*K, A) int, successor when not detected
    discount: float
    terminal_reward: float
    value: np.ndarray | None = None

    def state_index(self, robot: int, proto: int) -> int:
        return robot * len(self.prototypes) + proto

    @property
    def state_count(self) -> int:
        return self.problem.free_count * len(self.prototypes)


def plan_factored(
    problem: PersonFindingProblem,
    U: np.ndarray,
    P: BeliefPrototypeSet,
    cfg: EpcaConfig,
    discount: float = 0.95,
    terminal_reward: float = 1.0,
    overlap_floor: float = 1e-6,
) -> FactoredPlan:
    """Build and solve the augmented-state search MDP.

    Rewards are the (diffused) person-belief mass at the robot's destination
    cell plus the detection probability times the terminal reward; detection
    transitions to the absorbing success state.
    """
    U = np.asarray(U, dtype=float)
    F = problem.free_count
    K = len(P)
    A = len(ROBOT_MOVES)
    fn = problem.model.false_negative_rate

    z = U @ P.prototypes.T
    if np.any(z > 700.0):
        raise NumericalError("prototype reconstruction overflow")
    recon = np.exp(z)
    recon /= recon.sum(axis=0)
    diffused = problem.diffusion.T @ recon  # belief after the person's move, per prototype

    # detection probability for every (robot cell, prototype) pair at once
    p_det = (1.0 - fn) * (problem.visible @ diffused)  # F x K

    # not-detected successor prototype for every (robot cell, prototype)
    succ = np.empty((F, K), dtype=int)
    damp = np.where(problem.visible, fn, 1.0)  # rows: robot cell
    for i in range(K):
        base = diffused[:, i]
        free_coords = compress(U, base, cfg, start=P.prototypes[i])
        free_proto = nearest_prototype(P, free_coords)
        touched = np.flatnonzero(p_det[:, i] > overlap_floor)
        succ[:, i] = free_proto
        if touched.size:
            posts = damp[touched] * base[None, :]
            posts = (posts / posts.sum(axis=1, keepdims=True)).T  # F x len(touched)
            coords = compress_batch(
                U, posts, cfg,
                start=np.repeat(P.prototypes[i][:, None], touched.size, axis=1),
            )
            for t, r in enumerate(touched):
                succ[r, i] = nearest_prototype(P, coords[:, t])

    rewards = np.empty((F * K, A))
    p_detect = np.empty((F * K, A))
    next_state = np.empty((F * K, A), dtype=int)
    move_to = np.array(
        [[problem.move_robot(r, a) for a in range(A)] for r in range(F)], dtype=int
    )
    for r in range(F):
        for a in range(A):
            r2 = move_to[r, a]
            rows = slice(r * K, (r + 1) * K)
            pd = p_det[r2]
            rewards[rows, a] = diffused[r2] + pd * terminal_reward
            p_detect[rows, a] = pd
            next_state[rows, a] = r2 * K + succ[r2]

    plan = FactoredPlan(
        problem=problem,
        basis=U,
        cfg=cfg,
        prototypes=P,
        rewards=rewards,
        p_detect=p_detect,
        next_state=next_state,
        discount=discount,
        terminal_reward=terminal_reward,
    )
    solve_factored(plan)
    return plan


def solve_factored(plan: FactoredPlan, tol: float = 1e-6, max_iters: int = 10_000) -> np.ndarray:
    if plan.discount >= 1.0:
        raise ConfigurationError("the search MDP needs a discount below 1")
    V = np.zeros(plan.state_count)
    for _ in range(max_iters):
        cont = V[plan.next_state]  # (F*K, A)
        Q = plan.rewards + plan.discount * (1.0 - plan.p_detect) * cont
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            plan.value = V_new
            return V_new
    plan.value = V
    raise NumericalError(f"factored value iteration did not converge in {max_iters} iterations")


def factored_q_values(plan: FactoredPlan, robot: int, proto: int) -> np.ndarray:
    s = plan.state_index(robot, proto)
    cont = plan.value[plan.next_state[s]]
    return plan.rewards[s] + plan.discount * (1.0 - plan.p_detect[s]) * cont


def factored_policy(plan: FactoredPlan):
    """Person-search policy closure for the generic trial runner."""

    def policy(robot: int, belief: np.ndarray):
        coords = compress(plan.basis, belief, plan.cfg)
        proto = nearest_prototype(plan.prototypes, coords)
        return int(np.argmax(factored_q_values(plan, robot, proto)))

    return policy


def run_factored_episode(
    plan: FactoredPlan,
    rng: np.random.Generator,
    max_steps: int = 400,
    log: list | None = None,
):
    """Like controllers.run_person_trial but aware of planner-state logging."""
    problem = plan.problem
    paths = _PathCache(problem)
    person = int(rng.integers(problem.free_count))
    robot = problem.start_index
    belief = problem.uniform_belief()
    revealed = None
    prev: tuple[int, int] | None = None  # (planner state, action) awaiting a successor
    btilde = compress(plan.basis, belief, plan.cfg)
    for t in range(max_steps):
        if robot == person:
            return True, t
        if revealed is not None:
            action = paths.action_toward(robot, revealed)
            prev = None
        else:
            proto = nearest_prototype(plan.prototypes, btilde)
            state = plan.state_index(robot, proto)
            if prev is not None and log is not None:
                log.append((prev[0], prev[1], state, btilde.copy()))
            action = int(np.argmax(factored_q_values(plan, robot, proto)))
            prev = (state, action)
        if action is not None:
            robot = problem.move_robot(robot, action)
        if robot == person:
            return True, t + 1
        person = problem.sample_person_step(person, rng)
        if robot == person:
            return True, t + 1
        belief = problem.diffuse(belief)
        seen = problem.visible[robot, person]
        detected = bool(seen and rng.random() >= problem.model.false_negative_rate)
        if detected:
            if prev is not None and log is not None:
                log.append((prev[0], prev[1], SUCCESS, None))
            prev = None
            belief = np.zeros(problem.free_count)
            belief[person] = 1.0
            revealed = person
        else:
            belief, _ = problem.not_detected_update(belief, robot)
            revealed = None
        btilde = compress(plan.basis, belief, plan.cfg, start=btilde)
    return False, max_steps


def refine_factored(
    plan: FactoredPlan,
    log: list,
    threshold: float = 0.2,
    min_visits: int = 10,
) -> BeliefPrototypeSet:
    """Prototype set grown where the model's successor rows disagree with rollouts."""
    counts: dict[tuple[int, int], dict[int, int]] = {}
    samples: dict[tuple[int, int], list[np.ndarray]] = {}
    for state, action, successor, coords in log:
        key = (state, action)
        counts.setdefault(key, {})
        counts[key][successor] = counts[key].get(successor, 0) + 1
        if coords is not None:
            samples.setdefault(key, []).append(coords)
    new_points = []
    for (state, action), succ in counts.items():
        total = sum(succ.values())
        if total < min_visits:
            continue
        pd = plan.p_detect[state, action]
        ns = plan.next_state[state, action]
        tv = 0.0
        for successor, c in succ.items():
            emp = c / total
            mod = pd if successor == SUCCESS else ((1.0 - pd) if successor == ns else 0.0)
            tv += abs(mod - emp)
        # mass the model puts on outcomes never observed empirically
        if SUCCESS not in succ:
            tv += pd
        if ns not in succ:
            tv += 1.0 - pd
        tv *= 0.5
        if tv > threshold:
            new_points.extend(samples.get((state, action), []))
    if not new_points:
        return plan.prototypes
    seen = {tuple(row) for row in plan.prototypes.prototypes}
    extra = [row for row in np.unique(np.array(new_points), axis=0) if tuple(row) not in seen]
    if not extra:
        return plan.prototypes
    return BeliefPrototypeSet(
        prototypes=np.vstack([plan.prototypes.prototypes, np.array(extra)]),
        kind="1nn",
    )
