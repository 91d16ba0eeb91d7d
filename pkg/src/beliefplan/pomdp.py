"""Discrete POMDP containers, exact Bayes filtering, and trajectory simulation.

Tensor layout: transition[s, a, s'] = p(s' | s, a), observation[z, a, s'] =
p(z | s', a), reward[s, a].  Models are immutable after construction and the
filter operations are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ImpossibleObservationError, StructuralError

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class Pomdp:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    initial_belief: np.ndarray
    terminal_actions: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        for name in ("transition", "observation", "reward", "initial_belief"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "terminal_actions", frozenset(int(a) for a in self.terminal_actions))
        S, A, Z = len(self.states), len(self.actions), len(self.observations)
        if self.transition.shape != (S, A, S):
            raise StructuralError(f"transition tensor must be {(S, A, S)}, got {self.transition.shape}")
        if self.observation.shape != (Z, A, S):
            raise StructuralError(f"observation tensor must be {(Z, A, S)}, got {self.observation.shape}")
        if self.reward.shape != (S, A):
            raise StructuralError(f"reward table must be {(S, A)}, got {self.reward.shape}")
        if self.initial_belief.shape != (S,):
            raise StructuralError("initial belief length must match the state count")

    @property
    def state_count(self) -> int:
        return len(self.states)

    @property
    def action_count(self) -> int:
        return len(self.actions)

    @property
    def observation_count(self) -> int:
        return len(self.observations)

    def action_index(self, name: str) -> int:
        return self.actions.index(name)


def validate(model: Pomdp) -> list[str]:
    """All invariant violations of a model, as human-readable strings."""
    out = []
    T, O, p0 = model.transition, model.observation, model.initial_belief
    row = T.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(row - 1.0) > STOCHASTIC_TOL)):
        out.append(f"transition row (s={model.states[s]}, a={model.actions[a]}) sums to {row[s, a]:.10f}")
    if np.any(T < 0):
        out.append("transition tensor has negative entries")
    col = O.sum(axis=0)
    for a, s in zip(*np.nonzero(np.abs(col - 1.0) > STOCHASTIC_TOL)):
        out.append(f"observation slice (a={model.actions[a]}, s'={model.states[s]}) sums to {col[a, s]:.10f}")
    if np.any(O < 0):
        out.append("observation tensor has negative entries")
    if np.any(p0 < 0) or abs(p0.sum() - 1.0) > STOCHASTIC_TOL:
        out.append(f"initial belief sums to {p0.sum():.10f} or has negative mass")
    if not 0.0 <= model.discount <= 1.0:
        out.append(f"discount {model.discount} outside [0, 1]")
    return out


def belief_predict(model: Pomdp, belief: np.ndarray, action: int) -> np.ndarray:
    """Belief after acting, before sensing: b_a(s') = sum_s T(s, a, s') b(s)."""
    return np.asarray(belief, dtype=float) @ model.transition[:, action, :]


def belief_update(model: Pomdp, predicted: np.ndarray, action: int, obs: int):
    """Condition a predicted belief on an observation.

    Returns the normalized posterior and the observation likelihood
    p(z | b_a).  A zero likelihood means the caller sampled an observation
    inconsistent with the predicted belief, which is a modeling fault.
    """
    like_per_state = model.observation[obs, action, :]
    unnorm = like_per_state * predicted
    likelihood = float(unnorm.sum())
    if likelihood <= 0.0:
        raise ImpossibleObservationError(
            f"observation {model.observations[obs]} has zero likelihood under action "
            f"{model.actions[action]}"
        )
    return unnorm / likelihood, likelihood


def expected_reward(model: Pomdp, belief: np.ndarray, action: int) -> float:
    return float(np.asarray(belief, dtype=float) @ model.reward[:, action])


def simulate_step(model: Pomdp, state: int, action: int, rng: np.random.Generator):
    """Sample (next state, observation, reward) for one step."""
    s2 = int(rng.choice(model.state_count, p=model.transition[state, action]))
    z = int(rng.choice(model.observation_count, p=model.observation[:, action, s2]))
    return s2, z, float(model.reward[state, action])


def observation_likelihoods(model: Pomdp, predicted: np.ndarray, action: int) -> np.ndarray:
    """p(z | b_a) for every observation; sums to 1 for a stochastic model."""
    return model.observation[:, action, :] @ predicted


# ---------------------------------------------------------------------------
# JSON spec format


def _tensor_to_json(arr: np.ndarray):
    # sparse triplet form pays off once most entries are zero
    nnz = int(np.count_nonzero(arr))
    if nnz * 4 < arr.size:
        idx = np.nonzero(arr)
        entries = [[*(int(i) for i in pos), float(arr[pos])] for pos in zip(*idx)]
        return {"shape": list(arr.shape), "triplets": entries}
    return arr.tolist()


def _tensor_from_json(obj, shape) -> np.ndarray:
    if isinstance(obj, dict):
        if tuple(obj["shape"]) != tuple(shape):
            raise StructuralError(f"tensor shape {obj['shape']} does not match expected {shape}")
        arr = np.zeros(shape)
        for entry in obj["triplets"]:
            *pos, val = entry
            arr[tuple(int(i) for i in pos)] = float(val)
        return arr
    arr = np.asarray(obj, dtype=float)
    if arr.shape != tuple(shape):
        raise StructuralError(f"tensor shape {arr.shape} does not match expected {shape}")
    return arr


def to_json_dict(model: Pomdp) -> dict:
    return {
        "kind": "pomdp",
        "states": list(model.states),
        "actions": list(model.actions),
        "observations": list(model.observations),
        "transition": _tensor_to_json(model.transition),
        "observation": _tensor_to_json(model.observation),
        "reward": model.reward.tolist(),
        "discount": model.discount,
        "initial_belief": model.initial_belief.tolist(),
        "terminal_actions": sorted(model.actions[a] for a in model.terminal_actions),
    }


def from_json_dict(obj: dict) -> Pomdp:
    states = list(obj["states"])
    actions = list(obj["actions"])
    observations = list(obj["observations"])
    S, A, Z = len(states), len(actions), len(observations)
    terminal = frozenset(actions.index(name) for name in obj.get("terminal_actions", []))
    return Pomdp(
        states=tuple(states),
        actions=tuple(actions),
        observations=tuple(observations),
        transition=_tensor_from_json(obj["transition"], (S, A, S)),
        observation=_tensor_from_json(obj["observation"], (Z, A, S)),
        reward=np.asarray(obj["reward"], dtype=float),
        discount=float(obj["discount"]),
        initial_belief=np.asarray(obj["initial_belief"], dtype=float),
        terminal_actions=terminal,
    )


def save_pomdp(model: Pomdp, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_dict(model), fh)
        fh.write("\n")


def load_pomdp(path) -> Pomdp:
    with open(path, encoding="utf-8") as fh:
        return from_json_dict(json.load(fh))
