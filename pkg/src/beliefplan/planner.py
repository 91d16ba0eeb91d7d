"""Compressed belief-space MDP: discretize the learned surface, build
approximate reward/transition tables, and solve them by fitted value iteration.

The function approximator is an averager anchored on a finite prototype set:
either the occupied cells of a regular grid over the training coordinates, or
the training coordinates themselves (1-nearest-neighbor).  Every query
receives weight 1 on a single prototype, so value iteration is a max-norm
non-expansion and converges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .epca import EpcaConfig, compress, compress_batch
from .errors import ConfigurationError, NumericalError, StructuralError
from .pomdp import Pomdp, belief_predict, belief_update, observation_likelihoods, simulate_step

MAX_PROTOTYPES = 50_000


@dataclass(frozen=True)
class BeliefPrototypeSet:
    prototypes: np.ndarray  # K x l, one prototype per row
    kind: str  # "grid" or "1nn"
    grid_origin: np.ndarray | None = None
    grid_widths: np.ndarray | None = None
    cell_ids: dict | None = None  # occupied grid cell -> prototype row

    def __post_init__(self):
        protos = np.asarray(self.prototypes, dtype=float)
        if protos.ndim != 2 or protos.shape[0] < 1:
            raise StructuralError("prototype set must be a non-empty 2-d array")
        protos.setflags(write=False)
        object.__setattr__(self, "prototypes", protos)
        if self.kind not in ("grid", "1nn"):
            raise ConfigurationError(f"unknown approximator kind {self.kind!r}")

    def __len__(self) -> int:
        return self.prototypes.shape[0]


def build_prototypes(
    coords: np.ndarray,
    kind: str = "grid",
    resolution=None,
    cells_per_dim: int = 12,
    pad: float = 0.05,
    subsample: int | None = None,
    max_prototypes: int = MAX_PROTOTYPES,
) -> BeliefPrototypeSet:
    """Anchor set for the averager, from training coordinates (l x n).

    Grid kind: pad the bounding box, one prototype at the center of every
    occupied cell.  1-NN kind: the (deduplicated) training coordinates
    themselves, optionally subsampled to roughly ``subsample`` points.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] < 1:
        raise StructuralError("coords must be a non-empty l x n array")
    if kind == "1nn":
        pts = np.unique(coords.T, axis=0)
        if subsample is not None and subsample < pts.shape[0]:
            keep = np.linspace(0, pts.shape[0] - 1, subsample).round().astype(int)
            pts = pts[np.unique(keep)]
        if pts.shape[0] > max_prototypes:
            raise ConfigurationError(f"{pts.shape[0]} prototypes exceed the cap {max_prototypes}")
        return BeliefPrototypeSet(prototypes=pts, kind="1nn")
    if kind != "grid":
        raise ConfigurationError(f"unknown approximator kind {kind!r}")

    mins = coords.min(axis=1)
    span = coords.max(axis=1) - mins
    origin = mins - pad * span
    if resolution is None:
        widths = np.where(span > 0, span * (1 + 2 * pad) / cells_per_dim, 1.0)
    else:
        widths = np.broadcast_to(np.asarray(resolution, dtype=float), mins.shape).copy()
        if np.any(widths <= 0):
            raise ConfigurationError("grid resolution must be positive")
    cells = np.floor((coords - origin[:, None]) / widths[:, None]).astype(int)
    occupied = np.unique(cells.T, axis=0)
    if occupied.shape[0] > max_prototypes:
        raise ConfigurationError(f"{occupied.shape[0]} occupied cells exceed the cap {max_prototypes}")
    protos = origin + (occupied + 0.5) * widths
    cell_ids = {tuple(c): k for k, c in enumerate(occupied)}
    return BeliefPrototypeSet(
        prototypes=protos,
        kind="grid",
        grid_origin=origin,
        grid_widths=widths,
        cell_ids=cell_ids,
    )


def nearest_prototype(P: BeliefPrototypeSet, btilde: np.ndarray) -> int:
    d2 = ((P.prototypes - np.asarray(btilde, dtype=float)) ** 2).sum(axis=1)
    return int(np.argmin(d2))  # argmin takes the lowest index on ties


def approximator_weights(P: BeliefPrototypeSet, btilde: np.ndarray):
    """Averager weights for a query: nonnegative, summing to exactly 1.

    Both supported kinds put weight 1 on a single prototype; grid queries in
    unoccupied cells snap to the nearest prototype by Euclidean distance.
    """
    btilde = np.asarray(btilde, dtype=float)
    if P.kind == "grid":
        cell = tuple(np.floor((btilde - P.grid_origin) / P.grid_widths).astype(int))
        hit = P.cell_ids.get(cell)
        if hit is not None:
            return np.array([hit]), np.array([1.0])
    return np.array([nearest_prototype(P, btilde)]), np.array([1.0])


def _renormalized_reconstructions(U: np.ndarray, P: BeliefPrototypeSet) -> np.ndarray:
    """Prototype reconstructions mapped back onto the simplex, one per column."""
    z = U @ P.prototypes.T
    if np.any(z > 700.0):
        bad = int(np.argmax(z.max(axis=0)))
        raise NumericalError(f"reconstruction overflow at prototype {bad}")
    recon = np.exp(z)
    return recon / recon.sum(axis=0)


@dataclass
class LowDimMdp:
    rewards: np.ndarray  # K x A
    transitions: list  # per action, K x K sparse CSR
    discount: float
    terminal_actions: frozenset
    value: np.ndarray | None = None
    basis: np.ndarray | None = None
    source: Pomdp | None = None

    @property
    def prototype_count(self) -> int:
        return self.rewards.shape[0]


def build_reward(P: BeliefPrototypeSet, model: Pomdp, U: np.ndarray) -> np.ndarray:
    """Expected immediate reward of each action at each prototype's belief."""
    recon = _renormalized_reconstructions(U, P)
    return recon.T @ model.reward


def build_transitions(
    P: BeliefPrototypeSet,
    model: Pomdp,
    U: np.ndarray,
    cfg: EpcaConfig,
    z_floor: float = 1e-6,
) -> list:
    """Observation-marginalized prototype transition table, one CSR per action.

    For each (prototype, action): reconstruct, predict, enumerate
    observations above the likelihood floor, compress each posterior, and
    pour the observation probability onto the prototypes carrying the
    compressed point's weight.  Rows are renormalized to absorb floored mass.
    """
    K = len(P)
    recon = _renormalized_reconstructions(U, P)
    rows: list[list] = [[] for _ in range(model.action_count)]
    cols: list[list] = [[] for _ in range(model.action_count)]
    vals: list[list] = [[] for _ in range(model.action_count)]
    for i in range(K):
        for a in range(model.action_count):
            predicted = belief_predict(model, recon[:, i], a)
            likes = observation_likelihoods(model, predicted, a)
            live = np.flatnonzero(likes > z_floor)
            if live.size == 0:
                raise NumericalError(f"no observation above floor for prototype {i}, action {a}")
            posteriors = (model.observation[live, a, :] * predicted).T / likes[live]
            try:
                coords = compress_batch(
                    U, posteriors, cfg,
                    start=np.repeat(P.prototypes[i][:, None], live.size, axis=1),
                )
            except NumericalError as exc:
                raise NumericalError(f"compression failed at prototype {i}, action {a}: {exc}") from exc
            for k, z in enumerate(live):
                idx, w = approximator_weights(P, coords[:, k])
                rows[a].extend([i] * len(idx))
                cols[a].extend(idx.tolist())
                vals[a].extend((likes[z] * w).tolist())
    out = []
    for a in range(model.action_count):
        mat = sparse.coo_matrix(
            (vals[a], (rows[a], cols[a])), shape=(K, K)
        ).tocsr()
        row_sums = np.asarray(mat.sum(axis=1)).ravel()
        if np.any(row_sums <= 0):
            raise NumericalError(f"empty transition row for action {a}")
        mat = sparse.diags(1.0 / row_sums) @ mat
        out.append(mat.tocsr())
    return out


def build_low_dim_mdp(
    P: BeliefPrototypeSet,
    model: Pomdp,
    U: np.ndarray,
    cfg: EpcaConfig,
    z_floor: float = 1e-6,
    discount: float | None = None,
) -> LowDimMdp:
    return LowDimMdp(
        rewards=build_reward(P, model, U),
        transitions=build_transitions(P, model, U, cfg, z_floor=z_floor),
        discount=model.discount if discount is None else discount,
        terminal_actions=model.terminal_actions,
        basis=np.asarray(U, dtype=float),
        source=model,
    )


def value_iteration(mdp: LowDimMdp, tol: float = 1e-4, max_iters: int = 10_000) -> np.ndarray:
    """Synchronous fitted value iteration; stores and returns the fixed point."""
    K = mdp.prototype_count
    V = np.zeros(K)
    residual_prev = np.inf
    growth_streak = 0
    for _ in range(max_iters):
        Q = np.empty((K, mdp.rewards.shape[1]))
        for a in range(mdp.rewards.shape[1]):
            if a in mdp.terminal_actions:
                Q[:, a] = mdp.rewards[:, a]
            else:
                Q[:, a] = mdp.rewards[:, a] + mdp.discount * (mdp.transitions[a] @ V)
        V_new = Q.max(axis=1)
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        if residual < tol:
            mdp.value = V
            return V
        if residual > residual_prev:
            growth_streak += 1
            if growth_streak >= 100 and mdp.discount >= 1.0 and not mdp.terminal_actions:
                raise NumericalError("value iteration is diverging: residual grew 100 times in a row")
        else:
            growth_streak = 0
        residual_prev = residual
    mdp.value = V
    raise NumericalError(f"value iteration stopped at residual {residual:.3e} after {max_iters} iterations")


def _q_values(mdp: LowDimMdp, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    V = mdp.value
    q = np.empty(mdp.rewards.shape[1])
    for a in range(q.size):
        base = float(w @ mdp.rewards[idx, a])
        if a in mdp.terminal_actions:
            q[a] = base
        else:
            cont = float(w @ (mdp.transitions[a][idx] @ V))
            q[a] = base + mdp.discount * cont
    return q


def policy_action(mdp: LowDimMdp, P: BeliefPrototypeSet, btilde: np.ndarray) -> int:
    """Greedy one-step lookahead at the prototypes carrying the query's weight."""
    if mdp.value is None:
        raise ConfigurationError("run value_iteration before querying the policy")
    idx, w = approximator_weights(P, btilde)
    return int(np.argmax(_q_values(mdp, idx, w)))


@dataclass
class EpisodeStep:
    proto: int
    action: int
    obs: int
    reward: float
    next_proto: int | None
    next_coords: np.ndarray | None


@dataclass
class Episode:
    steps: list[EpisodeStep] = field(default_factory=list)
    total_reward: float = 0.0
    declared: bool = False
    final_reward: float = float("nan")

    @property
    def success(self) -> bool:
        return self.declared and self.final_reward > 0


def execute_policy(
    model: Pomdp,
    U: np.ndarray,
    mdp: LowDimMdp,
    P: BeliefPrototypeSet,
    rng: np.random.Generator,
    max_steps: int = 200,
    cfg: EpcaConfig | None = None,
) -> Episode:
    """Run one episode: exact filter, compress each belief, act greedily."""
    if cfg is None:
        cfg = EpcaConfig(rank=U.shape[1])
    episode = Episode()
    state = int(rng.choice(model.state_count, p=model.initial_belief))
    belief = model.initial_belief.copy()
    btilde = compress(U, belief, cfg)
    for _ in range(max_steps):
        proto = int(approximator_weights(P, btilde)[0][0])
        action = policy_action(mdp, P, btilde)
        state, obs, reward = simulate_step(model, state, action, rng)
        episode.total_reward += reward
        if action in model.terminal_actions:
            episode.steps.append(EpisodeStep(proto, action, obs, reward, None, None))
            episode.declared = True
            episode.final_reward = reward
            return episode
        belief, _ = belief_update(model, belief_predict(model, belief, action), action, obs)
        btilde = compress(U, belief, cfg, start=btilde)
        nxt = int(approximator_weights(P, btilde)[0][0])
        episode.steps.append(EpisodeStep(proto, action, obs, reward, nxt, btilde.copy()))
    return episode


def refine_prototypes(
    P: BeliefPrototypeSet,
    mdp: LowDimMdp,
    episodes: list[Episode],
    threshold: float = 0.2,
    min_visits: int = 10,
) -> BeliefPrototypeSet:
    """Split cells whose rollout successor statistics disagree with the model.

    Computes the total-variation distance between each visited (prototype,
    action) model row and the empirical successor distribution; cells above
    the threshold contribute their observed compressed beliefs as new 1-NN
    prototypes.  Prototypes are never removed.
    """
    K = len(P)
    counts: dict[tuple[int, int], dict[int, int]] = {}
    samples: dict[tuple[int, int], list[np.ndarray]] = {}
    for ep in episodes:
        for step in ep.steps:
            if step.next_proto is None:
                continue
            key = (step.proto, step.action)
            counts.setdefault(key, {})
            counts[key][step.next_proto] = counts[key].get(step.next_proto, 0) + 1
            samples.setdefault(key, []).append(step.next_coords)
    new_points = []
    for (i, a), succ in counts.items():
        total = sum(succ.values())
        if total < min_visits:
            continue
        empirical = np.zeros(K)
        for j, c in succ.items():
            empirical[j] = c / total
        model_row = np.asarray(mdp.transitions[a][i].todense()).ravel()
        tv = 0.5 * float(np.abs(model_row - empirical).sum())
        if tv > threshold:
            new_points.extend(samples[(i, a)])
    if not new_points:
        return P
    # keep original prototype rows first so existing indices remain valid
    seen = {tuple(row) for row in P.prototypes}
    extra = [row for row in np.unique(np.array(new_points), axis=0) if tuple(row) not in seen]
    if not extra:
        return P
    return BeliefPrototypeSet(
        prototypes=np.vstack([P.prototypes, np.array(extra)]),
        kind="1nn",
    )
