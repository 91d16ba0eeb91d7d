"""Exponential-family PCA for belief matrices, plus a conventional-PCA baseline.

A matrix B (states x samples, columns are beliefs) is factored as
B ~ exp(U @ Bt) where U is a tall basis matrix (states x rank) and Bt holds
the low-dimensional coordinates (rank x samples).  The loss is the
unnormalized KL divergence between data and reconstruction, reduced to

    L(B, U, Bt) = sum_j [ sum(exp(U @ Bt[:, j])) - B[:, j] . (U @ Bt[:, j]) ]

after dropping terms that depend only on the data.  Minimization alternates
damped Newton solves over columns of Bt and rows of U; each one-sided
subproblem is convex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, StructuralError

# exp(x) overflows float64 just past 709; anything above this is treated as
# a numerical failure instead of silently saturating
MAX_EXPONENT = 700.0

MAX_BACKTRACK = 20

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class BeliefSet:
    """A bundle of sampled beliefs, one per column."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise StructuralError("belief set must be a 2-d array")
        if np.any(data < 0):
            raise StructuralError("belief set has negative entries")
        sums = data.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
            j = int(np.argmax(np.abs(sums - 1.0)))
            raise StructuralError(
                f"belief column {j} sums to {sums[j]:.12f}, expected 1"
            )
        object.__setattr__(self, "data", data)

    @property
    def state_count(self) -> int:
        return self.data.shape[0]

    @property
    def sample_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EpcaConfig:
    """Knobs for the alternating Newton optimization."""

    rank: int
    max_sweeps: int = 200
    loss_tolerance: float = 1e-6
    newton_regularizer: float = 1e-5
    line_search_shrink: float = 0.5
    seed: int = 0
    compress_max_iters: int = 200

    def __post_init__(self):
        if self.rank < 1:
            raise StructuralError("rank must be positive")
        if self.newton_regularizer <= 0:
            raise StructuralError("newton_regularizer must be > 0")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise StructuralError("line_search_shrink must lie in (0, 1)")


@dataclass
class EpcaResult:
    """Fitted factors plus the optimization trace."""

    basis: np.ndarray
    coords: np.ndarray
    loss_trace: list[float] = field(default_factory=list)
    grad_norm_basis: float = float("nan")
    grad_norm_coords: float = float("nan")


def _check_dims(B: np.ndarray, U: np.ndarray, Bt: np.ndarray) -> None:
    if U.ndim != 2 or Bt.ndim != 2 or B.ndim != 2:
        raise StructuralError("factors and data must be 2-d arrays")
    if B.shape[0] != U.shape[0]:
        raise StructuralError(
            f"state dimension mismatch: data has {B.shape[0]} rows, basis {U.shape[0]}"
        )
    if U.shape[1] != Bt.shape[0]:
        raise StructuralError(
            f"rank mismatch: basis has {U.shape[1]} columns, coords {Bt.shape[0]} rows"
        )
    if B.shape[1] != Bt.shape[1]:
        raise StructuralError(
            f"sample mismatch: data has {B.shape[1]} columns, coords {Bt.shape[1]}"
        )


def _safe_exp(Z: np.ndarray) -> np.ndarray:
    # overflow produces +inf which the callers treat as an infinite loss
    with np.errstate(over="ignore"):
        return np.exp(Z)


def epca_loss(B, U, Bt) -> float:
    """Total unnormalized-KL loss of the factorization (data terms dropped)."""
    B = np.asarray(B, dtype=float)
    U = np.asarray(U, dtype=float)
    Bt = np.asarray(Bt, dtype=float)
    _check_dims(B, U, Bt)
    Z = U @ Bt
    with np.errstate(over="ignore"):
        return float(_safe_exp(Z).sum() - (B * Z).sum())


def _column_losses(B, U, Bt) -> np.ndarray:
    Z = U @ Bt
    with np.errstate(over="ignore"):
        return _safe_exp(Z).sum(axis=0) - (B * Z).sum(axis=0)


def loss_gradients(B, U, Bt) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the loss wrt the basis and the coordinates."""
    B = np.asarray(B, dtype=float)
    U = np.asarray(U, dtype=float)
    Bt = np.asarray(Bt, dtype=float)
    _check_dims(B, U, Bt)
    resid = _safe_exp(U @ Bt) - B
    return resid @ Bt.T, U.T @ resid


def newton_update_coords(U, b, btilde, regularizer) -> np.ndarray:
    """One undamped Newton target for a single coordinate column.

    Solves (U'DU + reg*I) x = U'D(U btilde + D^-1 (b - e)) with
    D = diag(e), e = exp(U @ btilde).  The caller is responsible for
    line search; this returns the raw solution of the damped system.
    """
    U = np.asarray(U, dtype=float)
    b = np.asarray(b, dtype=float)
    btilde = np.asarray(btilde, dtype=float)
    e = _safe_exp(U @ btilde)
    if not np.all(np.isfinite(e)):
        raise NumericalError("exponent overflow in coordinate update")
    UD = U.T * e  # l x S, rows scaled by the weights
    M = UD @ U + regularizer * np.eye(U.shape[1])
    rhs = UD @ (U @ btilde) + U.T @ (b - e)
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal matrix in coordinate update: {exc}") from exc


def newton_update_basis(Bt, B, u_row, row_index, regularizer) -> np.ndarray:
    """One undamped Newton target for a single basis row (mirror of the column solve)."""
    Bt = np.asarray(Bt, dtype=float)
    B = np.asarray(B, dtype=float)
    u_row = np.asarray(u_row, dtype=float)
    e = _safe_exp(u_row @ Bt)
    if not np.all(np.isfinite(e)):
        raise NumericalError(f"exponent overflow in basis update, row {row_index}")
    BD = Bt * e  # l x n, columns scaled
    M = BD @ Bt.T + regularizer * np.eye(Bt.shape[0])
    rhs = BD @ (Bt.T @ u_row) + Bt @ (B[row_index] - e)
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"singular normal matrix in basis update, row {row_index}: {exc}"
        ) from exc


def _batched_coord_step(B, U, Bt, regularizer):
    """Newton targets for every coordinate column at once (columns are independent)."""
    the_l = U.shape[1]
    E = _safe_exp(U @ Bt)
    M = np.einsum("si,sk,sj->kij", U, E, U, optimize=True)
    rhs = np.einsum("kij,jk->ki", M, Bt) + (B - E).T @ U
    M += regularizer * np.eye(the_l)
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0].T  # back to l x n
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal matrix in batched coordinate step: {exc}") from exc


def _batched_basis_step(B, U, Bt, regularizer):
    """Newton targets for every basis row at once (rows are independent)."""
    the_l = U.shape[1]
    E = _safe_exp(U @ Bt)  # S x n
    M = np.einsum("an,in,bn->iab", Bt, E, Bt, optimize=True)
    rhs = np.einsum("iab,ib->ia", M, U) + (B - E) @ Bt.T
    M += regularizer * np.eye(the_l)
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]  # S x l
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal matrix in batched basis step: {exc}") from exc


def _backtrack_columns(B, U, Bt, targets, shrink):
    """Move each column toward its Newton target, halving steps that raise its loss."""
    loss0 = _column_losses(B, U, Bt)
    delta = targets - Bt
    step = np.ones(Bt.shape[1])
    active = np.ones(Bt.shape[1], dtype=bool)
    out = Bt.copy()
    for _ in range(MAX_BACKTRACK):
        if not active.any():
            break
        trial = Bt[:, active] + step[active] * delta[:, active]
        trial_loss = _column_losses(B[:, active], U, trial)
        ok = trial_loss <= loss0[active]
        idx = np.flatnonzero(active)
        out[:, idx[ok]] = trial[:, ok]
        active[idx[ok]] = False
        step[idx[~ok]] *= shrink
    return out


def _backtrack_rows(B, U, Bt, targets, shrink):
    BtT = Bt.T
    UT = U.T
    # a row update of U is a column update of the transposed problem
    return _backtrack_columns(B.T, BtT, UT, targets.T, shrink).T


def epca_fit(beliefs: BeliefSet, cfg: EpcaConfig) -> EpcaResult:
    """Alternating damped-Newton factorization of a belief set.

    Returns the fitted basis/coordinates, the per-sweep loss trace
    (non-increasing by construction), and the gradient norms at exit.
    """
    B = beliefs.data
    S, n = B.shape
    if cfg.rank > S:
        raise StructuralError(f"rank {cfg.rank} exceeds state count {S}")
    rng = np.random.default_rng(cfg.seed)
    U = rng.uniform(-0.01, 0.01, size=(S, cfg.rank))
    Bt = rng.uniform(-0.01, 0.01, size=(cfg.rank, n))

    trace = [epca_loss(B, U, Bt)]
    for sweep in range(cfg.max_sweeps):
        targets = _batched_coord_step(B, U, Bt, cfg.newton_regularizer)
        Bt = _backtrack_columns(B, U, Bt, targets, cfg.line_search_shrink)
        targets = _batched_basis_step(B, U, Bt, cfg.newton_regularizer)
        U = _backtrack_rows(B, U, Bt, targets, cfg.line_search_shrink)
        loss = epca_loss(B, U, Bt)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at sweep {sweep}")
        trace.append(loss)
        prev = trace[-2]
        if prev - loss <= cfg.loss_tolerance * max(abs(prev), 1.0):
            break

    gU, gBt = loss_gradients(B, U, Bt)
    return EpcaResult(
        basis=U,
        coords=Bt,
        loss_trace=trace,
        grad_norm_basis=float(np.linalg.norm(gU)),
        grad_norm_coords=float(np.linalg.norm(gBt)),
    )


def compress_batch(U, cols, cfg: EpcaConfig, start=None) -> np.ndarray:
    """Project each column of ``cols`` onto the learned surface (convex per column)."""
    U = np.asarray(U, dtype=float)
    cols = np.asarray(cols, dtype=float)
    if cols.ndim != 2 or cols.shape[0] != U.shape[0]:
        raise StructuralError("columns must match the basis state dimension")
    n = cols.shape[1]
    Bt = np.zeros((U.shape[1], n)) if start is None else np.array(start, dtype=float)
    loss = _column_losses(cols, U, Bt)
    for _ in range(cfg.compress_max_iters):
        targets = _batched_coord_step(cols, U, Bt, cfg.newton_regularizer)
        Bt = _backtrack_columns(cols, U, Bt, targets, cfg.line_search_shrink)
        new_loss = _column_losses(cols, U, Bt)
        if np.all(loss - new_loss <= cfg.loss_tolerance * np.maximum(np.abs(loss), 1.0)):
            return Bt
        loss = new_loss
    # one more step to see whether the iteration had actually settled
    targets = _batched_coord_step(cols, U, Bt, cfg.newton_regularizer)
    probe = _backtrack_columns(cols, U, Bt, targets, cfg.line_search_shrink)
    gain = loss - _column_losses(cols, U, probe)
    bad = gain > 1e3 * cfg.loss_tolerance * np.maximum(np.abs(loss), 1.0)
    if bad.any():
        raise NumericalError(
            f"compression failed to converge for column {int(np.flatnonzero(bad)[0])}"
        )
    return probe


def compress(U, b, cfg: EpcaConfig, start=None) -> np.ndarray:
    """Low-dimensional coordinates of one belief under a trained basis."""
    b = np.asarray(b, dtype=float)
    start2 = None if start is None else np.asarray(start, dtype=float).reshape(-1, 1)
    return compress_batch(U, b.reshape(-1, 1), cfg, start=start2)[:, 0]


def reconstruct(U, btilde) -> np.ndarray:
    """Map coordinates back to a strictly positive high-dimensional vector."""
    U = np.asarray(U, dtype=float)
    btilde = np.asarray(btilde, dtype=float)
    z = U @ btilde
    if np.any(z > MAX_EXPONENT):
        raise NumericalError(f"reconstruction exponent {z.max():.1f} exceeds {MAX_EXPONENT}")
    return np.exp(z)


def kl_divergence(b, r) -> float:
    """KL(b || r) with r rescaled to sum to 1; 0 log 0 terms contribute zero."""
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)
    if b.shape != r.shape:
        raise StructuralError("belief and reconstruction must have the same shape")
    total = r.sum()
    if total <= 0:
        raise StructuralError("reconstruction must have positive mass")
    r = r / total
    mask = b > 0
    if np.any(r[mask] == 0):
        return float("inf")
    return float(np.sum(b[mask] * np.log(b[mask] / r[mask])))


def nonneg_rescale(v, floor=1e-12) -> np.ndarray:
    """Shift a reconstruction to be nonnegative and rescale it to sum to 1.

    The floor keeps entries strictly positive so KL against the result stays
    finite; mass added this way is negligible at the floor's default.
    """
    v = np.asarray(v, dtype=float)
    shifted = v - min(v.min(), 0.0)
    shifted = np.maximum(shifted, floor)
    return shifted / shifted.sum()


def pca_fit(beliefs: BeliefSet, rank: int):
    """Mean-centered truncated-SVD factorization (squared-error loss)."""
    B = beliefs.data
    if rank > min(B.shape):
        raise StructuralError(f"rank {rank} exceeds min(data dims) {min(B.shape)}")
    mean = B.mean(axis=1)
    centered = B - mean[:, None]
    left, _, _ = np.linalg.svd(centered, full_matrices=False)
    basis = left[:, :rank]
    coords = basis.T @ centered
    return basis, mean, coords


def pca_reconstruct(basis, mean, coords) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    mean = np.asarray(mean, dtype=float)
    coords = np.asarray(coords, dtype=float)
    return mean[..., None] + basis @ coords if coords.ndim == 2 else mean + basis @ coords


def orthonormalize(U, Bt) -> tuple[np.ndarray, np.ndarray]:
    """Rotate the factors so the basis has orthonormal columns; UBt is unchanged."""
    U = np.asarray(U, dtype=float)
    Bt = np.asarray(Bt, dtype=float)
    if U.shape[1] != Bt.shape[0]:
        raise StructuralError("factor inner dimensions disagree")
    Q, R = np.linalg.qr(U)
    diag = np.abs(np.diag(R))
    if np.any(diag < 1e-12 * max(diag.max(), 1.0)):
        raise NumericalError("basis is numerically rank-deficient")
    return Q, R @ Bt


def reconstruction_errors(B, recon) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (KL, squared L2) errors between beliefs and reconstructions.

    KL rescales the reconstruction column to the simplex first; the squared
    L2 error is taken against the raw reconstruction.
    """
    B = np.asarray(B, dtype=float)
    recon = np.asarray(recon, dtype=float)
    if B.shape != recon.shape:
        raise StructuralError("data and reconstruction shapes disagree")
    kls = np.array([kl_divergence(B[:, j], recon[:, j]) for j in range(B.shape[1])])
    l2 = ((B - recon) ** 2).sum(axis=0)
    return kls, l2
