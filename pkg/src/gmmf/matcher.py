"""Frank-Wolfe graph-matching matched filter.

Each restart starts from a random point of the Birkhoff polytope, follows
Frank-Wolfe steps on the relaxed padded objective (gradient, linear
assignment direction, exact line search, convex update) and finally rounds
the doubly stochastic iterate to the nearest permutation. Restarts are
ranked by the objective of their rounded solution.

Only the template rows of a padded permutation enter the objective, so the
gradient, the assignment subproblem and the line-search coefficients are all
computed on ``m x n`` blocks. The padding rows are carried along only so
that the iterate stays an honest ``n x n`` doubly stochastic matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .graph import (
    CENTERED,
    SCHEMES,
    DimensionError,
    Pair,
    check_assignment,
    layers_of,
    objective,
)
from .lap import lap_max_reduced


@dataclass(frozen=True)
class FwConfig:
    """Solver settings.

    ``eta`` is the stopping tolerance on ``||P_t - P_{t-1}||_F``; ``None``
    means ``1e-6 * n``. ``seeds`` holds ``(template_node, background_node)``
    pairs that stay matched throughout.
    """

    lam: float = 0.0
    eta: Optional[float] = None
    max_iters: int = 100
    n_restarts: int = 1
    seeds: tuple = ()
    scheme: str = CENTERED
    master_seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown padding scheme {self.scheme!r}")
        object.__setattr__(self, "seeds", tuple((int(i), int(j)) for i, j in self.seeds))

    def tolerance(self, n: int) -> float:
        return 1e-6 * n if self.eta is None else self.eta


@dataclass(frozen=True)
class RestartResult:
    assignment: np.ndarray
    objective: float
    iterations: int
    converged: bool
    restart: int = -1


@dataclass(frozen=True)
class _Seeds:
    """Seed bookkeeping: fixed pairs plus the free template rows and columns."""

    rows: np.ndarray
    cols: np.ndarray
    free_rows: np.ndarray  # free template rows, i.e. a subset of range(m)
    free_cols: np.ndarray
    pad_rows: np.ndarray = field(repr=False, default=None)


def _seed_info(seeds, m: int, n: int) -> _Seeds:
    if isinstance(seeds, (int, np.integer)):
        seeds = [(i, i) for i in range(int(seeds))]
    pairs = np.asarray(list(seeds), dtype=np.intp).reshape(-1, 2)
    rows, cols = pairs[:, 0], pairs[:, 1]
    if len(pairs):
        if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
            raise ValueError("seed out of range")
        if len(np.unique(rows)) != len(rows) or len(np.unique(cols)) != len(cols):
            raise ValueError("seeds must be one-to-one")
    free_r = np.ones(m, dtype=bool)
    free_r[rows] = False
    free_c = np.ones(n, dtype=bool)
    free_c[cols] = False
    return _Seeds(rows, cols, np.flatnonzero(free_r), np.flatnonzero(free_c))


def restart_rng(master_seed: int, restart: int) -> np.random.Generator:
    """Counter-based generator keyed on ``(master_seed, restart)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, restart])))


def init_point(rng, n: int, seeds=(), gamma: Optional[float] = None) -> np.ndarray:
    """Random start ``gamma * J/n + (1 - gamma) * P`` with ``P`` uniform.

    With seeds the combination lives on the unseeded rows and columns only
    and the seeded entries are fixed to 1. ``gamma`` is drawn from U[0, 1]
    unless given.
    """
    if isinstance(seeds, (int, np.integer)):
        seeds = [(i, i) for i in range(int(seeds))]
    pairs = np.asarray(list(seeds), dtype=np.intp).reshape(-1, 2)
    if len(pairs) > n:
        raise ValueError("more seeds than nodes")
    free_r = np.setdiff1d(np.arange(n), pairs[:, 0])
    free_c = np.setdiff1d(np.arange(n), pairs[:, 1])
    k = len(free_r)
    if gamma is None:
        gamma = rng.uniform()
    P = np.zeros((n, n))
    P[pairs[:, 0], pairs[:, 1]] = 1.0
    if k:
        block = np.full((k, k), gamma / k)
        block[np.arange(k), rng.permutation(k)] += 1.0 - gamma
        P[np.ix_(free_r, free_c)] = block
    return P


def gradient(pp: Pair, P, S=None, lam: float = 0.0) -> np.ndarray:
    """Gradient of the relaxed objective with respect to the template rows.

    Returns ``sum_layers (At^T P Bt + At P Bt^T)[:m] + lam * S``; the padding
    rows of the full gradient are identically zero.
    """
    m, n = pp.m, pp.n
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[1] != n or P.shape[0] < m:
        raise DimensionError(f"P of shape {P.shape} incompatible with m={m}, n={n}")
    X = P[:m]
    grad = np.zeros((m, n))
    for layer in layers_of(pp):
        grad += layer.At_block.T @ (X @ layer.Bt) + layer.At_block @ (X @ layer.Bt.T)
    if S is not None and lam:
        S = np.asarray(S, dtype=float)
        if S.shape != (m, n):
            raise DimensionError(f"similarity must be {m}x{n}, got {S.shape}")
        grad += lam * S
    return grad


def search_direction(grad, seeds=()) -> np.ndarray:
    """Vertex of the Birkhoff polytope maximizing ``tr(grad^T Q)``.

    ``grad`` holds the ``m`` informative rows. Returns the permutation of
    ``range(n)`` (``perm[i]`` is row ``i``'s column): seeded rows keep their
    seed, free template rows follow the top-m reduced assignment, and the
    padding rows take the leftover columns in ascending order.
    """
    grad = np.asarray(grad, dtype=float)
    m, n = grad.shape
    info = _seed_info(seeds, m, n)
    return _direction(grad, info, n)


def _direction(grad: np.ndarray, info: _Seeds, n: int) -> np.ndarray:
    m = grad.shape[0]
    perm = np.empty(n, dtype=np.intp)
    perm[info.rows] = info.cols
    if len(info.free_rows):
        sub = grad[np.ix_(info.free_rows, info.free_cols)]
        sol = lap_max_reduced(sub)
        perm[info.free_rows] = info.free_cols[sol.assignment]
    used = np.zeros(n, dtype=bool)
    used[perm[:m]] = True
    perm[m:] = np.flatnonzero(~used)
    return perm


def _step_from_coefficients(a: float, b: float, scale: float) -> float:
    """Maximizer on [0, 1] of ``a g^2 + b g`` preferring ``g = 1`` on ties.

    Moves away from ``g = 1`` (keeping the current iterate) only when the
    gain beats rounding noise of size ``1e-10 * scale``.
    """
    best_gamma, best_val = 1.0, a + b
    tol = 1e-10 * max(1.0, scale)
    candidates = [(0.0, 0.0)]
    if a < 0:
        crit = -b / (2.0 * a)
        if 0.0 < crit < 1.0:
            candidates.append((crit, a * crit * crit + b * crit))
    for gamma, val in candidates:
        if val > best_val + tol:
            best_gamma, best_val = gamma, val
    return best_gamma


def line_search(pp: Pair, S, lam: float, P, Q) -> float:
    """Exact maximizer of ``f(gamma P + (1 - gamma) Q)`` over ``gamma`` in [0, 1].

    ``Q`` may be a permutation vector or a matrix. The objective is the
    quadratic ``f(Q) + b gamma + a gamma^2`` with ``D = P - Q``,
    ``a = tr(At D Bt D^T)`` and ``b = 2 tr(At Q Bt D^T) + lam tr(S D^T)``.
    """
    m, n = pp.m, pp.n
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q)
    if Q.ndim == 1:
        Qm = np.zeros((n, n))
        Qm[np.arange(n), Q] = 1.0
        Q = Qm
    X, Q1 = P[:m], Q[:m].astype(float)
    D = X - Q1
    a = b = 0.0
    for layer in layers_of(pp):
        a += float(np.sum(layer.At_block * (D @ layer.Bt @ D.T)))
        b += 2.0 * float(np.sum(layer.At_block * (Q1 @ layer.Bt @ D.T)))
    if S is not None and lam:
        b += lam * float(np.sum(np.asarray(S) * D))
    fP = sum(float(np.sum(layer.At_block * (X @ layer.Bt @ X.T))) for layer in layers_of(pp))
    return _step_from_coefficients(a, b, abs(fP) + abs(a) + abs(b))


def fw_solve(
    pp: Pair,
    S,
    config: FwConfig,
    rng: np.random.Generator,
    *,
    P0=None,
    grad_mask=None,
    rank_S=None,
    restart: int = -1,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> RestartResult:
    """Run one Frank-Wolfe restart and round the result to a permutation.

    Parameters
    ----------
    pp : PaddedPair or LayeredPair
    S : array_like, shape (m, n), optional
        Similarity used by the objective and line search.
    config : FwConfig
    rng : numpy.random.Generator
        Source of the random start when ``P0`` is not given.
    P0 : array_like, shape (n, n), optional
        Explicit doubly stochastic start.
    grad_mask : array_like, shape (m, n), optional
        Multiplied entrywise into every gradient before the assignment step.
    rank_S : array_like, optional
        Similarity used to score the rounded solution (defaults to ``S``).
    callback : callable, optional
        Called as ``callback(t, P)`` with the iterate at ``t = 0, 1, ...``.
        ``P`` is updated in place afterwards, so copy it to keep it.
    """
    m, n = pp.m, pp.n
    layers = layers_of(pp)
    lam = config.lam
    S = None if S is None else np.asarray(S, dtype=float)
    if S is not None and S.shape != (m, n):
        raise DimensionError(f"similarity must be {m}x{n}, got {S.shape}")
    info = _seed_info(config.seeds, m, n)
    eta = config.tolerance(n)

    P = init_point(rng, n, config.seeds) if P0 is None else np.array(P0, dtype=float)
    if P.shape != (n, n):
        raise DimensionError(f"P0 must be {n}x{n}, got {P.shape}")
    linear = np.zeros((m, n)) if S is None or not lam else lam * S

    X = P[:m]
    Y = [X @ layer.Bt for layer in layers]  # cached P_(1) Bt per layer
    if callback is not None:
        callback(0, P)

    converged = False
    t = 0
    rows = np.arange(n)
    sq_norm = float(np.sum(P * P))
    for t in range(1, config.max_iters + 1):
        grad = linear.copy()
        for layer, y in zip(layers, Y):
            grad += 2.0 * (layer.At_block @ y)
        if grad_mask is not None:
            grad *= grad_mask
        q = _direction(grad, info, n)
        q1 = q[:m]

        # quadratic coefficients of gamma -> f(Q + gamma (P - Q))
        D = X.copy()
        D[np.arange(m), q1] -= 1.0
        a = b = fP = 0.0
        for layer, y in zip(layers, Y):
            Bq = layer.Bt[q1]
            Z = y - Bq  # D_(1) Bt
            ZD = Z @ X.T - Z[:, q1]
            a += float(np.sum(layer.At_block * ZD))
            QBD = Bq @ X.T - Bq[:, q1]
            b += 2.0 * float(np.sum(layer.At_block * QBD))
            fP += float(np.sum(layer.At_block * (y @ X.T)))
        b += float(np.sum(linear * D))
        gamma = _step_from_coefficients(a, b, abs(fP) + abs(a) + abs(b))

        # ||P_new - P|| = (1 - gamma) ||P - Q|| with ||P - Q||^2 = ||P||^2 - 2<P, Q> + n
        inner = float(P[rows, q].sum())
        delta = (1.0 - gamma) * np.sqrt(max(sq_norm - 2.0 * inner + n, 0.0))
        sq_norm = gamma * gamma * sq_norm + 2.0 * gamma * (1.0 - gamma) * inner + (1.0 - gamma) ** 2 * n
        P *= gamma
        P[rows, q] += 1.0 - gamma
        if len(info.rows):
            P[info.rows] = 0.0
            P[info.rows, info.cols] = 1.0
        X = P[:m]
        Y = [gamma * y + (1.0 - gamma) * layer.Bt[q1] for layer, y in zip(layers, Y)]
        if callback is not None:
            callback(t, P)
        if delta <= eta:
            converged = True
            break

    perm = _direction(X, info, n)
    sigma = perm[:m].copy()
    score_S = S if rank_S is None else rank_S
    return RestartResult(sigma, objective(pp, sigma, score_S, lam), t, converged, restart)


def match_restarts(
    pp: Pair,
    S,
    config: FwConfig,
    *,
    grad_mask=None,
    init_hook: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    rank_S=None,
) -> list:
    """Run ``config.n_restarts`` independent restarts and rank them.

    Restart ``k`` draws its start from :func:`restart_rng` keyed on
    ``(config.master_seed, k)``, so results do not depend on execution
    order. The list is sorted by objective, highest first, ties by restart
    index. ``init_hook`` may rewrite each random start before solving.
    """
    results = []
    for k in range(config.n_restarts):
        rng = restart_rng(config.master_seed, k)
        P0 = init_point(rng, pp.n, config.seeds)
        if init_hook is not None:
            P0 = init_hook(P0)
        results.append(
            fw_solve(pp, S, config, rng, P0=P0, grad_mask=grad_mask, rank_S=rank_S, restart=k)
        )
    return rank_results(results)


def rank_results(results) -> list:
    return sorted(results, key=lambda r: (-r.objective, r.restart))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed of ``master_seed`` for the given keys."""
    state = np.random.SeedSequence([master_seed, *keys]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def with_seed(config: FwConfig, master_seed: int) -> FwConfig:
    return replace(config, master_seed=master_seed)


def validate_assignment(pp: Pair, sigma) -> np.ndarray:
    return check_assignment(sigma, pp.m, pp.n)
