"""Graphs, padding transforms and the padded matching objective.

Template graphs have ``m`` nodes and background graphs ``n >= m`` nodes.
Matching works over full ``n x n`` permutations; only the first ``m`` rows
(the template rows) ever influence the objective, so an assignment is
represented by the integer array ``sigma`` of length ``m`` with
``sigma[i]`` the background node matched to template node ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

CENTERED = "centered"
NAIVE = "naive"
SCHEMES = (CENTERED, NAIVE)


class DimensionError(ValueError):
    """Raised when matrix or graph sizes are inconsistent."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, loop-free graph stored as a dense symmetric adjacency.

    Parameters
    ----------
    adj : array_like, shape (n, n)
        Symmetric matrix with zero diagonal.
    weighted : bool, optional
        Whether edge weights are arbitrary reals. Inferred from ``adj`` when
        omitted: a graph is weighted iff some nonzero entry differs from 1.
    """

    adj: np.ndarray
    weighted: bool = None  # type: ignore[assignment]

    def __post_init__(self):
        adj = np.array(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionError(f"adjacency must be square, got shape {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise ValueError("adjacency has non-finite entries")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        binary = bool(np.all((adj == 0) | (adj == 1)))
        weighted = (not binary) if self.weighted is None else bool(self.weighted)
        if not weighted and not binary:
            raise ValueError("unweighted graph must have 0/1 entries")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)
        object.__setattr__(self, "weighted", weighted)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adj, 1)))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.weighted == other.weighted and np.array_equal(self.adj, other.adj)

    def __repr__(self):
        kind = "weighted" if self.weighted else "binary"
        return f"Graph(n={self.n}, edges={self.n_edges}, {kind})"

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_edges(cls, n: int, edges, weights=None) -> "Graph":
        adj = np.zeros((n, n))
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=float)
        adj[edges[:, 0], edges[:, 1]] = w
        adj[edges[:, 1], edges[:, 0]] = w
        return cls(adj)


@dataclass(frozen=True, eq=False)
class PaddedPair:
    """A template/background pair after padding to a common size ``n``.

    Only the informative ``m x m`` block of the padded template is stored;
    the full ``n x n`` matrix is available as :attr:`At`.
    """

    scheme: str
    At_block: np.ndarray
    Bt: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "m", self.At_block.shape[0])
        self.At_block.setflags(write=False)
        self.Bt.setflags(write=False)

    @property
    def n(self) -> int:
        return self.Bt.shape[0]

    @property
    def At(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[: self.m, : self.m] = self.At_block
        return out


@dataclass(frozen=True)
class LayeredPair:
    """Several naive-padded layers sharing the same ``m`` and ``n``."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a layered pair needs at least one layer")
        m, n = layers[0].m, layers[0].n
        for pp in layers:
            if (pp.m, pp.n) != (m, n):
                raise DimensionError("all layers must share m and n")
            if pp.scheme != NAIVE:
                raise ValueError("multiplex layers must use naive padding")
        object.__setattr__(self, "layers", layers)

    @property
    def m(self) -> int:
        return self.layers[0].m

    @property
    def n(self) -> int:
        return self.layers[0].n


Pair = Union[PaddedPair, LayeredPair]


def layers_of(pp: Pair) -> tuple:
    return pp.layers if isinstance(pp, LayeredPair) else (pp,)


def pad(A: Graph, B: Graph, scheme: str = CENTERED) -> PaddedPair:
    """Pad template ``A`` to the size of background ``B``.

    ``centered`` maps ``A -> (2A - J_m) (+) 0`` and ``B -> 2B - J_n`` where
    ``J`` is the hollow all-ones matrix; ``naive`` maps ``A -> A (+) 0`` and
    keeps ``B``. Centered padding is only defined for binary graphs.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown padding scheme {scheme!r}")
    if A.n > B.n:
        raise DimensionError(f"template has {A.n} nodes, background only {B.n}")
    if scheme == CENTERED:
        if A.weighted or B.weighted:
            raise ValueError("centered padding is undefined for weighted graphs")
        return PaddedPair(scheme, _center(A.adj), _center(B.adj))
    return PaddedPair(scheme, A.adj.copy(), B.adj.copy())


def pad_layers(As: Sequence[Graph], Bs: Sequence[Graph]) -> LayeredPair:
    if len(As) != len(Bs):
        raise DimensionError("template and background need the same number of layers")
    return LayeredPair(tuple(pad(A, B, NAIVE) for A, B in zip(As, Bs)))


def _center(adj: np.ndarray) -> np.ndarray:
    out = 2.0 * adj - 1.0
    np.fill_diagonal(out, 0.0)
    return out


def check_assignment(sigma, m: int, n: int) -> np.ndarray:
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or len(sigma) != m:
        raise DimensionError(f"assignment must have length {m}, got shape {sigma.shape}")
    if not np.issubdtype(sigma.dtype, np.integer):
        raise TypeError("assignment entries must be integers")
    if len(sigma) and (sigma.min() < 0 or sigma.max() >= n):
        raise ValueError("assignment entries out of range")
    if len(np.unique(sigma)) != len(sigma):
        raise ValueError("assignment is not injective")
    return sigma.astype(np.intp)


def check_permutation(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError(f"not a permutation of range({n})")
    return perm.astype(np.intp)


def complete_permutation(sigma, n: int) -> np.ndarray:
    """Extend an injection on the template rows to a permutation of ``n``.

    The padding rows take the unused background nodes in ascending order.
    """
    sigma = np.asarray(sigma, dtype=np.intp)
    free = np.ones(n, dtype=bool)
    free[sigma] = False
    return np.concatenate([sigma, np.flatnonzero(free)])


def _check_similarity(S, m: int, n: int):
    if S is None:
        return None
    S = np.asarray(S, dtype=float)
    if S.shape != (m, n):
        raise DimensionError(f"similarity must be {m}x{n}, got {S.shape}")
    return S


def objective(pp: Pair, perm, S=None, lam: float = 0.0) -> float:
    """Padded objective ``tr(At P Bt P^T) + lam * tr(S P_(1)^T)``.

    ``perm`` may be a full permutation of the background or just its first
    ``m`` entries; the remaining rows never contribute.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    m, n = pp.m, pp.n
    perm = np.asarray(perm)
    if perm.ndim != 1 or not m <= len(perm) <= n:
        raise DimensionError(f"permutation length {len(perm)} incompatible with m={m}, n={n}")
    sigma = perm[:m]
    S = _check_similarity(S, m, n)
    value = 0.0
    for layer in layers_of(pp):
        value += float(np.sum(layer.At_block * layer.Bt[np.ix_(sigma, sigma)]))
    if S is not None and lam:
        value += lam * float(S[np.arange(m), sigma].sum())
    return value


def relaxed_objective(pp: Pair, X, S=None, lam: float = 0.0) -> float:
    """Objective at a real-valued matrix; only the first ``m`` rows are read."""
    m, n = pp.m, pp.n
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n or X.shape[0] < m:
        raise DimensionError(f"matrix of shape {X.shape} incompatible with m={m}, n={n}")
    X1 = X[:m]
    value = 0.0
    for layer in layers_of(pp):
        value += float(np.sum(layer.At_block * (X1 @ layer.Bt @ X1.T)))
    S = _check_similarity(S, m, n)
    if S is not None and lam:
        value += lam * float(np.sum(S * X1))
    return value


def induced_subgraph(B: Graph, sigma) -> Graph:
    sigma = check_assignment(sigma, len(np.asarray(sigma)), B.n)
    return Graph(B.adj[np.ix_(sigma, sigma)], weighted=B.weighted)


def frobenius_cost(A: Graph, B: Graph, sigma, scheme: str = CENTERED) -> float:
    """Edge-disagreement cost of matching ``A`` into ``B`` via ``sigma``.

    Centered: ``||A - B[sigma]||_F^2``. Naive: the number of template edges
    missing from ``B`` under ``sigma``, counted over ordered pairs so both
    schemes share units.
    """
    if A.n > B.n:
        raise DimensionError(f"template has {A.n} nodes, background only {B.n}")
    sigma = check_assignment(sigma, A.n, B.n)
    sub = B.adj[np.ix_(sigma, sigma)]
    if scheme == CENTERED:
        return float(np.sum((A.adj - sub) ** 2))
    if scheme == NAIVE:
        return float(np.count_nonzero((A.adj != 0) & (sub == 0)))
    raise ValueError(f"unknown padding scheme {scheme!r}")
