"""Multiple correlated Erdos-Renyi instances and their analytic companions.

A template ``A`` on ``m`` nodes is planted ``N`` times in a background ``B``
on ``n`` nodes. Copy ``t`` occupies the background nodes ``truths[t]`` and
its edges are correlated with the matching template edges. The first copy
is the strongest (highest correlation), later ones are weaker. All copies
share ``k`` overlap nodes, which every copy maps to the same background
nodes.

Default layout, 0-based: copy 1 is ``i -> i``; copy ``t >= 2`` sends the
private template node ``i < m - k`` to ``m + (t - 2)(m - k) + i`` and keeps
the overlap nodes ``i >= m - k`` in place.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .graph import DimensionError, Graph, check_assignment

FLIP_PROBS = (0.0074, 0.0168, 0.0326, 0.0495)
FLIP_BASE = 0.8


def default_truths(m: int, n: int, k: int, n_templates: int) -> tuple:
    """Planted assignments of the default layout."""
    if not 0 <= k <= m:
        raise ValueError("overlap k must satisfy 0 <= k <= m")
    need = m + (n_templates - 1) * (m - k)
    if need > n:
        raise DimensionError(f"{n_templates} copies with m={m}, k={k} need n >= {need}")
    truths = [np.arange(m)]
    for t in range(2, n_templates + 1):
        sigma = np.arange(m)
        sigma[: m - k] = m + (t - 2) * (m - k) + np.arange(m - k)
        truths.append(sigma)
    return tuple(truths)


@dataclass(frozen=True)
class McerSpec:
    """Sizes, edge density and correlations of a planted instance.

    ``r_private[t]`` is the correlation of every template edge of copy ``t``
    that touches a private node; ``r_overlap`` is the correlation shared by
    all copies on edges between two overlap nodes. ``truths`` defaults to
    the layout described in the module docstring.
    """

    m: int
    n: int
    p: float
    k: int
    r_private: tuple
    r_overlap: float
    truths: Optional[tuple] = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("edge probability p must lie in (0, 1)")
        if self.m < 1 or self.m > self.n:
            raise DimensionError("need 1 <= m <= n")
        r_private = tuple(float(r) for r in self.r_private)
        if not r_private:
            raise ValueError("at least one template copy is required")
        for r in r_private + (float(self.r_overlap),):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"correlation {r} outside [0, 1]")
        object.__setattr__(self, "r_private", r_private)
        object.__setattr__(self, "r_overlap", float(self.r_overlap))
        if self.truths is None:
            truths = default_truths(self.m, self.n, self.k, len(r_private))
        else:
            truths = tuple(check_assignment(np.asarray(t), self.m, self.n) for t in self.truths)
            if len(truths) != len(r_private):
                raise ValueError("need one correlation per planted copy")
        for t in truths:
            t.setflags(write=False)
        object.__setattr__(self, "truths", truths)
        _template_slots(self)  # validates overlap consistency

    @property
    def n_templates(self) -> int:
        return len(self.r_private)

    @property
    def overlap(self) -> np.ndarray:
        """Template nodes ``m - k .. m - 1``."""
        return np.arange(self.m - self.k, self.m)

    def correlation_matrix(self, t: int) -> np.ndarray:
        """``m x m`` edge correlations of copy ``t`` (diagonal unused)."""
        R = np.full((self.m, self.m), self.r_private[t])
        ov = self.overlap
        R[np.ix_(ov, ov)] = self.r_overlap
        return R

    def to_dict(self) -> dict:
        out = {
            "m": self.m,
            "n": self.n,
            "p": self.p,
            "k": self.k,
            "r_private": list(self.r_private),
            "r_overlap": self.r_overlap,
        }
        if any(not np.array_equal(a, b) for a, b in zip(self.truths, default_truths(self.m, self.n, self.k, self.n_templates))):
            out["truths"] = [t.tolist() for t in self.truths]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "McerSpec":
        truths = d.get("truths")
        return cls(
            int(d["m"]),
            int(d["n"]),
            float(d["p"]),
            int(d["k"]),
            tuple(d["r_private"]),
            float(d["r_overlap"]),
            None if truths is None else tuple(np.asarray(t, dtype=np.intp) for t in truths),
        )


@dataclass(frozen=True)
class SimilaritySpec:
    """Mean similarities ordered strongest first.

    ``mus = (copy-1 private, overlap, copy-2 private, ..., background)``:
    the planted pairs ``(i, truths[t][i])`` of copy ``t``'s private nodes get
    the copy's mean, planted overlap pairs the overlap mean, and every other
    entry the background mean. The means must be strictly decreasing.
    """

    mus: tuple

    def __post_init__(self):
        mus = tuple(float(x) for x in self.mus)
        if len(mus) < 3:
            raise ValueError("need at least (private, overlap, background) means")
        if not all(0.0 < x < 1.0 for x in mus):
            raise ValueError("means must lie in (0, 1)")
        if any(a <= b for a, b in zip(mus, mus[1:])):
            raise ValueError("means must be strictly decreasing")
        object.__setattr__(self, "mus", mus)

    @property
    def n_templates(self) -> int:
        return len(self.mus) - 2

    @property
    def background(self) -> float:
        return self.mus[-1]

    @property
    def overlap(self) -> float:
        return self.mus[1]

    def private(self, t: int) -> float:
        return self.mus[0] if t == 0 else self.mus[t + 1]


@dataclass(frozen=True, eq=False)
class McerInstance:
    A: Graph
    B: Graph
    truths: tuple
    S: Optional[np.ndarray]
    spec: McerSpec


def two_template_spec(m: int = 50, n: int = 500, k: int = 10, p: float = 0.8) -> tuple:
    """Strong and weak copies with correlations 0.954 / 0.803 and overlap 0.897."""
    return McerSpec(m, n, p, k, (0.954, 0.803), 0.897), SimilaritySpec((0.6, 0.55, 0.5, 0.1))


def three_template_spec(m: int = 50, n: int = 500, k: int = 10, p: float = 0.8) -> tuple:
    """Adds a third copy at correlation 0.706 and shifts the similarity means up."""
    return (
        McerSpec(m, n, p, k, (0.954, 0.803, 0.706), 0.897),
        SimilaritySpec((0.7, 0.6, 0.55, 0.5, 0.1)),
    )


def _template_slots(spec: McerSpec):
    """Unique background slots carried by some copy.

    Returns upper-triangular background coordinates ``(u, v)``, the template
    pair ``(i, j)`` each slot copies, and its correlation. A slot shared by
    several copies must copy the same template pair with the same
    correlation.
    """
    m, n = spec.m, spec.n
    iu, ju = np.triu_indices(m, 1)
    keys, src_i, src_j, corr = [], [], [], []
    for t, sigma in enumerate(spec.truths):
        u, v = sigma[iu], sigma[ju]
        swap = u > v
        lo, hi = np.where(swap, v, u), np.where(swap, u, v)
        keys.append(lo * n + hi)
        src_i.append(iu)
        src_j.append(ju)
        corr.append(spec.correlation_matrix(t)[iu, ju])
    keys = np.concatenate(keys)
    src_i, src_j, corr = np.concatenate(src_i), np.concatenate(src_j), np.concatenate(corr)
    order = np.argsort(keys, kind="stable")
    keys, src_i, src_j, corr = keys[order], src_i[order], src_j[order], corr[order]
    first = np.ones(len(keys), dtype=bool)
    first[1:] = keys[1:] != keys[:-1]
    group = np.cumsum(first) - 1
    lead = np.flatnonzero(first)[group]
    if np.any(src_i != src_i[lead]) or np.any(src_j != src_j[lead]) or np.any(corr != corr[lead]):
        raise ValueError("copies sharing a background slot disagree on its template edge or correlation")
    keys = keys[first]
    return keys // n, keys % n, src_i[first], src_j[first], corr[first]


def _symmetric(upper: np.ndarray) -> np.ndarray:
    upper = np.triu(upper, 1)
    return upper + upper.T


def sample_mcer(spec: McerSpec, rng: np.random.Generator, similarity: Optional[SimilaritySpec] = None) -> McerInstance:
    """Draw ``(A, B, truths, S)``.

    Template edges are i.i.d. Bern(p). A background slot copying template
    edge ``A_ij`` with correlation ``r`` is 1 with probability
    ``p + r(1 - p)`` if ``A_ij = 1`` and ``p(1 - r)`` otherwise, which keeps
    the Bern(p) marginal and gives correlation exactly ``r``. Slots shared
    by several copies are drawn once. All other background edges are
    independent Bern(p).
    """
    m, n, p = spec.m, spec.n, spec.p
    A = _symmetric((rng.random((m, m)) < p).astype(float))
    B = np.triu((rng.random((n, n)) < p).astype(float), 1)
    u, v, i, j, r = _template_slots(spec)
    a = A[i, j]
    prob = np.where(a == 1.0, p + r * (1.0 - p), p * (1.0 - r))
    B[u, v] = (rng.random(len(u)) < prob).astype(float)
    B = B + B.T
    S = None if similarity is None else sample_similarity(similarity, spec, rng)
    return McerInstance(Graph(A), Graph(B), spec.truths, S, spec)


def similarity_means(similarity: SimilaritySpec, spec: McerSpec) -> np.ndarray:
    """``m x n`` matrix of target means."""
    if similarity.n_templates != spec.n_templates:
        raise ValueError("similarity and graph specs disagree on the number of copies")
    mu = np.full((spec.m, spec.n), similarity.background)
    private = np.arange(spec.m - spec.k)
    for t, sigma in enumerate(spec.truths):
        mu[private, sigma[private]] = similarity.private(t)
    for t, sigma in enumerate(spec.truths):
        mu[spec.overlap, sigma[spec.overlap]] = similarity.overlap
    return mu


def beta_with_mean(mu, rng: np.random.Generator) -> np.ndarray:
    """Beta(alpha, alpha (1 - mu) / mu) draws with a fresh alpha ~ U(0, 1) per entry."""
    mu = np.asarray(mu, dtype=float)
    alpha = 1.0 - rng.random(mu.shape)  # (0, 1]; Beta needs alpha > 0
    return rng.beta(alpha, alpha * (1.0 - mu) / mu)


def sample_similarity(similarity: SimilaritySpec, spec: McerSpec, rng: np.random.Generator) -> np.ndarray:
    return beta_with_mean(similarity_means(similarity, spec), rng)


def corr_from_flip(u: float, v: float) -> float:
    """Edge correlation of two XOR-flipped copies of a common Bern(u) graph.

    Each copy flips every edge of the common graph independently with
    probability ``v``.
    """
    if not (0.0 < u < 1.0 and 0.0 <= v <= 1.0):
        raise ValueError("need 0 < u < 1 and 0 <= v <= 1")
    q = u + v * (1.0 - 2.0 * u)
    if q <= 0.0 or q >= 1.0:
        raise ValueError("degenerate edge probability")
    both = u * (1.0 - v) ** 2 + (1.0 - u) * v**2
    return (both - q * q) / (q * (1.0 - q))


def flip_pair(u: float, v: float, size: int, rng: np.random.Generator) -> tuple:
    """Monte Carlo counterpart of :func:`corr_from_flip`."""
    base = rng.random(size) < u
    x = base ^ (rng.random(size) < v)
    y = base ^ (rng.random(size) < v)
    return x.astype(float), y.astype(float)


@dataclass(frozen=True)
class AlignmentCounts:
    """Agreement of an assignment with a strong and a weak planted copy.

    Nodes: overlap nodes placed correctly (``a1``) or not (``a2``); private
    nodes placed as in the strong copy (``b1``), as in the weak copy
    (``b2``), or neither (``b3``). Template edges (unordered pairs): among
    overlap pairs, ``j1`` land on shared slots and ``j2`` do not; among the
    rest, ``h1`` land on strong-only slots, ``h2`` on weak-only slots and
    ``h3`` on neither.
    """

    a1: int
    a2: int
    b1: int
    b2: int
    b3: int
    j1: int
    j2: int
    h1: int
    h2: int
    h3: int

    def identities_hold(self) -> bool:
        a1, a2, b1, b2, b3 = self.a1, self.a2, self.b1, self.b2, self.b3
        k, mk = a1 + a2, b1 + b2 + b3
        m = k + mk
        return (
            self.j1 + self.j2 == k * (k - 1) // 2
            and self.h1 + self.h2 + self.h3 == mk * (m + k - 1) // 2
            and self.j1 == comb(a1, 2)
            and self.j2 == comb(a2, 2) + a1 * a2
            and self.h1 == comb(b1, 2) + b1 * a1
            and self.h2 == comb(b2, 2) + b2 * a1
            and self.h3 == comb(b3, 2) + b1 * b2 + b1 * b3 + b2 * b3 + a2 * mk + b3 * a1
        )


def count_alignment(sigma, strong, weak) -> AlignmentCounts:
    """Classify the nodes and template edges of ``sigma`` against two copies.

    Overlap nodes are those the two copies map identically.
    """
    strong, weak = np.asarray(strong), np.asarray(weak)
    m = len(strong)
    sigma = np.asarray(sigma)
    if len(sigma) != m or len(weak) != m:
        raise DimensionError("assignment and copies must have the same length")
    overlap = strong == weak
    in1 = sigma == strong
    in2 = sigma == weak
    a1 = int(np.sum(overlap & in1))
    a2 = int(np.sum(overlap & ~in1))
    b1 = int(np.sum(~overlap & in1))
    b2 = int(np.sum(~overlap & in2))
    b3 = int(np.sum(~overlap & ~in1 & ~in2))

    iu, ju = np.triu_indices(m, 1)
    both_overlap = overlap[iu] & overlap[ju]
    pair1 = in1[iu] & in1[ju]
    pair2 = in2[iu] & in2[ju]
    j1 = int(np.sum(both_overlap & pair1 & pair2))
    j2 = int(np.sum(both_overlap)) - j1
    rest = ~both_overlap
    h1 = int(np.sum(rest & pair1 & ~pair2))
    h2 = int(np.sum(rest & pair2 & ~pair1))
    h3 = int(np.sum(rest)) - h1 - h2
    return AlignmentCounts(a1, a2, b1, b2, b3, j1, j2, h1, h2, h3)


def expected_edge_diff(c: AlignmentCounts, p: float, r1: float, r2: float, r3: float) -> float:
    """Mean edge-objective gap between the weak copy's assignment and ``c``'s.

    ``r1`` is the strong private, ``r2`` the overlap and ``r3`` the weak
    private correlation; the objective uses centered padding.
    """
    return 8.0 * p * (1.0 - p) * (c.j2 * r2 + c.h1 * (r3 - r1) + c.h3 * r3)


def expected_feature_diff(c: AlignmentCounts, mus: Sequence[float], eps: float) -> float:
    """Mean similarity gap when the strong copy's pairs are penalized by ``1 - eps``.

    ``mus = (strong private, overlap, weak private, background)``.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    mu1, mu2, mu3, mu4 = mus
    return c.a2 * ((1 - eps) * mu2 - mu4) + c.b1 * (mu3 - (1 - eps) * mu1) + c.b3 * (mu3 - mu4)


def bridge_distances(coords_a, coords_b, bridges) -> np.ndarray:
    """``d_ij = min_b |u_i - s_b| + |v_j - w_b|`` over bridge pairs ``(s_b, w_b)``."""
    coords_a = np.atleast_2d(np.asarray(coords_a, dtype=float))
    coords_b = np.atleast_2d(np.asarray(coords_b, dtype=float))
    if not len(bridges):
        raise ValueError("at least one bridge is required")
    s = np.array([np.asarray(b[0], dtype=float) for b in bridges])
    w = np.array([np.asarray(b[1], dtype=float) for b in bridges])
    da = cdist(coords_a, s)
    db = cdist(coords_b, w)
    d = np.full((len(coords_a), len(coords_b)), np.inf)
    for b in range(len(bridges)):
        np.minimum(d, da[:, b, None] + db[None, :, b], out=d)
    return d


def bridge_similarity(coords_a, coords_b, bridges) -> np.ndarray:
    """Bridge distances mapped affinely onto [0, 1], closest pairs scoring 1.

    All-equal distances give an all-ones matrix.
    """
    d = bridge_distances(coords_a, coords_b, bridges)
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.ones_like(d)
    return (hi - d) / (hi - lo)
