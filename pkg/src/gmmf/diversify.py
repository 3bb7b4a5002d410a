"""Penalty masks and multi-round template discovery.

After a round recovers an assignment ``sigma``, the similarity entries
``(i, sigma[i])`` are down-weighted by ``1 - eps`` so later rounds are
pushed away from the solutions already found. Three places can carry the
penalty: the similarity matrix itself, every Frank-Wolfe gradient, or the
random starting points.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import partial
from typing import Optional, Sequence

import numpy as np

from .graph import DimensionError, Pair, check_assignment
from .matcher import FwConfig, RestartResult, derive_seed, match_restarts

SIMILARITY = "similarity"
GRADIENT = "gradient"
INITIALIZATION = "initialization"
STRATEGIES = (SIMILARITY, GRADIENT, INITIALIZATION)


class NormalizationError(RuntimeError):
    """Alternating row/column scaling did not reach double stochasticity."""


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"penalty eps must lie in [0, 1), got {eps}")
    return eps


@dataclass(frozen=True)
class PenaltyMask:
    """Product of ``(1 - eps)`` down-weights on recovered assignments.

    Stored as the list of ``(sigma, eps)`` terms; :meth:`dense` raises each
    distinct ``1 - eps`` to its integer count, so an entry hit ``c`` times
    with the same penalty is exactly ``(1 - eps) ** c``.
    """

    m: int
    n: int
    terms: tuple = ()

    def __post_init__(self):
        terms = []
        for sigma, eps in self.terms:
            sigma = check_assignment(np.asarray(sigma), self.m, self.n)
            terms.append((tuple(int(j) for j in sigma), _check_eps(eps)))
        object.__setattr__(self, "terms", tuple(terms))

    def __mul__(self, other: "PenaltyMask") -> "PenaltyMask":
        if (self.m, self.n) != (other.m, other.n):
            raise DimensionError("masks must share their shape")
        return PenaltyMask(self.m, self.n, self.terms + other.terms)

    @property
    def shape(self) -> tuple:
        return (self.m, self.n)

    def counts(self, eps: float) -> np.ndarray:
        """How many terms with penalty ``eps`` hit each entry."""
        out = np.zeros((self.m, self.n), dtype=np.int64)
        rows = np.arange(self.m)
        for sigma, e in self.terms:
            if e == eps:
                out[rows, np.asarray(sigma)] += 1
        return out

    def dense(self) -> np.ndarray:
        out = np.ones((self.m, self.n))
        for eps in sorted({e for _, e in self.terms}):
            c = self.counts(eps)
            hit = c > 0
            out[hit] *= (1.0 - eps) ** c[hit]
        return out


def build_mask(sigma, eps: float, n: int) -> PenaltyMask:
    """Mask with ``1 - eps`` at every ``(i, sigma[i])`` and 1 elsewhere."""
    sigma = np.asarray(sigma)
    return PenaltyMask(len(sigma), n, ((sigma, eps),))


def combine(masks: Sequence[PenaltyMask], m: int, n: int) -> PenaltyMask:
    out = PenaltyMask(m, n)
    for mask in masks:
        out = out * mask
    return out


def _dense(mask) -> np.ndarray:
    return mask.dense() if isinstance(mask, PenaltyMask) else np.asarray(mask, dtype=float)


def apply_mask(S, mask) -> np.ndarray:
    """Hadamard product of ``S`` with a mask; ``S`` is not modified."""
    S = np.asarray(S, dtype=float)
    M = _dense(mask)
    if M.shape != S.shape:
        raise DimensionError(f"mask shape {M.shape} does not match {S.shape}")
    return S * M


def penalize_gradient(grad, masks: Sequence) -> np.ndarray:
    """Gradient multiplied entrywise by every mask in ``masks``."""
    out = np.array(grad, dtype=float)
    for mask in masks:
        out = apply_mask(out, mask)
    return out


def sinkhorn(P, tol: float = 1e-9, max_sweeps: int = 1000) -> np.ndarray:
    """Alternate row and column normalization until all sums are within ``tol`` of 1."""
    P = np.array(P, dtype=float)
    if P.size == 0:
        return P
    for _ in range(max_sweeps):
        P /= P.sum(axis=1, keepdims=True)
        P /= P.sum(axis=0, keepdims=True)
        if np.max(np.abs(P.sum(axis=1) - 1.0)) <= tol:
            return P
    raise NormalizationError(f"row/column scaling did not converge in {max_sweeps} sweeps")


def penalize_init(P0, masks: Sequence, seeds=()) -> np.ndarray:
    """Apply masks to the template rows of a start point and rescale.

    The masks cover the first ``m`` rows; padding rows are left as is. The
    result is brought back to double stochasticity by alternating
    normalization on the unseeded block, and seeded entries are restored to
    exactly 1 with zeros around them.
    """
    P = np.array(P0, dtype=float)
    n = P.shape[0]
    if not masks:
        return P
    M = np.ones((n, n))
    dense = [_dense(mask) for mask in masks]
    m = dense[0].shape[0]
    for d in dense:
        if d.shape != (m, n):
            raise DimensionError(f"mask shape {d.shape} does not match ({m}, {n})")
        M[:m] *= d
    if isinstance(seeds, (int, np.integer)):
        seeds = [(i, i) for i in range(int(seeds))]
    pairs = np.asarray(list(seeds), dtype=np.intp).reshape(-1, 2)
    free_r = np.setdiff1d(np.arange(n), pairs[:, 0])
    free_c = np.setdiff1d(np.arange(n), pairs[:, 1])
    block = (P * M)[np.ix_(free_r, free_c)]
    out = np.zeros((n, n))
    out[pairs[:, 0], pairs[:, 1]] = 1.0
    out[np.ix_(free_r, free_c)] = sinkhorn(block)
    return out


@dataclass(frozen=True)
class PenaltySchedule:
    """Which ``eps`` penalizes the assignment found in each round.

    ``fixed`` uses ``eps_values[0]`` for every round; ``per-round`` uses
    ``eps_values[r - 1]`` for the assignment of round ``r`` (1-based).
    """

    mode: str = "fixed"
    eps_values: tuple = (0.0,)

    def __post_init__(self):
        if self.mode not in ("fixed", "per-round"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        values = tuple(_check_eps(e) for e in np.atleast_1d(self.eps_values))
        if not values:
            raise ValueError("schedule needs at least one eps")
        object.__setattr__(self, "eps_values", values)

    @classmethod
    def fixed(cls, eps: float) -> "PenaltySchedule":
        return cls("fixed", (eps,))

    @classmethod
    def per_round(cls, eps_values) -> "PenaltySchedule":
        return cls("per-round", tuple(eps_values))

    def eps_for(self, round_index: int) -> float:
        if self.mode == "fixed":
            return self.eps_values[0]
        if round_index - 1 >= len(self.eps_values):
            raise ValueError(f"no eps given for round {round_index}")
        return self.eps_values[round_index - 1]


@dataclass(frozen=True)
class Round:
    """Best-ranked restart of one discovery round.

    ``objective`` is evaluated with the similarity masked by every earlier
    round; ``masked_by`` lists the rounds whose assignments shaped that mask.
    ``eps`` is the penalty this round's assignment receives later on, or
    ``None`` when the schedule does not define one.
    """

    index: int
    result: RestartResult
    strategy: str
    eps: Optional[float]
    masked_by: tuple

    @property
    def assignment(self) -> np.ndarray:
        return self.result.assignment

    @property
    def objective(self) -> float:
        return self.result.objective


@dataclass(frozen=True)
class DiscoveryLog:
    rounds: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]

    @property
    def assignments(self) -> list:
        return [r.assignment for r in self.rounds]

    def prefix(self, k: int) -> "DiscoveryLog":
        return DiscoveryLog(self.rounds[:k])


def _scheduled_eps(schedule: PenaltySchedule, r: int) -> Optional[float]:
    if schedule.mode == "fixed" or r <= len(schedule.eps_values):
        return schedule.eps_for(r)
    return None


def round_config(config: FwConfig, round_index: int) -> FwConfig:
    """Round 1 uses the master seed itself; later rounds a derived child seed."""
    if round_index == 1:
        return config
    return replace(config, master_seed=derive_seed(config.master_seed, round_index))


def discover(
    pp: Pair,
    S,
    config: FwConfig,
    schedule: PenaltySchedule,
    strategy: str = SIMILARITY,
    rounds: int = 2,
    resume: Optional[DiscoveryLog] = None,
) -> DiscoveryLog:
    """Run ``rounds`` rounds of penalized matching.

    Round ``r`` masks with the assignments of rounds ``1..r-1``, each with
    its own ``eps`` from ``schedule``. The mask enters through ``strategy``;
    every round is ranked by the objective under the masked similarity.
    A ``resume`` log supplies already computed leading rounds, which must
    have been produced with the same inputs and a schedule agreeing on them.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    m, n = pp.m, pp.n
    S0 = np.zeros((m, n)) if S is None else np.asarray(S, dtype=float)
    if S0.shape != (m, n):
        raise DimensionError(f"similarity must be {m}x{n}, got {S0.shape}")

    done = list(resume.rounds[:rounds]) if resume is not None else []
    for r in done:
        if r.strategy != strategy and r.masked_by:
            raise ValueError("resumed log used a different strategy")
    done = [replace(r, eps=_scheduled_eps(schedule, r.index)) for r in done]
    for r in range(len(done) + 1, rounds + 1):
        masks = [build_mask(prev.assignment, schedule.eps_for(prev.index), n) for prev in done]
        M = combine(masks, m, n)
        S_masked = apply_mask(S0, M)
        cfg = round_config(config, r)
        if strategy == SIMILARITY or not masks:
            ranked = match_restarts(pp, S_masked, cfg)
        elif strategy == GRADIENT:
            ranked = match_restarts(pp, S0, cfg, grad_mask=M.dense(), rank_S=S_masked)
        else:
            hook = partial(penalize_init, masks=[M], seeds=cfg.seeds)
            ranked = match_restarts(pp, S0, cfg, init_hook=hook, rank_S=S_masked)
        done.append(Round(r, ranked[0], strategy, _scheduled_eps(schedule, r), tuple(p.index for p in done)))
    return DiscoveryLog(tuple(done))
