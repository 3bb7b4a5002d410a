"""Experiment grids, recovery metrics, the exhaustive oracle and CSV output.

A grid runs penalized discovery on planted instances for every combination
of overlap ``k``, similarity weight ``lam`` and penalties ``eps`` (plus
``eps2`` for a third round). Instances depend only on ``(master_seed, k,
rep)``, so all ``lam``/``eps`` cells of one repetition share the same graph
and seeds, and discovery rounds that do not depend on a cell's later
penalties are computed once and reused.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .diversify import STRATEGIES, SIMILARITY, PenaltySchedule, discover
from .graph import CENTERED, NAIVE, Graph, check_assignment, objective, pad
from .io import read_graph, read_matrix_csv
from .matcher import FwConfig, derive_seed
from .mcer import McerSpec, SimilaritySpec, sample_mcer

NONE_LABEL = "none"
ORACLE_LIMIT = 10**7


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class OracleSizeError(ValueError):
    """Exhaustive enumeration would exceed the size guard."""


def template_label(t: int) -> str:
    return f"t{t + 1}"


# metrics


def recovery_fractions(sigma, truths) -> list:
    """Fraction of template nodes placed where each planted copy puts them."""
    sigma = np.asarray(sigma)
    return [float(np.mean(sigma == np.asarray(t))) for t in truths]


def recovery_label(sigma, truths, threshold: float = 0.5) -> tuple:
    """``(label, fractions)``: best-matching copy if at least ``threshold`` and unique."""
    if not len(truths):
        raise ValueError("need at least one planted copy")
    fr = recovery_fractions(sigma, truths)
    best = max(fr)
    if best < threshold or fr.count(best) > 1:
        return NONE_LABEL, fr
    return template_label(fr.index(best)), fr


def majority_label(labels: Sequence[str], n_templates: int) -> str:
    """Most frequent template label; ``none`` on a tie or when nothing was recovered."""
    counts = [sum(1 for lab in labels if lab == template_label(t)) for t in range(n_templates)]
    if not counts:
        return NONE_LABEL
    best = max(counts)
    if best == 0 or counts.count(best) > 1:
        return NONE_LABEL
    return template_label(counts.index(best))


def ged_proxy(A: Graph, B: Graph, sigma):
    """Edge disagreements ``sum_{i<j} |A_ij - B_{sigma(i) sigma(j)}|``.

    Stands in for graph edit distance; an integer for binary graphs.
    """
    sigma = check_assignment(sigma, A.n, B.n)
    diff = np.abs(A.adj - B.adj[np.ix_(sigma, sigma)])
    total = float(np.triu(diff, 1).sum())
    return total if (A.weighted or B.weighted) else int(round(total))


def novel_nodes(sigma, baseline) -> int:
    """Matched background nodes absent from the baseline match."""
    return len(set(np.asarray(sigma).tolist()) - set(np.asarray(baseline).tolist()))


@dataclass(frozen=True)
class RecoveryMetrics:
    fractions: tuple
    label: str
    novel_nodes: int
    ged: float
    objective: float


def recovery_metrics(A, B, sigma, baseline, truths, objective_value, threshold=0.5) -> RecoveryMetrics:
    if truths:
        label, fr = recovery_label(sigma, truths, threshold)
    else:
        label, fr = NONE_LABEL, []
    return RecoveryMetrics(tuple(fr), label, novel_nodes(sigma, baseline), ged_proxy(A, B, sigma), objective_value)


# exhaustive oracle


def n_injections(m: int, n: int) -> int:
    return math.perm(n, m)


def brute_force_match(A: Graph, B: Graph, S=None, lam: float = 0.0, scheme: str = CENTERED, chunk: int = 65536):
    """Global maximizer of the padded objective over all injections.

    Injections are enumerated in lexicographic order and the first maximum
    wins. Raises :class:`OracleSizeError` beyond ``10**7`` injections.
    """
    pp = pad(A, B, scheme)
    m, n = pp.m, pp.n
    if n_injections(m, n) > ORACLE_LIMIT:
        raise OracleSizeError(f"{n_injections(m, n)} injections exceed the limit of {ORACLE_LIMIT}")
    S = None if S is None else np.asarray(S, dtype=float)
    if m == 0:
        return np.zeros(0, dtype=np.intp), 0.0
    At, Bt = pp.At_block, pp.Bt
    rows = np.arange(m)
    best_val, best_sigma = -np.inf, None
    perms = itertools.permutations(range(n), m)
    while True:
        block = np.array(list(itertools.islice(perms, chunk)), dtype=np.intp)
        if not len(block):
            break
        vals = np.einsum("ij,cij->c", At, Bt[block[:, :, None], block[:, None, :]])
        if S is not None and lam:
            vals = vals + lam * S[rows, block].sum(axis=1)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_sigma = float(vals[i]), block[i].copy()
    return best_sigma, objective(pp, best_sigma, S, lam)


# configuration


def _floats(values, name) -> tuple:
    if values is None:
        return ()
    values = values if isinstance(values, (list, tuple)) else [values]
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be numbers") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """A full experiment, loadable from a single JSON document.

    Either ``model`` (a planted-instance description, with ``k`` taken from
    the grid) or ``files`` (paths to external ``A``, ``B`` and optionally
    ``S``) supplies the data. ``eps2`` adds a third discovery round with a
    per-round schedule ``(eps, eps2)``; otherwise two rounds use ``eps``.
    """

    master_seed: int
    k: tuple = (10,)
    lam: tuple = (25.0,)
    eps: tuple = (0.0,)
    eps2: tuple = ()
    mc_reps: int = 1
    seeds_from_overlap: int = 0
    n_restarts: int = 10
    eta: Optional[float] = None
    max_iters: int = 100
    scheme: str = CENTERED
    strategy: str = SIMILARITY
    threshold: float = 0.5
    model: Optional[dict] = None
    similarity: Optional[tuple] = None
    files: Optional[dict] = None
    per_rep_csv: Optional[str] = None
    aggregate_csv: Optional[str] = None
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if not (self.k and self.lam and self.eps):
            raise ConfigError("grid lists k, lam and eps must be nonempty")
        if self.mc_reps < 1:
            raise ConfigError("mc_reps must be >= 1")
        if self.n_restarts < 1 or self.max_iters < 1:
            raise ConfigError("n_restarts and max_iters must be >= 1")
        if self.scheme not in (CENTERED, NAIVE):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if any(lam < 0 for lam in self.lam):
            raise ConfigError("lam must be nonnegative")
        if any(not 0 <= e < 1 for e in self.eps + self.eps2):
            raise ConfigError("eps values must lie in [0, 1)")
        if (self.model is None) == (self.files is None):
            raise ConfigError("give exactly one of 'model' and 'files'")
        if self.seeds_from_overlap < 0:
            raise ConfigError("seeds_from_overlap must be nonnegative")
        if self.model is not None:
            for k in self.k:
                spec = self.mcer_spec(k)
                if self.seeds_from_overlap > spec.k:
                    raise ConfigError("more seeds requested than overlap nodes")
            if self.similarity is not None:
                try:
                    SimilaritySpec(self.similarity)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def rounds(self) -> int:
        return 3 if self.eps2 else 2

    @property
    def n_templates(self) -> int:
        return len(self.model["r_private"]) if self.model is not None else 0

    def mcer_spec(self, k: int) -> McerSpec:
        try:
            return McerSpec.from_dict({**self.model, "k": int(k)})
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model: {exc}") from exc

    def fw_config(self, lam: float, seeds, master_seed: int) -> FwConfig:
        return FwConfig(
            lam=lam,
            eta=self.eta,
            max_iters=self.max_iters,
            n_restarts=self.n_restarts,
            seeds=tuple(seeds),
            scheme=self.scheme,
            master_seed=master_seed,
        )

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        grid = d.get("grid", {})
        matcher = d.get("matcher", {})
        outputs = d.get("outputs", {})
        known = {"master_seed", "grid", "matcher", "outputs", "mc_reps", "seeds_from_overlap", "model",
                 "similarity", "files", "strategy", "threshold", "workers", "timing"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "master_seed" not in d:
            raise ConfigError("config needs a master_seed")
        try:
            sim = d.get("similarity")
            return cls(
                master_seed=int(d["master_seed"]),
                k=tuple(int(k) for k in grid.get("k", [10])),
                lam=_floats(grid.get("lam", [25.0]), "lam"),
                eps=_floats(grid.get("eps", [0.0]), "eps"),
                eps2=_floats(grid.get("eps2"), "eps2"),
                mc_reps=int(d.get("mc_reps", 1)),
                seeds_from_overlap=int(d.get("seeds_from_overlap", 0)),
                n_restarts=int(matcher.get("n_restarts", 10)),
                eta=None if matcher.get("eta") is None else float(matcher["eta"]),
                max_iters=int(matcher.get("max_iters", 100)),
                scheme=matcher.get("scheme", CENTERED),
                strategy=d.get("strategy", SIMILARITY),
                threshold=float(d.get("threshold", 0.5)),
                model=d.get("model"),
                similarity=None if sim is None else tuple(float(x) for x in (sim["mus"] if isinstance(sim, dict) else sim)),
                files=d.get("files"),
                per_rep_csv=outputs.get("per_rep"),
                aggregate_csv=outputs.get("aggregate"),
                workers=int(d.get("workers", 1)),
                timing=bool(d.get("timing", False)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d, **overrides)


# grid execution


@dataclass(frozen=True)
class ResultRow:
    k: int
    lam: float
    eps: float
    eps2: Optional[float]
    rep: int
    label: str
    fractions: tuple
    ged: float
    novel_nodes: int
    objective: float
    iterations: int
    wall_ms: Optional[float] = None

    @property
    def cell(self) -> tuple:
        return (self.k, self.lam, self.eps, self.eps2)


@dataclass(frozen=True)
class ResultTable:
    n_templates: int
    rows: tuple = field(default_factory=tuple)

    def cells(self) -> list:
        """Cell keys in first-seen order."""
        return list(dict.fromkeys(r.cell for r in self.rows))

    def aggregate(self) -> list:
        """One summary dict per cell."""
        out = []
        for cell in self.cells():
            rows = [r for r in self.rows if r.cell == cell]
            labels = [r.label for r in rows]
            entry = {"k": cell[0], "lam": cell[1], "eps": cell[2], "eps2": cell[3], "reps": len(rows),
                     "majority_label": majority_label(labels, self.n_templates)}
            for t in range(self.n_templates):
                entry[f"count_t{t + 1}"] = labels.count(template_label(t))
            for t in range(self.n_templates):
                entry[f"mean_frac_t{t + 1}"] = float(np.mean([r.fractions[t] for r in rows]))
            out.append(entry)
        return out


def _load_files(files: dict):
    A = read_graph(files["A"])
    B = read_graph(files["B"])
    S = read_matrix_csv(files["S"]) if files.get("S") else None
    truths = ()
    if files.get("truths"):
        truths = tuple(np.asarray(row, dtype=np.intp) for row in read_matrix_csv(files["truths"]).astype(int))
    return A, B, S, truths


def instance_rng(master_seed: int, k: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, 0, k, rep])))


def _run_task(config: ExperimentConfig, k: int, rep: int) -> list:
    """All ``lam``/``eps``/``eps2`` cells for one ``(k, rep)``."""
    rng = instance_rng(config.master_seed, k, rep)
    if config.model is not None:
        spec = config.mcer_spec(k)
        sim = SimilaritySpec(config.similarity) if config.similarity is not None else None
        inst = sample_mcer(spec, rng, sim)
        A, B, S, truths = inst.A, inst.B, inst.S, inst.truths
        overlap = spec.overlap
        picked = rng.choice(overlap, size=config.seeds_from_overlap, replace=False) if config.seeds_from_overlap else []
        seeds = [(int(i), int(truths[0][i])) for i in sorted(picked)]
    else:
        A, B, S, truths = _load_files(config.files)
        seeds = []
    pp = pad(A, B, config.scheme)
    match_seed = derive_seed(config.master_seed, k, rep)
    rows = []
    for lam in config.lam:
        fw = config.fw_config(lam, seeds, match_seed)
        base = discover(pp, S, fw, PenaltySchedule.fixed(0.0), config.strategy, rounds=1)
        for eps in config.eps:
            second = None
            for eps2 in config.eps2 or (None,):
                t0 = time.perf_counter()
                if eps2 is None:
                    schedule = PenaltySchedule.fixed(eps)
                else:
                    schedule = PenaltySchedule.per_round((eps, eps2))
                log = discover(pp, S, fw, schedule, config.strategy, rounds=config.rounds,
                               resume=second if second is not None else base)
                second = log.prefix(2)
                wall = (time.perf_counter() - t0) * 1e3 if config.timing else None
                final = log[-1]
                met = recovery_metrics(A, B, final.assignment, log[0].assignment, truths,
                                       final.objective, config.threshold)
                rows.append(ResultRow(k, lam, eps, eps2, rep, met.label, met.fractions, met.ged,
                                      met.novel_nodes, met.objective, final.result.iterations, wall))
    return rows


def _task_entry(args):
    config, k, rep = args
    return _run_task(config, k, rep)


def run_grid(config: ExperimentConfig) -> ResultTable:
    """Evaluate every grid cell and repetition; output order is fixed by the grid."""
    tasks = [(config, k, rep) for k in config.k for rep in range(config.mc_reps)]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_task_entry, tasks))
    else:
        chunks = [_task_entry(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    order = {cell: i for i, cell in enumerate(
        (k, lam, eps, eps2) for k in config.k for lam in config.lam for eps in config.eps
        for eps2 in (config.eps2 or (None,)))}
    rows.sort(key=lambda r: (order[r.cell], r.rep))
    n_templates = config.n_templates
    if config.files is not None and rows:
        n_templates = len(rows[0].fractions)
    return ResultTable(n_templates, tuple(rows))


# CSV output


def per_rep_columns(n_templates: int) -> list:
    return (["k", "lam", "eps", "eps2", "rep", "label"]
            + [f"frac_t{t + 1}" for t in range(n_templates)]
            + ["ged", "novel_nodes", "objective", "iterations", "wall_ms"])


def aggregate_columns(n_templates: int) -> list:
    return (["k", "lam", "eps", "eps2", "reps", "majority_label"]
            + [f"count_t{t + 1}" for t in range(n_templates)]
            + [f"mean_frac_t{t + 1}" for t in range(n_templates)])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _row_values(row: ResultRow) -> list:
    return ([row.k, row.lam, row.eps, row.eps2, row.rep, row.label] + list(row.fractions)
            + [row.ged, row.novel_nodes, row.objective, row.iterations, row.wall_ms])


def emit_results(table: ResultTable, per_rep_path, aggregate_path) -> None:
    with open(per_rep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(per_rep_columns(table.n_templates))
        for row in table.rows:
            writer.writerow([_fmt(v) for v in _row_values(row)])
    columns = aggregate_columns(table.n_templates)
    with open(aggregate_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for entry in table.aggregate():
            writer.writerow([_fmt(entry[c]) for c in columns])


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def _number(s: str):
    return float(s) if any(c in s for c in ".eEn") else int(s)


def read_results(per_rep_path) -> ResultTable:
    """Parse a per-repetition CSV back into a :class:`ResultTable`."""
    with open(per_rep_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        fracs = [c for c in header if c.startswith("frac_t")]
        if header != per_rep_columns(len(fracs)):
            raise ValueError(f"{per_rep_path}: unexpected columns")
        rows = []
        for rec in reader:
            d = dict(zip(header, rec))
            rows.append(ResultRow(
                k=int(d["k"]), lam=float(d["lam"]), eps=float(d["eps"]), eps2=_opt_float(d["eps2"]),
                rep=int(d["rep"]), label=d["label"], fractions=tuple(float(d[c]) for c in fracs),
                ged=_number(d["ged"]), novel_nodes=int(d["novel_nodes"]), objective=float(d["objective"]),
                iterations=int(d["iterations"]), wall_ms=_opt_float(d["wall_ms"]),
            ))
    return ResultTable(len(fracs), tuple(rows))


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
