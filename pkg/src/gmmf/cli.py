"""Command-line entry point: ``gmmf {generate,match,discover,grid,oracle}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 oracle size
guard.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .diversify import STRATEGIES, PenaltySchedule, discover
from .graph import CENTERED, SCHEMES, pad
from .harness import (
    ConfigError,
    ExperimentConfig,
    OracleSizeError,
    brute_force_match,
    emit_results,
    run_grid,
)
from .io import read_graph, read_matrix_csv, write_edgelist, write_matrix_csv
from .matcher import FwConfig, match_restarts
from .mcer import McerSpec, SimilaritySpec, sample_mcer, three_template_spec, two_template_spec

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ORACLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _seed_pairs(text):
    if not text:
        return ()
    try:
        return tuple(tuple(int(x) for x in item.split(":")) for item in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"seeds must look like 'i:j,i:j', got {text!r}") from exc


def _matcher_args(p):
    p.add_argument("--A", required=True, help="template graph (edge list or CSV adjacency)")
    p.add_argument("--B", required=True, help="background graph")
    p.add_argument("--S", help="similarity matrix CSV (m x n)")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--scheme", choices=SCHEMES, default=CENTERED)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--seeds", default="", help="fixed pairs 'template:background,...'")
    p.add_argument("--eta", type=float)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", help="CSV output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gmmf", description="Graph-matching matched filters with diversification.")
    sub = parser.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="sample a planted instance and write it to a directory")
    g.add_argument("--config", help="JSON with 'model', 'similarity' and 'master_seed'")
    g.add_argument("--templates", type=int, choices=(2, 3), default=2)
    g.add_argument("--m", type=int, default=50)
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--p", type=float, default=0.8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    m = sub.add_parser("match", help="ranked restarts on one template/background pair")
    _matcher_args(m)

    d = sub.add_parser("discover", help="multi-round penalized matching")
    _matcher_args(d)
    d.add_argument("--eps", type=float, nargs="+", default=[0.0],
                   help="one penalty for every round, or one per round")
    d.add_argument("--rounds", type=int, default=2)
    d.add_argument("--strategy", choices=STRATEGIES, default="similarity")

    r = sub.add_parser("grid", help="run an experiment grid from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--master-seed", type=int)
    r.add_argument("--mc-reps", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--per-rep", help="per-repetition CSV path")
    r.add_argument("--aggregate", help="per-cell CSV path")
    r.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte-identical output)")

    o = sub.add_parser("oracle", help="exhaustive search over all injections")
    o.add_argument("--A", required=True)
    o.add_argument("--B", required=True)
    o.add_argument("--S")
    o.add_argument("--lam", type=float, default=0.0)
    o.add_argument("--scheme", choices=SCHEMES, default=CENTERED)
    return parser


def _load_pair(args):
    A, B = read_graph(args.A), read_graph(args.B)
    S = read_matrix_csv(args.S) if args.S else None
    return A, B, S


def _fw_config(args) -> FwConfig:
    try:
        return FwConfig(lam=args.lam, eta=args.eta, max_iters=args.max_iters, n_restarts=args.restarts,
                        seeds=_seed_pairs(args.seeds), scheme=args.scheme, master_seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8") if path else sys.stdout


def _cmd_generate(args) -> None:
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        try:
            spec = McerSpec.from_dict(cfg["model"])
            sim = SimilaritySpec(cfg["similarity"]) if "similarity" in cfg else None
            seed = int(cfg.get("master_seed", args.seed))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid generate config: {exc}") from exc
    else:
        build = two_template_spec if args.templates == 2 else three_template_spec
        try:
            spec, sim = build(args.m, args.n, args.k, args.p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        seed = args.seed
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    inst = sample_mcer(spec, rng, sim)
    os.makedirs(args.out, exist_ok=True)
    write_edgelist(inst.A, os.path.join(args.out, "A.txt"))
    write_edgelist(inst.B, os.path.join(args.out, "B.txt"))
    if inst.S is not None:
        write_matrix_csv(inst.S, os.path.join(args.out, "S.csv"))
    with open(os.path.join(args.out, "truths.csv"), "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(t.tolist() for t in inst.truths)
    with open(os.path.join(args.out, "spec.json"), "w") as fh:
        json.dump({"model": spec.to_dict(), "similarity": None if sim is None else list(sim.mus),
                   "master_seed": seed}, fh, indent=2)


def _cmd_match(args) -> None:
    A, B, S = _load_pair(args)
    cfg = _fw_config(args)
    ranked = match_restarts(pad(A, B, args.scheme), S, cfg)
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "restart", "objective", "iterations", "converged", "assignment"])
        for rank, r in enumerate(ranked):
            w.writerow([rank, r.restart, repr(r.objective), r.iterations, int(r.converged),
                        " ".join(map(str, r.assignment.tolist()))])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _cmd_discover(args) -> None:
    A, B, S = _load_pair(args)
    cfg = _fw_config(args)
    try:
        if len(args.eps) == 1:
            schedule = PenaltySchedule.fixed(args.eps[0])
        else:
            schedule = PenaltySchedule.per_round(args.eps)
        log = discover(pad(A, B, args.scheme), S, cfg, schedule, args.strategy, args.rounds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "strategy", "eps", "objective", "iterations", "assignment"])
        for r in log.rounds:
            w.writerow([r.index, r.strategy, "" if r.eps is None else repr(r.eps), repr(r.objective),
                        r.result.iterations, " ".join(map(str, r.assignment.tolist()))])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _cmd_grid(args) -> None:
    overrides = {}
    if args.master_seed is not None:
        overrides["master_seed"] = args.master_seed
    if args.mc_reps is not None:
        overrides["mc_reps"] = args.mc_reps
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.timing:
        overrides["timing"] = True
    config = ExperimentConfig.load(args.config, **overrides)
    per_rep = args.per_rep or config.per_rep_csv
    aggregate = args.aggregate or config.aggregate_csv
    if not per_rep or not aggregate:
        raise ConfigError("output paths missing: set outputs.per_rep/aggregate or pass --per-rep/--aggregate")
    table = run_grid(config)
    emit_results(table, per_rep, aggregate)


def _cmd_oracle(args) -> None:
    A, B, S = _load_pair(args)
    sigma, value = brute_force_match(A, B, S, args.lam, args.scheme)
    print(f"objective,{value!r}")
    print("assignment," + " ".join(map(str, sigma.tolist())))


COMMANDS = {
    "generate": _cmd_generate,
    "match": _cmd_match,
    "discover": _cmd_discover,
    "grid": _cmd_grid,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.verb](args)
    except OracleSizeError as exc:
        print(f"gmmf: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except OSError as exc:
        print(f"gmmf: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, json.JSONDecodeError) as exc:
        print(f"gmmf: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
