"""Reading and writing graphs and similarity matrices.

Two graph formats are supported:

* edge list: one ``u v [w]`` line per edge, whitespace separated, 0-based
  node ids; blank lines and ``#`` comments are ignored;
* dense CSV adjacency: ``n`` rows of ``n`` comma-separated numbers.

Both produce identical :class:`~gmmf.graph.Graph` values for the same graph.
"""
from __future__ import annotations

import csv
import os

import numpy as np

from .graph import Graph


def read_edgelist(path, n: int | None = None) -> Graph:
    """Read an edge list.

    ``n`` defaults to a ``# n=<int>`` header line if present, else to the
    largest node id plus one.
    """
    edges, weights = [], []
    header_n = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.startswith("# n="):
                header_n = int(line[4:])
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'u v [w]', got {line!r}")
            u, v = int(parts[0]), int(parts[1])
            if u < 0 or v < 0:
                raise ValueError(f"{path}:{lineno}: negative node id")
            if u == v:
                raise ValueError(f"{path}:{lineno}: self-loops are not supported")
            edges.append((u, v))
            weights.append(float(parts[2]) if len(parts) == 3 else 1.0)
    size = max((max(e) for e in edges), default=-1) + 1
    if n is None:
        n = size if header_n is None else header_n
    if n < size:
        raise ValueError(f"{path}: node id {size - 1} out of range for n={n}")
    adj = np.zeros((n, n))
    for (u, v), w in zip(edges, weights):
        if adj[u, v] != 0 and adj[u, v] != w:
            raise ValueError(f"{path}: conflicting weights for edge ({u}, {v})")
        adj[u, v] = adj[v, u] = w
    return Graph(adj)


def write_edgelist(graph: Graph, path) -> None:
    iu, ju = np.nonzero(np.triu(graph.adj, 1))
    with open(path, "w") as fh:
        fh.write(f"# n={graph.n}\n")
        for u, v in zip(iu, ju):
            if graph.weighted:
                fh.write(f"{u} {v} {float(graph.adj[u, v])!r}\n")
            else:
                fh.write(f"{u} {v}\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    if not rows:
        return np.zeros((0, 0))
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged CSV matrix")
    return np.array(rows)


def write_matrix_csv(matrix, path) -> None:
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([repr(float(x)) for x in row])


def read_adjacency_csv(path) -> Graph:
    return Graph(read_matrix_csv(path))


def read_graph(path, n: int | None = None) -> Graph:
    """Dispatch on extension: ``.csv`` is a dense adjacency, anything else an edge list."""
    if os.path.splitext(str(path))[1].lower() == ".csv":
        graph = read_adjacency_csv(path)
        if n is not None and n != graph.n:
            raise ValueError(f"{path}: expected {n} nodes, found {graph.n}")
        return graph
    return read_edgelist(path, n=n)
