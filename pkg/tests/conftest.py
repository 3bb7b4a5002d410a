import numpy as np
import pytest

from gmmf.graph import Graph


def random_graph(rng, n, p=0.5):
    upper = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return Graph(upper + upper.T)


def random_weighted(rng, n, p=0.5):
    upper = np.triu(rng.random((n, n)) * (rng.random((n, n)) < p), 1)
    return Graph(upper + upper.T, weighted=True)


def planted_pair(rng, m, n, p=0.5):
    """Background plus a template that is an exact induced copy of it."""
    B = random_graph(rng, n, p)
    sigma = rng.permutation(n)[:m]
    return Graph(B.adj[np.ix_(sigma, sigma)]), B, sigma


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(report):
        parts = report[num]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
