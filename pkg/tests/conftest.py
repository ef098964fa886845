import sys
import numpy as np
import pytest

from robustgat.graph_store import build_csr


def random_graph(n, p, rng):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return build_csr(edges, n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_planetoid(tmp_path):
    content = tmp_path / "tiny.content"
    cites = tmp_path / "tiny.cites"
    content.write_text("p1\t1\t0\tTheory\np2\t0\t1\tAI\np3\t1\t1\tTheory\n")
    cites.write_text("p1\tp2\n")
    return content, cites


def pytest_addoption(parser):
    parser.addoption("--cora-dir", default=None,
                     help="directory holding cora.content and cora.cites (default: <repo>/data/cora)")
    parser.addoption("--acceptance-jobs", type=int, default=None,
                     help="worker processes for the acceptance benchmark")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
