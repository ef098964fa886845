import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustgat.attention_analysis import (
    CSV_COLUMNS,
    AttentionMap,
    histogram,
    mean_rogue_mass,
    rogue_attention_mass,
    row_entropy,
    stats_report,
    write_attention_csv,
)
from robustgat.graph_store import build_csr
from robustgat.ndcompute import masked_softmax

from conftest import random_graph


def _star(k):
    """Node 0 joined to 1..k-1; row 0 holds k entries."""
    return build_csr([(0, j) for j in range(1, k)], k)


def _row0(adj, vals):
    alpha = np.zeros(adj.n_edges)
    alpha[: len(vals)] = vals
    # leaves: split evenly between self and hub
    alpha[len(vals):] = 0.5
    return alpha


def test_entropy_examples():
    adj = _star(4)
    h, hn = row_entropy(_row0(adj, [1, 0, 0, 0]), adj)
    assert h[0] == 0.0 and hn[0] == 0.0
    h, hn = row_entropy(_row0(adj, [0.25] * 4), adj)
    assert h[0] == pytest.approx(math.log(4)) and h[0] == pytest.approx(1.38629, abs=1e-5)
    assert hn[0] == pytest.approx(1.0)
    adj = _star(3)
    h, _ = row_entropy(_row0(adj, [0.5, 0.25, 0.25]), adj)
    assert h[0] == pytest.approx(1.5 * math.log(2)) and h[0] == pytest.approx(1.03972, abs=1e-5)


def test_rogue_mass_examples():
    # node 0 with neighbors 1 (clean) and 2 (rogue)
    adj = build_csr([(0, 1), (0, 2)], 3)
    alpha = np.full(adj.n_edges, 0.5)
    alpha[:3] = 1 / 3
    attn = AttentionMap([alpha[:, None]])
    rm = rogue_attention_mass(attn, adj, [], 1, 0)
    assert rm.mean == 0.0 and rm.count == 0
    # one rogue of two neighbors, uniform over neighbors only (self weight 0)
    alpha[:3] = [0.0, 0.5, 0.5]
    rm = rogue_attention_mass(attn, adj, [2], 1, 0)
    assert rm.mean == pytest.approx(0.5) and rm.count == 1
    assert rm.per_node[0] == pytest.approx(0.5)
    # two rogue neighbors carrying 0.1 and 0.3
    adj = build_csr([(0, 1), (0, 2), (0, 3)], 4)
    alpha = np.full(adj.n_edges, 0.5)
    alpha[:4] = [0.2, 0.4, 0.1, 0.3]
    rm = rogue_attention_mass(AttentionMap([alpha[:, None]]), adj, [2, 3], 1, 0)
    assert rm.per_node[0] == pytest.approx(0.4)
    assert mean_rogue_mass(AttentionMap([alpha[:, None]]), adj, []) == 0.0


def test_histogram_examples():
    adj = build_csr([(0, 1), (1, 2), (2, 3), (3, 0)], 4)
    uniform = masked_softmax(np.zeros(adj.n_edges), adj)
    _, hn = row_entropy(uniform, adj)
    counts = histogram(hn)
    assert np.allclose(hn, 1.0) and counts[-1] == 4 and counts.sum() == 4
    one_hot = np.zeros(adj.n_edges)
    one_hot[adj.self_loop_pos] = 1.0
    _, hn = row_entropy(one_hot, adj)
    assert histogram(hn)[0] == 4


def test_histogram_mixed_rows():
    # path 0-1-2-3; rows by hand:
    # 0: [1, 0]            -> 0              bin 0
    # 1: [0.5, 0.5, 0]     -> ln2/ln3=0.631  bin 12
    # 2: uniform of 3      -> 1              bin 19
    # 3: [0.5, 0.5]        -> 1              bin 19
    adj = build_csr([(0, 1), (1, 2), (2, 3)], 4)
    alpha = np.array([1, 0, 0.5, 0.5, 0, 1 / 3, 1 / 3, 1 / 3, 0.5, 0.5])
    _, hn = row_entropy(alpha, adj)
    assert hn[1] == pytest.approx(math.log(2) / math.log(3))
    expected = np.zeros(20, int)
    expected[[0, 12]] = 1
    expected[19] = 2
    assert histogram(hn).tolist() == expected.tolist()


def test_csv_layout(tmp_path):
    adj = build_csr([(0, 1), (1, 2)], 3)
    a1 = np.stack([masked_softmax(np.zeros(7), adj)] * 2, axis=1)
    a2 = masked_softmax(np.arange(7.0), adj)[:, None]
    path = tmp_path / "a.csv"
    n = write_attention_csv(path, AttentionMap([a1, a2]), adj, [2])
    lines = path.read_text().splitlines()
    assert n == (2 + 1) * 3 and len(lines) == n + 1
    assert lines[0] == ",".join(CSV_COLUMNS)
    keys = [tuple(map(int, l.split(",")[:3])) for l in lines[1:]]
    assert keys == sorted(keys)
    row1 = lines[2].split(",")
    assert row1[:4] == ["1", "0", "1", "3"]
    assert row1[6] == "true" and float(row1[7]) == pytest.approx(1 / 3)
    assert lines[3].split(",")[6] == "false"  # node 2 is itself the rogue, no rogue neighbor


def test_stats_report_shapes(rng):
    adj = random_graph(10, 0.3, rng)
    attn = AttentionMap([np.stack([masked_softmax(rng.standard_normal(adj.n_edges), adj)
                                   for _ in range(3)], 1),
                         masked_softmax(rng.standard_normal(adj.n_edges), adj)[:, None]])
    rep = stats_report(attn, adj, [8, 9], rng.integers(0, 2, 8))
    assert [(s.layer_id, s.head_id) for s in rep] == [(1, 0), (1, 1), (1, 2), (2, 0)]
    assert all(s.histogram.sum() == 10 and s.per_class_entropy_means.shape == (2,) for s in rep)


@given(st.integers(2, 14), st.floats(0.05, 0.9), st.integers(0, 2**31), st.floats(0.1, 30))
@settings(max_examples=80, deadline=None)
def test_entropy_bounds_and_relabeling(n, p, seed, scale):
    r = np.random.default_rng(seed)
    adj = random_graph(n, p, r)
    alpha = masked_softmax(scale * r.standard_normal(adj.n_edges), adj)
    h, hn = row_entropy(alpha, adj)
    logdeg = np.log(adj.degrees)
    assert np.all(h >= 0) and np.all(h <= logdeg + 1e-12)
    assert np.all(hn <= 1 + 1e-12)

    # permuting nodes and rogue ids leaves the mean rogue mass unchanged
    rogues = r.choice(n, size=max(1, n // 4), replace=False)
    perm = r.permutation(n)
    inv = np.argsort(perm)
    adj_p = build_csr(inv[adj.undirected_edges()], n)
    # carry alpha over edge-by-edge
    lookup = {(i, j): alpha[k] for k, (i, j) in enumerate(zip(adj.edge_rows, adj.col_idx))}
    alpha_p = np.array([lookup[(perm[i], perm[j])] for i, j in zip(adj_p.edge_rows, adj_p.col_idx)])
    a = rogue_attention_mass(AttentionMap([alpha[:, None]]), adj, rogues, 1, 0)
    b = rogue_attention_mass(AttentionMap([alpha_p[:, None]]), adj_p, inv[rogues], 1, 0)
    assert a.count == b.count and a.mean == pytest.approx(b.mean, abs=1e-12)
