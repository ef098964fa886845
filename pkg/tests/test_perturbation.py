import math

import numpy as np
import pytest

from robustgat.graph_store import Dataset, build_csr, make_split
from robustgat.perturbation import (
    FeatureModel,
    GridCase,
    NoiseSpec,
    inject_rogue_nodes,
    load_poisoned,
    noise_grid,
    save_poisoned,
)
from robustgat.synthetic import planted_citation_graph

from conftest import random_graph


def _clean(rng, n=30, d=20):
    adj = random_graph(n, 0.15, rng)
    feats = (rng.random((n, d)) < 0.1).astype(float)
    ds = Dataset(feats, rng.integers(0, 3, n), [str(i) for i in range(n)], adj.undirected_edges())
    return ds, adj


def _sub_rows(adj, n):
    return {i: [j for j in nb if j < n] for i, nb in adj.rows().items() if i < n}


def test_zero_rogue_is_identity(rng):
    ds, adj = _clean(rng)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(0, 5))
    assert pg.adj == adj and np.array_equal(pg.features, ds.features)
    assert pg.rogue_ids.size == 0 and pg.n_clean == 30


@pytest.mark.parametrize("fm", list(FeatureModel))
def test_degree_and_edge_accounting(rng, fm):
    ds, adj = _clean(rng)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(4, 7, fm, seed=3))
    assert pg.n_nodes == 34 and pg.features.shape == (34, 20)
    assert pg.rogue_ids.tolist() == [30, 31, 32, 33]
    assert np.all(pg.adj.degrees[30:] == 8)
    added = len(pg.adj.undirected_edges()) - len(adj.undirected_edges())
    assert added == 4 * 7
    for r in pg.rogue_ids:
        assert all(j < 30 or j == r for j in pg.adj.neighbors(r))


def test_clean_subgraph_preserved(rng):
    ds, adj = _clean(rng)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(5, 10, seed=1))
    assert _sub_rows(pg.adj, 30) == adj.rows()
    assert np.array_equal(pg.features[:30], ds.features)


def test_same_seed_bitwise_identical(rng):
    ds, adj = _clean(rng)
    spec = NoiseSpec(3, 6, FeatureModel.FEATURE_SHUFFLE, seed=11)
    a, b = inject_rogue_nodes(ds, adj, spec), inject_rogue_nodes(ds, adj, spec)
    assert a.checksum() == b.checksum()
    c = inject_rogue_nodes(ds, adj, NoiseSpec(3, 6, FeatureModel.FEATURE_SHUFFLE, seed=12))
    assert c.checksum() != a.checksum()


def test_too_many_edges_per_rogue(rng):
    ds, adj = _clean(rng)
    with pytest.raises(ValueError, match="exceeds"):
        inject_rogue_nodes(ds, adj, NoiseSpec(1, 31))
    inject_rogue_nodes(ds, adj, NoiseSpec(1, 30))
    # no rogues means no targets to draw
    assert inject_rogue_nodes(ds, adj, NoiseSpec(0, 500)).adj == adj


def test_feature_shuffle_keeps_row_sparsity(rng):
    ds, adj = _clean(rng)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(6, 2, FeatureModel.FEATURE_SHUFFLE, seed=0))
    clean_counts = set(ds.features.sum(1).tolist())
    assert set(pg.features[30:].sum(1).tolist()) <= clean_counts


def test_rogues_never_in_split():
    ds = planted_citation_graph(n_edges=2000, seed=1)
    adj = build_csr(ds.edges, ds.n_nodes)
    split = make_split(ds, seed=0)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(50, 500, seed=5))
    assert pg.n_nodes == 2758
    assert len(pg.adj.undirected_edges()) - len(adj.undirected_edges()) == 25000
    used = np.concatenate([split.train_idx, split.val_idx, split.test_idx])
    assert used.max() < ds.n_nodes


def test_dense_rogues_distinguishable_from_clean():
    ds = planted_citation_graph(n_edges=200, seed=0)
    adj = build_csr(ds.edges, ds.n_nodes)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(50, 10, seed=0))
    clean, rogue = pg.features[: ds.n_nodes], pg.features[ds.n_nodes :]
    n1, n2 = clean.size, rogue.size
    p1, p2 = clean.mean(), rogue.mean()
    assert abs(p2 - 0.5) < 0.01
    pool = (clean.sum() + rogue.sum()) / (n1 + n2)
    z = (p2 - p1) / math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    p_value = math.erfc(z / math.sqrt(2))
    assert p_value < 1e-6


def test_dataset_density_model(rng):
    ds, adj = _clean(rng, n=40, d=200)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(40, 3, FeatureModel.DATASET_DENSITY_BERNOULLI, seed=2))
    assert abs(pg.features[40:].mean() - ds.features.mean()) < 0.02


def test_grid_values():
    g = noise_grid(GridCase.EDGES_FIXED_500, "cora")
    assert len(g) == 9 and (g[0].n_rogue, g[0].edges_per_rogue) == (50, 500)
    assert [s.n_rogue for s in g] == [50, 60, 70, 75, 80, 85, 90, 95, 100]
    g = noise_grid(GridCase.NODES_FIXED_50, "cora")
    assert len(g) == 7 and (g[-1].n_rogue, g[-1].edges_per_rogue) == (50, 500)
    assert [s.edges_per_rogue for s in g] == [50, 100, 150, 200, 250, 300, 500]
    assert [s.n_rogue for s in noise_grid("edges_fixed_500", "citeseer")] == [40, 50, 60, 70, 80, 90, 100]
    assert [s.edges_per_rogue for s in noise_grid("nodes_fixed_50", "table2")] == [50, 100, 200, 300, 400, 500]


def test_noise_spec_rejects_negative():
    with pytest.raises(ValueError):
        NoiseSpec(-1, 5)


def test_poisoned_roundtrip(tmp_path, rng):
    ds, adj = _clean(rng)
    pg = inject_rogue_nodes(ds, adj, NoiseSpec(2, 4, seed=9))
    path = tmp_path / "p.bin"
    save_poisoned(path, pg, ds.labels)
    back, labels = load_poisoned(path)
    assert back.checksum() == pg.checksum()
    assert back.n_clean == 30 and np.array_equal(labels, ds.labels)
