"""Synthetic citation-style graphs for tests and offline benchmarking."""

from __future__ import annotations

import numpy as np

from .graph_store import Dataset, Split


def two_cluster_graph(n: int = 20, n_features: int = 10, seed: int = 0) -> tuple[Dataset, Split]:
    """Two dense clusters with disjoint feature prototypes.

    Label = cluster. The split trains on 2 nodes per cluster, validates on
    4 and tests on the rest, so the task is separable by construction.
    """
    rng = np.random.default_rng(seed)
    half = n // 2
    labels = np.array([0] * half + [1] * (n - half))
    edges = []
    for lo, hi in ((0, half), (half, n)):
        for i in range(lo, hi):
            for j in range(i + 1, hi):
                if rng.random() < 0.6:
                    edges.append((i, j))
    # a single bridge keeps the graph connected
    edges.append((half - 1, half))
    feats = np.zeros((n, n_features))
    k = n_features // 2
    for i in range(n):
        block = slice(0, k) if labels[i] == 0 else slice(k, n_features)
        feats[i, block] = rng.random(k) < 0.7
        feats[i, block.start] = 1.0
    ds = Dataset(features=feats, labels=labels, node_ids=[f"n{i}" for i in range(n)],
                 edges=np.array(edges), label_names=["a", "b"])
    train = np.array([0, 1, half, half + 1])
    val = np.array([2, 3, half + 2, half + 3])
    test = np.setdiff1d(np.arange(n), np.concatenate([train, val]))
    return ds, Split(train, val, test, seed)


def planted_citation_graph(
    n_nodes: int = 2708,
    n_features: int = 1433,
    n_classes: int = 7,
    n_edges: int = 5278,
    homophily: float = 0.81,
    words_per_node: int = 18,
    topic_share: float = 0.5,
    topic_vocab: int | None = None,
    seed: int = 0,
) -> Dataset:
    """Planted-partition graph with sparse binary bag-of-words features.

    Defaults mimic the published Cora statistics (node/feature/class/edge
    counts, edge homophily, ~1.3% feature density). Each class owns a
    vocabulary slice; a node draws ``topic_share`` of its words from its
    class slice and the rest uniformly. ``topic_vocab`` caps the size of
    each class slice; smaller slices make features more informative.
    """
    rng = np.random.default_rng(seed)
    labels = np.sort(rng.integers(0, n_classes, n_nodes))
    labels = rng.permutation(labels)
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]

    pairs = set()
    while len(pairs) < n_edges:
        i = int(rng.integers(n_nodes))
        if rng.random() < homophily:
            pool = by_class[labels[i]]
            j = int(pool[rng.integers(len(pool))])
        else:
            j = int(rng.integers(n_nodes))
        if i != j:
            pairs.add((min(i, j), max(i, j)))
    edges = np.array(sorted(pairs), dtype=np.int64)

    vocab = np.array_split(np.arange(n_features), n_classes)
    if topic_vocab is not None:
        vocab = [v[:topic_vocab] for v in vocab]
    feats = np.zeros((n_nodes, n_features))
    n_topic = int(round(words_per_node * topic_share))
    for i in range(n_nodes):
        own = vocab[labels[i]]
        feats[i, rng.choice(own, size=min(n_topic, len(own)), replace=False)] = 1.0
        rest = words_per_node - n_topic
        feats[i, rng.choice(n_features, size=rest, replace=False)] = 1.0
    return Dataset(
        features=feats,
        labels=labels,
        node_ids=[str(i) for i in range(n_nodes)],
        edges=edges,
        label_names=[f"class{c}" for c in range(n_classes)],
    )
