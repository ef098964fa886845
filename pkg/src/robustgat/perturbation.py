"""Rogue-node injection and the two attack grids.

Rogue nodes are appended after the clean nodes, wired only to clean
targets and given features from a distribution unlike the clean rows.
They carry no label and never enter a split.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import binfmt
from .graph_store import CsrAdjacency, Dataset, build_csr


class FeatureModel(str, enum.Enum):
    DENSE_BERNOULLI_HALF = "dense_bernoulli_half"
    DATASET_DENSITY_BERNOULLI = "dataset_density_bernoulli"
    FEATURE_SHUFFLE = "feature_shuffle"


class GridCase(str, enum.Enum):
    EDGES_FIXED_500 = "edges_fixed_500"
    NODES_FIXED_50 = "nodes_fixed_50"


# attack grid axis values per dataset group, in reporting order
GRIDS = {
    "table1": {
        GridCase.EDGES_FIXED_500: [50, 60, 70, 75, 80, 85, 90, 95, 100],
        GridCase.NODES_FIXED_50: [50, 100, 150, 200, 250, 300, 500],
    },
    "table2": {
        GridCase.EDGES_FIXED_500: [40, 50, 60, 70, 80, 90, 100],
        GridCase.NODES_FIXED_50: [50, 100, 200, 300, 400, 500],
    },
}
DATASET_TABLES = {"cora": "table1", "citeseer": "table2", "table1": "table1", "table2": "table2"}


@dataclass(frozen=True)
class NoiseSpec:
    n_rogue: int
    edges_per_rogue: int
    feature_model: FeatureModel = FeatureModel.DENSE_BERNOULLI_HALF
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "feature_model", FeatureModel(self.feature_model))
        if self.n_rogue < 0 or self.edges_per_rogue < 0:
            raise ValueError("rogue counts must be >= 0")


@dataclass(eq=False)
class PoisonedGraph:
    adj: CsrAdjacency
    features: np.ndarray  # raw (unnormalized) rows, clean first
    rogue_ids: np.ndarray
    n_clean: int

    @property
    def n_nodes(self) -> int:
        return self.adj.n

    def checksum(self) -> str:
        return binfmt.checksum(self.adj.row_ptr, self.adj.col_idx, self.features, self.rogue_ids)


def _rogue_features(dataset: Dataset, spec: NoiseSpec, rng) -> np.ndarray:
    n, d = spec.n_rogue, dataset.n_features
    if spec.feature_model is FeatureModel.DENSE_BERNOULLI_HALF:
        return (rng.random((n, d)) < 0.5).astype(np.float64)
    if spec.feature_model is FeatureModel.DATASET_DENSITY_BERNOULLI:
        density = float(np.mean(dataset.features > 0))
        return (rng.random((n, d)) < density).astype(np.float64)
    # clean rows with their columns scrambled: same sparsity, no class signal
    src = rng.integers(0, dataset.n_nodes, size=n)
    return np.stack([dataset.features[s, rng.permutation(d)] for s in src]) if n else np.zeros((0, d))


def inject_rogue_nodes(dataset: Dataset, adj: CsrAdjacency, spec: NoiseSpec) -> PoisonedGraph:
    n = dataset.n_nodes
    if adj.n != n:
        raise ValueError("adjacency does not match dataset")
    if spec.n_rogue == 0:
        return PoisonedGraph(adj, dataset.features.copy(), np.empty(0, np.int64), n)
    if spec.edges_per_rogue > n:
        raise ValueError(
            f"edges_per_rogue={spec.edges_per_rogue} exceeds the {n} clean nodes")
    rng = np.random.default_rng(spec.seed)
    targets = np.stack([rng.choice(n, size=spec.edges_per_rogue, replace=False)
                        for _ in range(spec.n_rogue)])
    rogue = np.arange(n, n + spec.n_rogue, dtype=np.int64)
    new_edges = np.stack([np.repeat(rogue, spec.edges_per_rogue), targets.ravel()], axis=1)
    feats = np.vstack([dataset.features, _rogue_features(dataset, spec, rng)])
    edges = np.vstack([adj.undirected_edges(), new_edges])
    return PoisonedGraph(build_csr(edges, n + spec.n_rogue), feats, rogue, n)


def noise_grid(case, dataset_tag: str = "table1", seed: int = 0,
               feature_model=FeatureModel.DENSE_BERNOULLI_HALF) -> list[NoiseSpec]:
    """Attack settings of one grid case for a dataset group, in reporting order.

    ``EDGES_FIXED_500`` varies the rogue count at 500 edges each;
    ``NODES_FIXED_50`` varies edges per rogue with 50 rogue nodes.
    """
    table = DATASET_TABLES[dataset_tag.lower()]
    case = GridCase(case)
    values = GRIDS[table][case]
    if case is GridCase.EDGES_FIXED_500:
        return [NoiseSpec(v, 500, feature_model, seed) for v in values]
    return [NoiseSpec(50, v, feature_model, seed) for v in values]


def poisoned_to_bytes(pg: PoisonedGraph, labels=None) -> bytes:
    arrays = {"features": pg.features, "row_ptr": pg.adj.row_ptr, "col_idx": pg.adj.col_idx}
    if labels is not None:
        arrays["labels"] = np.asarray(labels, dtype=np.int64)
    return binfmt.dumps(b"PGRF", {"n_clean": pg.n_clean}, arrays, footer=(b"ROGU", pg.rogue_ids))


def poisoned_from_bytes(data: bytes):
    """Return ``(PoisonedGraph, labels or None)``."""
    meta, arrays, footer = binfmt.loads(data, b"PGRF")
    if footer is None or footer[0] != b"ROGU":
        raise binfmt.FormatError("missing rogue-id footer")
    adj = CsrAdjacency(arrays["features"].shape[0], arrays["row_ptr"], arrays["col_idx"])
    pg = PoisonedGraph(adj, arrays["features"], footer[1], meta["n_clean"])
    return pg, arrays.get("labels")


def save_poisoned(path, pg: PoisonedGraph, labels=None) -> None:
    binfmt.write(path, poisoned_to_bytes(pg, labels))


def load_poisoned(path):
    return poisoned_from_bytes(binfmt.read(path))
