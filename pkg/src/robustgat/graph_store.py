"""Citation-graph ingestion, CSR neighborhoods and transductive splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import binfmt


class ParseError(ValueError):
    """Malformed Planetoid input. Carries the offending file and line number."""

    def __init__(self, path, lineno: int, msg: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {msg}")


@dataclass(eq=False)
class Dataset:
    """Node features, labels and undirected edges of one citation graph.

    ``edges`` is an ``(m, 2)`` int array of unique pairs with ``src < dst``;
    self-citations are dropped because ``build_csr`` adds self-loops anyway.
    """

    features: np.ndarray
    labels: np.ndarray
    node_ids: list[str]
    edges: np.ndarray
    label_names: list[str] = field(default_factory=list)
    skipped_cites: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = len(self.node_ids)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError("features row count must equal number of node ids")
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per node")
        if len(set(self.node_ids)) != n:
            raise ValueError("duplicate node ids")
        if n and (self.labels.min() < 0):
            raise ValueError("negative label")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if not self.label_names:
            k = int(self.labels.max()) + 1 if n else 0
            self.label_names = [str(c) for c in range(k)]
        if n and self.labels.max() >= len(self.label_names):
            raise ValueError("label outside [0, n_classes)")

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.node_ids == other.node_ids
            and self.label_names == other.label_names
            and self.skipped_cites == other.skipped_cites
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.edges, other.edges)
        )


@dataclass(frozen=True, eq=False)
class CsrAdjacency:
    """Symmetric neighborhood structure with a self-loop in every row.

    Column indices are strictly increasing within a row. Per-edge arrays
    used elsewhere in the package (scores, attention) are aligned with
    ``col_idx``.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.col_idx.shape[0])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Row (destination node) of every stored entry."""
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)

    @cached_property
    def self_loop_pos(self) -> np.ndarray:
        """Position of entry (i, i) in ``col_idx`` for each row i."""
        pos = np.flatnonzero(self.edge_rows == self.col_idx)
        if pos.shape[0] != self.n:
            raise ValueError("adjacency is missing self-loops")
        return pos

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i] : self.row_ptr[i + 1]]

    def rows(self) -> dict[int, list[int]]:
        return {i: self.neighbors(i).tolist() for i in range(self.n)}

    def undirected_edges(self) -> np.ndarray:
        """Unique ``(i, j)`` pairs with ``i < j``; self-loops excluded."""
        r, c = self.edge_rows, self.col_idx
        keep = r < c
        return np.stack([r[keep], c[keep]], axis=1)

    def to_scipy(self, values=None):
        from scipy.sparse import csr_matrix

        if values is None:
            values = np.ones(self.n_edges)
        return csr_matrix((values, self.col_idx, self.row_ptr), shape=(self.n, self.n))

    def __eq__(self, other):
        if not isinstance(other, CsrAdjacency):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
        )


@dataclass(frozen=True, eq=False)
class Split:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_idx), len(self.val_idx), len(self.test_idx)

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.train_idx, other.train_idx)
            and np.array_equal(self.val_idx, other.val_idx)
            and np.array_equal(self.test_idx, other.test_idx)
        )


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line.strip():
                yield lineno, line


def load_planetoid(content_path, cites_path) -> Dataset:
    """Parse a ``.content`` / ``.cites`` pair.

    Label strings are mapped to integers by order of first appearance.
    Citation lines naming an unknown node id are skipped and counted in
    ``Dataset.skipped_cites``.
    """
    node_ids: list[str] = []
    index: dict[str, int] = {}
    rows: list[np.ndarray] = []
    label_idx: dict[str, int] = {}
    labels: list[int] = []
    width = None
    for lineno, line in _read_lines(content_path):
        cols = line.split("\t")
        if width is None:
            width = len(cols)
            if width < 3:
                raise ParseError(content_path, lineno, "expected id, features and label")
        elif len(cols) != width:
            raise ParseError(
                content_path, lineno, f"expected {width} columns, found {len(cols)}"
            )
        node_id, feats, label = cols[0], cols[1:-1], cols[-1]
        if node_id in index:
            raise ParseError(content_path, lineno, f"duplicate node id {node_id!r}")
        bad = next((t for t in feats if t not in ("0", "1")), None)
        if bad is not None:
            raise ParseError(content_path, lineno, f"non-binary feature token {bad!r}")
        index[node_id] = len(node_ids)
        node_ids.append(node_id)
        rows.append(np.array(feats, dtype=np.float64))
        labels.append(label_idx.setdefault(label, len(label_idx)))
    if not node_ids:
        raise ValueError(f"{content_path}: empty content file")

    pairs = []
    skipped = 0
    for lineno, line in _read_lines(cites_path):
        cols = line.split()
        if len(cols) != 2:
            raise ParseError(cites_path, lineno, f"expected 2 columns, found {len(cols)}")
        a, b = (index.get(c) for c in cols)
        if a is None or b is None:
            skipped += 1
            continue
        if a != b:
            pairs.append((min(a, b), max(a, b)))
    edges = np.array(sorted(set(pairs)), dtype=np.int64).reshape(-1, 2)
    return Dataset(
        features=np.vstack(rows),
        labels=np.array(labels, dtype=np.int64),
        node_ids=node_ids,
        edges=edges,
        label_names=list(label_idx),
        skipped_cites=skipped,
    )


def build_csr(edges, n: int) -> CsrAdjacency:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError(f"edge endpoint out of range for n={n}")
    loops = np.arange(n, dtype=np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1], loops])
    dst = np.concatenate([edges[:, 1], edges[:, 0], loops])
    keys = np.unique(src * n + dst)
    rows, cols = np.divmod(keys, n)
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=row_ptr[1:])
    return CsrAdjacency(n=n, row_ptr=row_ptr, col_idx=cols.astype(np.int64))


def row_normalize(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    s = x.sum(axis=1, keepdims=True)
    return np.divide(x, s, out=x.copy(), where=s > 0)


def make_split(
    dataset: Dataset,
    per_class_train: int = 20,
    n_val: int = 500,
    n_test: int = 1000,
    seed: int = 0,
) -> Split:
    """Stratified train set, then uniform val/test draws from the remainder."""
    n = dataset.n_nodes
    if per_class_train * dataset.n_classes + n_val + n_test > n:
        raise ValueError(
            f"split needs {per_class_train * dataset.n_classes + n_val + n_test} "
            f"nodes, dataset has {n}"
        )
    rng = np.random.default_rng(seed)
    train = []
    for c, name in enumerate(dataset.label_names):
        members = np.flatnonzero(dataset.labels == c)
        if len(members) < per_class_train:
            raise ValueError(
                f"class {name!r} has {len(members)} nodes, need {per_class_train}"
            )
        train.append(rng.permutation(members)[:per_class_train])
    train_idx = np.sort(np.concatenate(train)) if train else np.empty(0, np.int64)
    rest = np.setdiff1d(np.arange(n), train_idx)
    rest = rng.permutation(rest)
    return Split(
        train_idx=train_idx,
        val_idx=np.sort(rest[:n_val]),
        test_idx=np.sort(rest[n_val : n_val + n_test]),
        seed=seed,
    )


def dataset_to_bytes(dataset: Dataset, tag: str = "") -> bytes:
    adj = build_csr(dataset.edges, dataset.n_nodes)
    meta = {
        "tag": tag,
        "node_ids": dataset.node_ids,
        "label_names": dataset.label_names,
        "skipped_cites": dataset.skipped_cites,
    }
    arrays = {
        "features": dataset.features,
        "labels": dataset.labels,
        "edges": dataset.edges,
        "row_ptr": adj.row_ptr,
        "col_idx": adj.col_idx,
    }
    return binfmt.dumps(b"DSET", meta, arrays)


def dataset_from_bytes(data: bytes) -> tuple[Dataset, CsrAdjacency, str]:
    meta, arrays, _ = binfmt.loads(data, b"DSET")
    ds = Dataset(
        features=arrays["features"],
        labels=arrays["labels"],
        node_ids=meta["node_ids"],
        edges=arrays["edges"],
        label_names=meta["label_names"],
        skipped_cites=meta["skipped_cites"],
    )
    adj = CsrAdjacency(ds.n_nodes, arrays["row_ptr"], arrays["col_idx"])
    return ds, adj, meta["tag"]


def save_dataset(path, dataset: Dataset, tag: str = "") -> None:
    binfmt.write(path, dataset_to_bytes(dataset, tag))


def load_dataset(path) -> tuple[Dataset, CsrAdjacency, str]:
    """Read a cache written by ``save_dataset``: dataset, its CSR and tag."""
    return dataset_from_bytes(binfmt.read(path))
