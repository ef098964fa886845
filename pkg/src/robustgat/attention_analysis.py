"""Entropy and rogue-mass diagnostics over learned attention coefficients.

Layers are numbered from 1, heads from 0. All statistics are meant to be
computed on eval-mode attention, where every CSR row sums to one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ndcompute import segment_sum

N_BINS = 20


@dataclass
class AttentionMap:
    """Per-layer attention arrays of shape ``(n_edges, heads)``."""

    layers: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def n_heads(self, layer: int) -> int:
        return self.layers[layer - 1].shape[1]

    def head(self, layer: int, head: int) -> np.ndarray:
        return self.layers[layer - 1][:, head]

    def pairs(self):
        for layer in range(1, self.n_layers + 1):
            for head in range(self.n_heads(layer)):
                yield layer, head


@dataclass
class AttentionStats:
    layer_id: int
    head_id: int
    per_node_entropy: np.ndarray
    per_node_norm_entropy: np.ndarray
    mean_rogue_mass: float
    rogue_adjacent_count: int
    per_class_entropy_means: np.ndarray
    histogram: np.ndarray


@dataclass
class RogueMass:
    mean: float
    count: int
    per_node: np.ndarray  # rogue mass of every node; 0 where no rogue neighbor


def _xlogx(a: np.ndarray) -> np.ndarray:
    return np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)


def row_entropy(alpha: np.ndarray, adj) -> tuple[np.ndarray, np.ndarray]:
    """Entropy (nats) of each CSR row and the same divided by ln(degree)."""
    h = -segment_sum(_xlogx(alpha), adj)
    h = np.maximum(h, 0.0)
    logdeg = np.log(adj.degrees.astype(np.float64))
    norm = np.divide(h, logdeg, out=np.zeros_like(h), where=adj.degrees > 1)
    return h, norm


def attention_entropy(attn: AttentionMap, adj, layer: int, head: int):
    return row_entropy(attn.head(layer, head), adj)


def _rogue_mask(adj, rogue_ids) -> np.ndarray:
    mask = np.zeros(adj.n, dtype=bool)
    mask[np.asarray(rogue_ids, dtype=np.int64)] = True
    return mask


def _rogue_mass(alpha, adj, is_rogue) -> tuple[np.ndarray, np.ndarray]:
    hit = is_rogue[adj.col_idx] & (adj.col_idx != adj.edge_rows)
    mass = segment_sum(np.where(hit, alpha, 0.0), adj)
    adjacent = segment_sum(hit.astype(np.int64), adj) > 0
    return mass, adjacent


def rogue_attention_mass(attn: AttentionMap, adj, rogue_ids, layer: int, head: int) -> RogueMass:
    """Mean attention that clean nodes with a rogue neighbor place on rogues."""
    is_rogue = _rogue_mask(adj, rogue_ids)
    mass, adjacent = _rogue_mass(attn.head(layer, head), adj, is_rogue)
    sel = adjacent & ~is_rogue
    count = int(sel.sum())
    mean = float(mass[sel].mean()) if count else 0.0
    return RogueMass(mean=mean, count=count, per_node=mass)


def histogram(norm_entropy: np.ndarray) -> np.ndarray:
    bins = np.clip(np.floor(norm_entropy * N_BINS).astype(np.int64), 0, N_BINS - 1)
    return np.bincount(bins, minlength=N_BINS)


def stats_report(attn: AttentionMap, adj, rogue_ids, labels) -> list[AttentionStats]:
    """One ``AttentionStats`` per (layer, head), in ascending order.

    ``labels`` covers the first ``len(labels)`` nodes (the clean ones);
    class entropy means are taken over those nodes only.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    out = []
    for layer, head in attn.pairs():
        h, hn = attention_entropy(attn, adj, layer, head)
        rm = rogue_attention_mass(attn, adj, rogue_ids, layer, head)
        hl = h[: labels.shape[0]]
        counts = np.bincount(labels, minlength=n_classes)
        sums = np.bincount(labels, weights=hl, minlength=n_classes)
        class_means = np.divide(sums, counts, out=np.full(n_classes, np.nan), where=counts > 0)
        out.append(
            AttentionStats(
                layer_id=layer,
                head_id=head,
                per_node_entropy=h,
                per_node_norm_entropy=hn,
                mean_rogue_mass=rm.mean,
                rogue_adjacent_count=rm.count,
                per_class_entropy_means=class_means,
                histogram=histogram(hn),
            )
        )
    return out


def mean_norm_entropy(attn: AttentionMap, adj) -> float:
    """Normalized entropy averaged over every (layer, head, node)."""
    vals = [attention_entropy(attn, adj, l, h)[1].mean() for l, h in attn.pairs()]
    return float(np.mean(vals))


def mean_rogue_mass(attn: AttentionMap, adj, rogue_ids) -> float:
    """Rogue mass averaged over every (layer, head); 0 without rogue nodes."""
    if len(rogue_ids) == 0:
        return 0.0
    vals = [rogue_attention_mass(attn, adj, rogue_ids, l, h).mean for l, h in attn.pairs()]
    return float(np.mean(vals))


CSV_COLUMNS = [
    "layer", "head", "node", "degree", "entropy", "norm_entropy",
    "is_rogue_adjacent", "rogue_mass",
]


def write_attention_csv(path, attn: AttentionMap, adj, rogue_ids) -> int:
    """Write one row per (layer, head, node); returns the number of data rows.

    For every node, ``rogue_mass`` sums attention over rogue neighbors other
    than the node itself.
    """
    is_rogue = _rogue_mask(adj, rogue_ids)
    n_rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for layer, head in attn.pairs():
            alpha = attn.head(layer, head)
            h, hn = row_entropy(alpha, adj)
            mass, adjacent = _rogue_mass(alpha, adj, is_rogue)
            for i in range(adj.n):
                w.writerow([
                    layer, head, i, int(adj.degrees[i]),
                    f"{h[i]:.12g}", f"{hn[i]:.12g}",
                    "true" if adjacent[i] else "false", f"{mass[i]:.12g}",
                ])
                n_rows += 1
    return n_rows
