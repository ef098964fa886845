"""Attention-level penalties for robust training.

Two strategies share one interface:

* ``ENTROPY_MIN`` - mean Shannon entropy of the attention rows. Pushing it
  down makes each node concentrate on few neighbors, so a minority of
  rogue neighbors can be shut out instead of being averaged in.
* ``SELF_ANCHOR`` - mean of ``(1 - alpha_ii)**2``. Pulls attention back onto
  the node's own representation.

Both are averaged over every (regularized layer, head, node) triple. The
values are unweighted; the trainer multiplies by ``RegSpec.lam``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .attention_analysis import AttentionMap, mean_norm_entropy, row_entropy
from .ndcompute import masked_softmax_backward

_TINY = 1e-300


class RegKind(str, enum.Enum):
    NONE = "none"
    ENTROPY_MIN = "entropy_min"
    SELF_ANCHOR = "self_anchor"


@dataclass(frozen=True)
class RegSpec:
    kind: RegKind = RegKind.NONE
    lam: float = 0.0
    apply_layers: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        object.__setattr__(self, "apply_layers", tuple(sorted(set(self.apply_layers))))
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError("regularization weight must be finite and >= 0")
        if self.kind is RegKind.NONE and self.lam != 0:
            raise ValueError("a nonzero weight needs a regularizer kind")
        if self.kind is not RegKind.NONE:
            if not self.apply_layers or not set(self.apply_layers) <= {1, 2}:
                raise ValueError("apply_layers must be a nonempty subset of {1, 2}")

    @property
    def active(self) -> bool:
        return self.kind is not RegKind.NONE and self.lam > 0

    def with_lam(self, lam: float) -> "RegSpec":
        return RegSpec(self.kind, lam, self.apply_layers)


def _layers(attn: AttentionMap, spec: RegSpec):
    return [l for l in spec.apply_layers if l <= attn.n_layers]


def _n_terms(attn: AttentionMap, adj, spec: RegSpec) -> int:
    return sum(attn.n_heads(l) for l in _layers(attn, spec)) * adj.n


def reg_value(attn: AttentionMap, adj, spec: RegSpec) -> float:
    if spec.kind is RegKind.NONE:
        return 0.0
    total = 0.0
    for l in _layers(attn, spec):
        alpha = attn.layers[l - 1]
        if spec.kind is RegKind.ENTROPY_MIN:
            total += sum(row_entropy(alpha[:, h], adj)[0].sum() for h in range(alpha.shape[1]))
        else:
            total += float(((1.0 - alpha[adj.self_loop_pos]) ** 2).sum())
    return float(total / _n_terms(attn, adj, spec))


def reg_grad_alpha(attn: AttentionMap, adj, spec: RegSpec) -> dict[int, np.ndarray]:
    """Gradient of the (unweighted) penalty w.r.t. attention, per layer."""
    out = {}
    if spec.kind is RegKind.NONE:
        return out
    scale = 1.0 / _n_terms(attn, adj, spec)
    for l in _layers(attn, spec):
        alpha = attn.layers[l - 1]
        if spec.kind is RegKind.ENTROPY_MIN:
            g = -(np.log(np.maximum(alpha, _TINY)) + 1.0) * scale
        else:
            g = np.zeros_like(alpha)
            g[adj.self_loop_pos] = -2.0 * (1.0 - alpha[adj.self_loop_pos]) * scale
        out[l] = g
    return out


def reg_grad_scores(attn: AttentionMap, adj, spec: RegSpec) -> dict[int, np.ndarray]:
    """Gradient of the penalty w.r.t. the pre-softmax scores, per layer."""
    return {
        l: masked_softmax_backward(attn.layers[l - 1], g, adj)
        for l, g in reg_grad_alpha(attn, adj, spec).items()
    }


@dataclass
class SweepRow:
    lam: float
    mean_val_acc: float
    mean_norm_entropy: float
    reports: list


@dataclass
class SweepResult:
    rows: list[SweepRow]
    best_lam: float

    def table(self) -> list[tuple[float, float, float]]:
        return [(r.lam, r.mean_val_acc, r.mean_norm_entropy) for r in self.rows]


def lambda_sweep(features, labels, adj, split, cfg, kind, lambdas, seeds) -> SweepResult:
    """Train once per (lambda, seed) and pick the lambda with best mean val accuracy.

    Ties go to the smaller lambda. ``features`` is the model input matrix
    (already normalized) and may include unlabeled rogue rows.
    """
    from .gat_model import evaluate, train

    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("lambda list is empty")
    base = cfg.regularizer
    rows = []
    for lam in lambdas:
        spec = RegSpec(RegKind(kind), lam, base.apply_layers)
        accs, ents, reports = [], [], []
        for s in seeds:
            run_cfg = cfg.replace(seed=int(s), regularizer=spec)
            rep = train(features, labels, adj, split, run_cfg)
            accs.append(evaluate(rep.final_params, features, adj, labels, split.val_idx, run_cfg))
            ents.append(mean_norm_entropy(rep.final_attention, adj))
            reports.append(rep)
        rows.append(SweepRow(lam, float(np.mean(accs)), float(np.mean(ents)), reports))
    best = max(rows, key=lambda r: (r.mean_val_acc, -r.lam))
    return SweepResult(rows=rows, best_lam=best.lam)
