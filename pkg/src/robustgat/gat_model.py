"""Two-layer multi-head graph attention network with a hand-derived backward pass.

Layer 1: ``heads_l1`` heads of width ``hidden_dim``, concatenated, ELU.
Layer 2: ``heads_l2`` heads of width ``n_classes``, averaged, linear logits.

Per head, with ``z = H @ W``::

    e_ij  = leaky_relu(a_src . z_i + a_dst . z_j)     for every CSR entry (i, j)
    alpha = masked_softmax(e)                          over row i
    out_i = sum_j alpha_ij z_j
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csr_matrix

from . import binfmt
from .attention_analysis import AttentionMap
from .ndcompute import (
    elu,
    elu_grad,
    leaky_relu,
    leaky_relu_grad,
    masked_softmax,
    masked_softmax_backward,
    scatter_cols,
    segment_sum,
    softmax_xent,
)
from .robust_reg import RegKind, RegSpec, reg_grad_scores, reg_value

log = logging.getLogger(__name__)

# inputs sparser than this are trained through the sparse layer-1 path
SPARSE_INPUT_DENSITY = 0.1


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        self.epoch = epoch
        super().__init__(f"non-finite training loss ({value}) at epoch {epoch}")


@dataclass(frozen=True)
class GatConfig:
    hidden_dim: int = 8
    heads_l1: int = 8
    heads_l2: int = 1
    dropout_p: float = 0.6
    attn_dropout_p: float = 0.6
    leaky_slope: float = 0.2
    lr: float = 0.005
    weight_decay: float = 5e-4
    max_epochs: int = 1000
    patience: int = 100
    seed: int = 0
    regularizer: RegSpec = field(default_factory=RegSpec)

    def __post_init__(self):
        for name in ("hidden_dim", "heads_l1", "heads_l2", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        for name in ("dropout_p", "attn_dropout_p"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    @property
    def lam(self) -> float:
        return self.regularizer.lam

    def replace(self, **changes) -> "GatConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        r = self.regularizer
        d["regularizer"] = {"kind": r.kind.value, "lam": r.lam, "apply_layers": list(r.apply_layers)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GatConfig":
        d = dict(d)
        r = d.pop("regularizer", None) or {}
        reg = RegSpec(RegKind(r.get("kind", "none")), float(r.get("lam", 0.0)),
                      tuple(r.get("apply_layers", (1, 2))))
        return cls(regularizer=reg, **d)


@dataclass
class LayerParams:
    W: np.ndarray      # (heads, in_dim, out_dim)
    a_src: np.ndarray  # (heads, out_dim)
    a_dst: np.ndarray  # (heads, out_dim)

    @property
    def heads(self) -> int:
        return self.W.shape[0]


@dataclass
class GatParams:
    layers: list[LayerParams]

    def arrays(self) -> list[np.ndarray]:
        return [a for lp in self.layers for a in (lp.W, lp.a_src, lp.a_dst)]

    @classmethod
    def from_arrays(cls, arrays) -> "GatParams":
        arrays = list(arrays)
        return cls([LayerParams(*arrays[i : i + 3]) for i in range(0, len(arrays), 3)])

    def copy(self) -> "GatParams":
        return GatParams.from_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "GatParams":
        return GatParams.from_arrays([np.zeros_like(a) for a in self.arrays()])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_vector(self, vec) -> "GatParams":
        out, off = [], 0
        for a in self.arrays():
            out.append(np.asarray(vec[off : off + a.size], dtype=np.float64).reshape(a.shape))
            off += a.size
        return GatParams.from_arrays(out)

    def sq_norm(self) -> float:
        return float(sum(np.vdot(a, a) for a in self.arrays()))

    def shapes(self) -> list[tuple[int, ...]]:
        return [a.shape for a in self.arrays()]


def param_shapes(cfg: GatConfig, in_dim: int, n_classes: int) -> list[tuple[int, ...]]:
    h1, h2, d = cfg.heads_l1, cfg.heads_l2, cfg.hidden_dim
    return [(h1, in_dim, d), (h1, d), (h1, d), (h2, h1 * d, n_classes), (h2, n_classes), (h2, n_classes)]


def _glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: GatConfig, in_dim: int, n_classes: int, seed: int | None = None) -> GatParams:
    """Glorot-uniform weights; attention vectors use fan (2*out_dim, 1)."""
    if in_dim < 1 or n_classes < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dims = [
        (in_dim, cfg.hidden_dim, cfg.heads_l1),
        (cfg.heads_l1 * cfg.hidden_dim, n_classes, cfg.heads_l2),
    ]
    layers = []
    for d_in, d_out, heads in dims:
        W = _glorot(rng, (heads, d_in, d_out), d_in, d_out)
        a = _glorot(rng, (heads, 2, d_out), 2 * d_out, 1)
        layers.append(LayerParams(W, a[:, 0].copy(), a[:, 1].copy()))
    return GatParams(layers)


def _aggregate(alpha_h, adj, m):
    return csr_matrix((alpha_h, adj.col_idx, adj.row_ptr), shape=(adj.n, adj.n)) @ m


def _aggregate_t(alpha_h, adj, m):
    return csr_matrix((alpha_h, adj.col_idx, adj.row_ptr), shape=(adj.n, adj.n)).T @ m


def _dropout_mask(rng, shape, p):
    if rng is None or p <= 0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


@dataclass
class _LayerCache:
    H: np.ndarray
    in_mask: np.ndarray | None
    Z: np.ndarray
    e_raw: np.ndarray
    alpha: np.ndarray
    attn_mask: np.ndarray | None
    pre: np.ndarray | None
    concat: bool


def _layer_fwd(H, adj, lp: LayerParams, concat, slope, p=0.0, attn_p=0.0, rng=None):
    if H.shape[0] != adj.n:
        raise ValueError(f"feature rows {H.shape[0]} != graph nodes {adj.n}")
    heads, d_in, d_out = lp.W.shape
    if H.shape[1] != d_in:
        raise ValueError(f"feature width {H.shape[1]} != layer input {d_in}")
    in_mask = None
    if sparse.issparse(H):
        # dropping a stored zero is a no-op, so only stored entries get a mask
        mask = _dropout_mask(rng, H.data.shape, p)
        if mask is not None:
            H = H.copy()
            H.data = H.data * mask
    else:
        in_mask = _dropout_mask(rng, H.shape, p)
        if in_mask is not None:
            H = H * in_mask
    n = adj.n
    Z = np.asarray(H @ lp.W.transpose(1, 0, 2).reshape(d_in, heads * d_out)).reshape(n, heads, d_out)
    s_src = np.einsum("nho,ho->nh", Z, lp.a_src)
    s_dst = np.einsum("nho,ho->nh", Z, lp.a_dst)
    e_raw = s_src[adj.edge_rows] + s_dst[adj.col_idx]
    alpha = masked_softmax(leaky_relu(e_raw, slope), adj)
    attn_mask = _dropout_mask(rng, alpha.shape, attn_p)
    used = alpha if attn_mask is None else alpha * attn_mask
    out = np.stack([_aggregate(used[:, h], adj, Z[:, h, :]) for h in range(heads)], axis=1)
    if concat:
        pre = out.reshape(n, heads * d_out)
        H_out = elu(pre)
    else:
        pre = None
        H_out = out.mean(axis=1)
    return H_out, _LayerCache(H, in_mask, Z, e_raw, alpha, attn_mask, pre, concat)


def layer_forward(H, adj, lp: LayerParams, concat: bool, slope: float = 0.2):
    """Deterministic single-layer forward; returns ``(H_out, alpha)``."""
    H_out, c = _layer_fwd(_as_input(H), adj, lp, concat, slope)
    return H_out, c.alpha


def _layer_bwd(c: _LayerCache, adj, lp: LayerParams, dH, slope, reg_de=None, need_input=True):
    n = adj.n
    heads, d_in, d_out = lp.W.shape
    if c.concat:
        dout = (dH * elu_grad(c.pre)).reshape(n, heads, d_out)
    else:
        dout = np.broadcast_to(dH[:, None, :] / heads, (n, heads, d_out))
    used = c.alpha if c.attn_mask is None else c.alpha * c.attn_mask
    rows, cols = adj.edge_rows, adj.col_idx

    dZ = np.stack([_aggregate_t(used[:, h], adj, dout[:, h, :]) for h in range(heads)], axis=1)
    d_used = np.einsum("eho,eho->eh", dout[rows], c.Z[cols])
    d_alpha = d_used if c.attn_mask is None else d_used * c.attn_mask
    de = masked_softmax_backward(c.alpha, d_alpha, adj)
    if reg_de is not None:
        de = de + reg_de
    de_raw = de * leaky_relu_grad(c.e_raw, slope)
    ds_src = segment_sum(de_raw, adj)
    ds_dst = scatter_cols(de_raw, adj)

    da_src = np.einsum("nh,nho->ho", ds_src, c.Z)
    da_dst = np.einsum("nh,nho->ho", ds_dst, c.Z)
    dZ = dZ + ds_src[:, :, None] * lp.a_src[None] + ds_dst[:, :, None] * lp.a_dst[None]

    dZ2 = dZ.reshape(n, heads * d_out)
    dW = np.asarray(c.H.T @ dZ2).reshape(d_in, heads, d_out).transpose(1, 0, 2)
    dH_in = None
    if need_input:
        dH_in = dZ2 @ lp.W.transpose(1, 0, 2).reshape(d_in, heads * d_out).T
        if c.in_mask is not None:
            dH_in = dH_in * c.in_mask
    return LayerParams(np.ascontiguousarray(dW), da_src, da_dst), dH_in


@dataclass
class ForwardCache:
    layers: list[_LayerCache]


def _as_input(X):
    if sparse.issparse(X):
        return sparse.csr_matrix(X, dtype=np.float64)
    return np.asarray(X, dtype=np.float64)


def _forward(X, adj, params: GatParams, cfg: GatConfig, train_mode=False, rng=None):
    X = _as_input(X)
    if X.shape[0] != adj.n:
        raise ValueError(f"feature rows {X.shape[0]} != graph nodes {adj.n}")
    drop = train_mode and rng is not None
    p, ap = (cfg.dropout_p, cfg.attn_dropout_p) if drop else (0.0, 0.0)
    r = rng if drop else None
    H1, c1 = _layer_fwd(X, adj, params.layers[0], True, cfg.leaky_slope, p, ap, r)
    logits, c2 = _layer_fwd(H1, adj, params.layers[1], False, cfg.leaky_slope, p, ap, r)
    attn = AttentionMap([c1.alpha, c2.alpha])
    return logits, attn, ForwardCache([c1, c2])


def model_forward(X, adj, params: GatParams, cfg: GatConfig, train_mode=False, rng=None):
    """Return ``(logits, attention)``; dropout only when ``train_mode`` and ``rng`` given.

    The returned attention is always the pre-dropout softmax output.
    """
    logits, attn, _ = _forward(X, adj, params, cfg, train_mode, rng)
    return logits, attn


def model_backward(cache: ForwardCache | None, grad_logits, adj, params: GatParams,
                   cfg: GatConfig, reg_de: dict[int, np.ndarray] | None = None) -> GatParams:
    """Parameter gradients given dLoss/dlogits and optional per-layer dLoss/de.

    ``reg_de`` maps a 1-based layer number to an already-weighted gradient of
    the penalty w.r.t. that layer's pre-softmax scores.
    """
    if cache is None or len(cache.layers) != 2:
        raise ValueError("missing forward cache")
    reg_de = reg_de or {}
    g2, dH1 = _layer_bwd(cache.layers[1], adj, params.layers[1], grad_logits,
                         cfg.leaky_slope, reg_de.get(2))
    g1, _ = _layer_bwd(cache.layers[0], adj, params.layers[0], dH1,
                       cfg.leaky_slope, reg_de.get(1), need_input=False)
    return GatParams([g1, g2])


def loss_and_grad(params: GatParams, X, labels, adj, idx, cfg: GatConfig,
                  train_mode=False, rng=None, include_decay=False):
    """Objective ``xent + lam * reg (+ decay/2 * |params|^2)`` and its gradient."""
    logits, attn, cache = _forward(X, adj, params, cfg, train_mode, rng)
    loss, g = softmax_xent(logits, labels, idx)
    reg_de = None
    spec = cfg.regularizer
    if spec.active:
        loss += spec.lam * reg_value(attn, adj, spec)
        reg_de = {l: spec.lam * d for l, d in reg_grad_scores(attn, adj, spec).items()}
    grads = model_backward(cache, g, adj, params, cfg, reg_de)
    if include_decay and cfg.weight_decay:
        loss += 0.5 * cfg.weight_decay * params.sq_norm()
        grads = GatParams.from_arrays(
            [g + cfg.weight_decay * p for g, p in zip(grads.arrays(), params.arrays())])
    return loss, grads, logits, attn


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads, moments: AdamState, t: int, lr: float,
              betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update; L2 decay is folded into the gradient.

    Takes and returns lists of arrays; inputs are not modified.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2 = betas
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, moments.m, moments.v):
        if weight_decay:
            g = g + weight_decay * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v)


def accuracy(logits, labels, idx) -> float:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("accuracy over an empty index set")
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


def evaluate(params: GatParams, X, adj, labels, idx, cfg: GatConfig | None = None) -> float:
    """Eval-mode accuracy on ``idx``; ties resolve to the lowest class index."""
    logits, _ = model_forward(X, adj, params, cfg or GatConfig())
    return accuracy(logits, labels, idx)


@dataclass
class TrainReport:
    best_epoch: int
    val_acc_curve: list[float]
    val_loss_curve: list[float]
    train_loss_curve: list[float]
    val_acc: float
    test_acc: float
    final_params: GatParams
    final_attention: AttentionMap
    config: GatConfig

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "best_epoch": self.best_epoch,
            "epochs_run": len(self.train_loss_curve),
            "val_acc": self.val_acc,
            "test_acc": self.test_acc,
            "train_loss_curve": self.train_loss_curve,
            "val_loss_curve": self.val_loss_curve,
            "val_acc_curve": self.val_acc_curve,
        }


def train(X, labels, adj, split, cfg: GatConfig, n_classes: int | None = None) -> TrainReport:
    """Full-batch training with early stopping on validation loss.

    ``X`` is the model input (already row-normalized) and may contain rows
    for unlabeled nodes; ``labels`` must cover every index in ``split``.
    The parameters with the lowest validation loss are restored at the end.
    """
    X = _as_input(X)
    if not sparse.issparse(X) and np.count_nonzero(X) < SPARSE_INPUT_DENSITY * X.size:
        X = sparse.csr_matrix(X)
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init_params(cfg, X.shape[1], n_classes, seed=int(seeds[0].generate_state(1)[0]))
    drop_rng = np.random.default_rng(seeds[1])
    moments = AdamState.zeros(params.arrays())

    def val_metrics(p):
        logits, _ = model_forward(X, adj, p, cfg)
        loss, _ = softmax_xent(logits, labels, split.val_idx)
        return loss, accuracy(logits, labels, split.val_idx)

    best_loss, best_acc = val_metrics(params)
    best_epoch, best_params, bad = 0, params.copy(), 0
    train_curve, vloss_curve, vacc_curve = [], [], []
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads, _, _ = loss_and_grad(params, X, labels, adj, split.train_idx, cfg,
                                          train_mode=True, rng=drop_rng)
        total = loss + 0.5 * cfg.weight_decay * params.sq_norm()
        if not np.isfinite(total):
            raise TrainingDivergedError(epoch, total)
        new, moments = adam_step(params.arrays(), grads.arrays(), moments, epoch, cfg.lr,
                                 weight_decay=cfg.weight_decay)
        params = GatParams.from_arrays(new)
        vloss, vacc = val_metrics(params)
        if not np.isfinite(vloss):
            raise TrainingDivergedError(epoch, vloss)
        train_curve.append(float(total))
        vloss_curve.append(float(vloss))
        vacc_curve.append(float(vacc))
        if vloss < best_loss:
            best_loss, best_acc, best_epoch, best_params, bad = vloss, vacc, epoch, params.copy(), 0
        else:
            bad += 1
            if bad >= cfg.patience:
                log.debug("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    logits, attn = model_forward(X, adj, best_params, cfg)
    return TrainReport(
        best_epoch=best_epoch,
        val_acc_curve=vacc_curve,
        val_loss_curve=vloss_curve,
        train_loss_curve=train_curve,
        val_acc=float(best_acc),
        test_acc=accuracy(logits, labels, split.test_idx),
        final_params=best_params,
        final_attention=attn,
        config=cfg,
    )


def checkpoint_bytes(params: GatParams, cfg: GatConfig, in_dim: int, n_classes: int) -> bytes:
    meta = {"config": cfg.to_dict(), "in_dim": in_dim, "n_classes": n_classes}
    arrays = {}
    for l, lp in enumerate(params.layers, start=1):
        arrays[f"W{l}"], arrays[f"a_src{l}"], arrays[f"a_dst{l}"] = lp.W, lp.a_src, lp.a_dst
    return binfmt.dumps(b"CKPT", meta, arrays)


def save_checkpoint(path, params: GatParams, cfg: GatConfig, in_dim: int, n_classes: int):
    binfmt.write(path, checkpoint_bytes(params, cfg, in_dim, n_classes))


def load_checkpoint(path, in_dim: int | None = None, n_classes: int | None = None):
    """Return ``(params, cfg)``; shapes are checked against the stored config
    and, when given, against the expected input width and class count."""
    meta, arrays, _ = binfmt.loads(binfmt.read(path), b"CKPT")
    cfg = GatConfig.from_dict(meta["config"])
    if in_dim is not None and in_dim != meta["in_dim"]:
        raise binfmt.FormatError(f"checkpoint expects {meta['in_dim']} features, graph has {in_dim}")
    if n_classes is not None and n_classes != meta["n_classes"]:
        raise binfmt.FormatError(
            f"checkpoint has {meta['n_classes']} classes, expected {n_classes}")
    params = GatParams([
        LayerParams(arrays[f"W{l}"], arrays[f"a_src{l}"], arrays[f"a_dst{l}"]) for l in (1, 2)
    ])
    expected = param_shapes(cfg, meta["in_dim"], meta["n_classes"])
    if params.shapes() != expected:
        raise binfmt.FormatError(f"checkpoint shapes {params.shapes()} != {expected}")
    return params, cfg


def config_json(cfg: GatConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)
