"""Numeric kernels for the GAT computation graph.

Everything is float64. Per-edge arrays are aligned with ``CsrAdjacency.col_idx``
and may carry a trailing head axis: shape ``(n_edges,)`` or ``(n_edges, heads)``.
Row reductions use ``np.*.reduceat`` over ``row_ptr``, which is valid because
every CSR row holds at least its self-loop.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def leaky_relu(x, slope: float = 0.2):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope: float = 0.2):
    return np.where(np.asarray(x) >= 0, 1.0, slope)


def elu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0)))


def segment_sum(values: np.ndarray, adj) -> np.ndarray:
    """Sum per-edge values over each CSR row."""
    return np.add.reduceat(values, adj.row_ptr[:-1], axis=0)


def scatter_cols(values: np.ndarray, adj) -> np.ndarray:
    """Sum per-edge values onto their column (source) node."""
    if values.ndim == 1:
        return np.bincount(adj.col_idx, weights=values, minlength=adj.n)
    return np.stack(
        [np.bincount(adj.col_idx, weights=values[:, h], minlength=adj.n)
         for h in range(values.shape[1])],
        axis=1,
    )


def masked_softmax(scores: np.ndarray, adj) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    starts = adj.row_ptr[:-1]
    rows = adj.edge_rows
    m = np.maximum.reduceat(scores, starts, axis=0)
    ex = np.exp(scores - m[rows])
    return ex / np.add.reduceat(ex, starts, axis=0)[rows]


def masked_softmax_backward(alpha: np.ndarray, grad_alpha: np.ndarray, adj) -> np.ndarray:
    """Vector-Jacobian product of the row-wise softmax: a * (g - <a, g>_row)."""
    dot = segment_sum(alpha * grad_alpha, adj)
    return alpha * (grad_alpha - dot[adj.edge_rows])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_xent(logits: np.ndarray, labels, mask) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``mask`` rows and its gradient w.r.t. ``logits``."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("cross-entropy mask is empty")
    if mask.max() >= logits.shape[0] or mask.min() < 0:
        raise IndexError("mask index out of range")
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits[mask])
    y = labels[mask]
    k = mask.shape[0]
    loss = -logp[np.arange(k), y].mean()
    g = np.exp(logp)
    g[np.arange(k), y] -= 1.0
    grad = np.zeros_like(logits, dtype=np.float64)
    np.add.at(grad, mask, g / k)
    return float(loss), grad


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    theta,
    analytic_grad,
    eps: float = 1e-5,
) -> float:
    """Largest relative error between ``analytic_grad`` and central differences.

    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64).ravel()
    analytic = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if analytic.shape != theta.shape:
        raise ValueError("gradient shape does not match parameters")
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        old = theta[k]
        theta[k] = old + eps
        fp = f(theta.copy())
        theta[k] = old - eps
        fm = f(theta.copy())
        theta[k] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective at coordinate {k}")
        numeric[k] = (fp - fm) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if theta.size else 0.0
