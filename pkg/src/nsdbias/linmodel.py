"""Bias-free multiclass linear model ``x -> W x`` with cross-entropy loss.

``batch`` arguments are 0-based row indices into the dataset (duplicates
allowed); ``None`` means the full dataset.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .densela import matrix_norm
from .errors import ZeroNormError


def _select(ds, batch):
    if batch is None:
        return ds.features, ds.label_index
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    return ds.features[batch], ds.label_index[batch]


def _check_dims(w, ds):
    if w.shape != (ds.k, ds.d):
        raise ValueError(f"weights have shape {w.shape}, dataset needs {(ds.k, ds.d)}")


def _logit_gaps(w, x, yi):
    """``a[i, c] = (W x_i)[c] - (W x_i)[y_i]``; zero at the true class."""
    z = x @ w.T
    return z - z[np.arange(len(yi)), yi][:, None]


def per_sample_loss(w, x, yi) -> np.ndarray:
    a = _logit_gaps(w, x, yi)
    top = a.max(axis=1)
    e = np.exp(a - top[:, None])
    # drop the argmax term (equal to 1) so log1p keeps precision for tiny losses
    e[np.arange(len(yi)), a.argmax(axis=1)] = 0.0
    return top + np.log1p(e.sum(axis=1))


def ce_loss(w, ds, batch=None) -> float:
    """Mean cross entropy ``-log softmax(W x_i)[y_i]`` over the batch."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(w, ds)
    x, yi = _select(ds, batch)
    return float(per_sample_loss(w, x, yi).mean())


def softmax_residual(w, x, yi) -> np.ndarray:
    """``softmax(W x_i) - e_{y_i}`` per row, with the true-class entry formed as
    ``-sum_{c != y_i} S_c`` so it stays accurate when the loss is tiny."""
    z = x @ w.T
    z -= z.max(axis=1, keepdims=True)
    s = np.exp(z)
    s /= s.sum(axis=1, keepdims=True)
    rows = np.arange(len(yi))
    s[rows, yi] = 0.0
    s[rows, yi] = -s.sum(axis=1)
    return s


def ce_gradient(w, ds, batch=None) -> np.ndarray:
    """Gradient of :func:`ce_loss` w.r.t. ``W`` (k x d)."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(w, ds)
    x, yi = _select(ds, batch)
    r = softmax_residual(w, x, yi)
    return r.T @ x / len(yi)


class MarginResult(NamedTuple):
    value: float
    index: int  # 0-based sample row
    label: int  # 1-based competing class


def margin_pairs(w, ds) -> np.ndarray:
    """n x k matrix of gaps ``w_{y_i}.x_i - w_y.x_i``, ``+inf`` on the true class."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(w, ds)
    g = -_logit_gaps(w, ds.features, ds.label_index)
    g[np.arange(ds.n), ds.label_index] = np.inf
    return g


def margin(w, ds) -> MarginResult:
    """Multiclass margin ``min_{i, y != y_i} (w_{y_i} - w_y).x_i``.

    Ties resolve to the lexicographically smallest ``(i, y)``.
    """
    g = margin_pairs(w, ds)
    flat = int(np.argmin(g))
    i, c = divmod(flat, ds.k)
    return MarginResult(float(g[i, c]), i, c + 1)


def relative_margin(w, ds, kind) -> float:
    nrm = matrix_norm(w, kind)
    if nrm == 0:
        raise ZeroNormError("relative margin undefined for W = 0")
    return margin(w, ds).value / nrm


def accuracy(w, ds) -> float:
    """Fraction of strictly correct predictions; ties count as wrong."""
    g = margin_pairs(w, ds)
    return float(np.mean(g.min(axis=1) > 0))
