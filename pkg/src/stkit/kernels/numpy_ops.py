"""Pure-numpy kernel implementations.

Inputs arrive validated and canonicalized (C-contiguous float64) from the
dispatch layer in ``stkit.kernels``.
"""

from __future__ import annotations

import numpy as np


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax of a 2-D array."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mean_regions(y: np.ndarray) -> np.ndarray:
    """Mean over axis 1 of a (cells, block, rest) array."""
    return y.mean(axis=1)


def resize_axis(y: np.ndarray, lo: np.ndarray, hi: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gather-lerp along axis 0 of a 2-D array: out[i] = (1-w)*y[lo] + w*y[hi]."""
    wcol = w[:, None]
    return (1.0 - wcol) * y[lo] + wcol * y[hi]


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, scale: float):
    """Scaled dot-product attention for one query against R rows per query.

    q: (Q, d), k/v: (Q, R, d). Returns (out (Q, d), weights (Q, R)).
    """
    scores = np.einsum("qd,qrd->qr", q, k) * scale
    weights = softmax_rows(scores)
    out = np.einsum("qr,qrd->qd", weights, v)
    return out, weights
