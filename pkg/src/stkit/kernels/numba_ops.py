"""Numba @njit twins of the numpy kernels.

Loop nests use plain sequential accumulation, so each function has a single
deterministic summation order (row-major where it matters).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    m, kk = a.shape
    _, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for kx in range(kk):
            aik = a[i, kx]
            for j in range(n):
                out[i, j] += aik * b[kx, j]
    return out


@njit(cache=True)
def softmax_rows(x):
    rows, n = x.shape
    out = np.empty_like(x)
    for i in range(rows):
        hi = x[i, 0]
        for j in range(1, n):
            if x[i, j] > hi:
                hi = x[i, j]
        total = 0.0
        for j in range(n):
            out[i, j] = np.exp(x[i, j] - hi)
            total += out[i, j]
        for j in range(n):
            out[i, j] /= total
    return out


@njit(cache=True)
def mean_regions(y):
    cells, block, rest = y.shape
    out = np.empty((cells, rest), dtype=np.float64)
    inv = 1.0 / block
    for c in range(cells):
        for j in range(rest):
            acc = 0.0
            for b in range(block):
                acc += y[c, b, j]
            out[c, j] = acc * inv
    return out


@njit(cache=True)
def resize_axis(y, lo, hi, w):
    m = lo.shape[0]
    rest = y.shape[1]
    out = np.empty((m, rest), dtype=np.float64)
    for i in range(m):
        a = lo[i]
        b = hi[i]
        wi = w[i]
        for j in range(rest):
            out[i, j] = (1.0 - wi) * y[a, j] + wi * y[b, j]
    return out


@njit(cache=True)
def attention(q, k, v, scale):
    nq, r, d = k.shape
    out = np.empty((nq, d), dtype=np.float64)
    weights = np.empty((nq, r), dtype=np.float64)
    for i in range(nq):
        hi = -np.inf
        for j in range(r):
            s = 0.0
            for x in range(d):
                s += q[i, x] * k[i, j, x]
            s *= scale
            weights[i, j] = s
            if s > hi:
                hi = s
        total = 0.0
        for j in range(r):
            weights[i, j] = np.exp(weights[i, j] - hi)
            total += weights[i, j]
        for j in range(r):
            weights[i, j] /= total
        for x in range(d):
            acc = 0.0
            for j in range(r):
                acc += weights[i, j] * v[i, j, x]
            out[i, x] = acc
    return out, weights
