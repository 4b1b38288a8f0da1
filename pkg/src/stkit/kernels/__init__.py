"""Dense float64 kernels with selectable backend.

The backend is chosen by the ``STKIT_BACKEND`` environment variable:

* ``auto`` (default) - numba when importable, else numpy
* ``numpy``          - pure numpy, always available
* ``numba``          - @njit kernels; raises if numba is missing

``set_backend`` overrides the environment for the current process (used by
tests and the benchmark). All operations are pure functions of their
arguments and never mutate inputs, so they are safe to call concurrently.
"""

from __future__ import annotations

import importlib.util
import math
import os

import numpy as np

from ..errors import ShapeError

_ENV_VAR = "STKIT_BACKEND"
_VALID = ("auto", "numpy", "numba")
_forced: str | None = None


def numba_available() -> bool:
    return importlib.util.find_spec("numba") is not None


def set_backend(name: str | None) -> None:
    """Force a backend for this process; ``None`` restores env/auto selection."""
    global _forced
    if name is not None and name not in _VALID:
        raise ValueError(f"unknown backend {name!r}; expected one of {_VALID}")
    _forced = name


def active_backend() -> str:
    """Resolved backend name, either 'numpy' or 'numba'."""
    choice = _forced or os.environ.get(_ENV_VAR, "auto")
    if choice not in _VALID:
        raise ValueError(f"{_ENV_VAR}={choice!r} is not one of {_VALID}")
    if choice == "auto":
        return "numba" if numba_available() else "numpy"
    if choice == "numba" and not numba_available():
        raise RuntimeError("STKIT_BACKEND=numba but numba is not installed")
    return choice


def _ops():
    if active_backend() == "numba":
        from . import numba_ops

        return numba_ops
    from . import numpy_ops

    return numpy_ops


def _as_f64(x, name: str = "tensor") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.size == 0:
        raise ShapeError(f"{name} must not be empty")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2-D matrix product with row-major accumulation order."""
    a = _as_f64(a, "a")
    b = _as_f64(b, "b")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D inputs, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return _ops().matmul(a, b)


def softmax_lastdim(x: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis; each output slice sums to 1."""
    x = _as_f64(x, "x")
    n = x.shape[-1]
    flat = x.reshape(-1, n)
    out = _ops().softmax_rows(np.ascontiguousarray(flat))
    return out.reshape(x.shape)


def mean_pool_regions(x: np.ndarray, block: tuple[int, ...]) -> np.ndarray:
    """Average-pool equal blocks over the leading axes of ``x``.

    ``block[i]`` is the block extent along axis ``i``; it must divide
    ``x.shape[i]`` exactly. Axes beyond ``len(block)`` pass through.
    """
    x = _as_f64(x, "x")
    block = tuple(int(b) for b in block)
    if len(block) > x.ndim:
        raise ShapeError(f"block rank {len(block)} exceeds tensor rank {x.ndim}")
    if any(b < 1 for b in block):
        raise ShapeError(f"block extents must be >= 1, got {block}")
    for axis, b in enumerate(block):
        if x.shape[axis] % b != 0:
            raise ShapeError(
                f"block extent {b} does not divide axis {axis} of extent {x.shape[axis]}"
            )
    out_dims = tuple(x.shape[i] // b for i, b in enumerate(block))
    rest_dims = x.shape[len(block):]

    interleaved: list[int] = []
    for o, b in zip(out_dims, block):
        interleaved.extend((o, b))
    y = x.reshape(tuple(interleaved) + rest_dims)
    k = len(block)
    perm = tuple(range(0, 2 * k, 2)) + tuple(range(1, 2 * k, 2)) + tuple(
        range(2 * k, 2 * k + len(rest_dims))
    )
    y = np.ascontiguousarray(y.transpose(perm))
    cells = int(np.prod(out_dims)) if out_dims else 1
    blocksize = int(np.prod(block)) if block else 1
    rest = int(np.prod(rest_dims)) if rest_dims else 1
    flat = y.reshape(cells, blocksize, rest)
    pooled = _ops().mean_regions(flat)
    return pooled.reshape(out_dims + rest_dims)


def _source_positions(n: int, m: int, align_corners: bool) -> np.ndarray:
    if align_corners:
        if m == 1:
            return np.zeros(1)
        return np.linspace(0.0, float(n - 1), m)
    pos = (np.arange(m, dtype=np.float64) + 0.5) * (n / m) - 0.5
    return np.clip(pos, 0.0, float(n - 1))


def linear_interp_resize(
    x: np.ndarray, target_dims: tuple[int, ...], align_corners: bool = True
) -> np.ndarray:
    """Separable multi-linear resize of the leading axes of ``x``.

    With ``align_corners=True`` the first and last source samples of each
    resized axis map exactly onto the first and last target samples; a
    target extent of 1 samples source index 0. Axes beyond
    ``len(target_dims)`` pass through. Output values stay within the input
    range up to rounding.
    """
    x = _as_f64(x, "x")
    targets = tuple(int(d) for d in target_dims)
    if len(targets) > x.ndim:
        raise ShapeError(f"target rank {len(targets)} exceeds tensor rank {x.ndim}")
    if any(d < 1 for d in targets):
        raise ShapeError(f"target extents must be >= 1, got {targets}")
    out = x
    for axis, m in enumerate(targets):
        out = _resize_one_axis(out, axis, m, align_corners)
    return out


def _resize_one_axis(x: np.ndarray, axis: int, m: int, align_corners: bool) -> np.ndarray:
    n = x.shape[axis]
    pos = _source_positions(n, m, align_corners)
    lo = np.floor(pos).astype(np.int64)
    np.clip(lo, 0, n - 1, out=lo)
    hi = np.minimum(lo + 1, n - 1)
    w = pos - lo

    moved = np.moveaxis(x, axis, 0)
    lead_shape = moved.shape
    flat = np.ascontiguousarray(moved.reshape(n, -1))
    resized = _ops().resize_axis(flat, lo, hi, w)
    resized = resized.reshape((m,) + lead_shape[1:])
    return np.moveaxis(resized, 0, axis)


def scaled_dot_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-query attention over R candidate rows.

    q: (Q, d); k, v: (Q, R, d). Returns (context (Q, d), weights (Q, R));
    every weight row is nonnegative and sums to 1.
    """
    q = _as_f64(q, "q")
    k = _as_f64(k, "k")
    v = _as_f64(v, "v")
    if q.ndim != 2 or k.ndim != 3 or v.ndim != 3:
        raise ShapeError("scaled_dot_attention expects q (Q,d), k (Q,R,d), v (Q,R,d)")
    if k.shape != v.shape or q.shape[0] != k.shape[0] or q.shape[1] != k.shape[2]:
        raise ShapeError(f"inconsistent attention shapes: q{q.shape} k{k.shape} v{v.shape}")
    if not math.isfinite(scale):
        raise ShapeError("attention scale must be finite")
    return _ops().attention(q, k, v, float(scale))
