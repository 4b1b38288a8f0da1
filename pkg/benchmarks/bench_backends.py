"""Benchmark the numba kernels against the pure-numpy fallback.

Run from the repo root:

    python benchmarks/bench_backends.py [--repeats 5]

Each kernel is timed best-of-N after a warmup call (the warmup also
triggers JIT compilation on the numba side). Numba rows are skipped when
numba is not installed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from stkit import kernels
from stkit.packer import PackerConfig, PackerParams, two_stage_pack
from stkit.posembed import EmbeddingTables, position_grid, resize_grid
from stkit.codec import CoordVocab


def _time(fn, repeats: int) -> float:
    fn()  # warmup / JIT
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases():
    g = np.random.default_rng(0)
    a = g.standard_normal((256, 256))
    b = g.standard_normal((256, 256))
    sm = g.standard_normal((8100, 32))
    pool = g.standard_normal((27, 27, 100, 64))
    rs = g.standard_normal((100, 100, 50, 8))
    q = g.standard_normal((8100, 64))
    k = g.standard_normal((8100, 9, 64))
    v = g.standard_normal((8100, 9, 64))
    cfg = PackerConfig()
    params = [PackerParams.random(16, seed=s) for s in (1, 2, 3)]
    feats = g.standard_normal((cfg.w1, cfg.h1, cfg.n_frames, 16))
    tables = EmbeddingTables.random(CoordVocab(), 8, seed=0)
    grid = position_grid(tables)
    return [
        ("matmul 256x256", lambda: kernels.matmul(a, b)),
        ("softmax 8100x32", lambda: kernels.softmax_lastdim(sm)),
        ("mean_pool 27x27x100x64 -> 9x9", lambda: kernels.mean_pool_regions(pool, (3, 3))),
        ("resize 100x100x50x8 -> 27x27x20", lambda: kernels.linear_interp_resize(rs, (27, 27, 20))),
        ("attention 8100 queries x 9 rows x 64", lambda: kernels.scaled_dot_attention(q, k, v, 0.125)),
        ("two-stage pack 27x27x100x16", lambda: two_stage_pack(feats, cfg, *params)),
        ("position grid resize 100^3x8 -> 27x27x100", lambda: resize_grid(grid, 27, 27, 100)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    cases = build_cases()
    width = max(len(name) for name, _ in cases)
    have_numba = kernels.numba_available()
    header = f"{'kernel'.ljust(width)}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fn in cases:
        kernels.set_backend("numpy")
        t_np = _time(fn, args.repeats)
        if have_numba:
            kernels.set_backend("numba")
            t_nb = _time(fn, args.repeats)
            ratio = t_np / t_nb if t_nb > 0 else float("inf")
            print(f"{name.ljust(width)}  {t_np * 1e3:9.2f}ms  {t_nb * 1e3:9.2f}ms  {ratio:7.2f}x")
        else:
            print(f"{name.ljust(width)}  {t_np * 1e3:9.2f}ms  {'n/a':>10}  {'n/a':>8}")
    kernels.set_backend(None)


if __name__ == "__main__":
    main()
