"""Embedded invariant suite behind the ``selftest`` subcommand.

Independent of pytest; each check returns normally or raises AssertionError.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from .codec import (
    BBox,
    CoordVocab,
    SpatioTemporalTube,
    TemporalSpan,
    decode_tube,
    dequantize,
    encode_tube,
    quantize,
)
from .forge import forge_annotation
from .metrics import box_iou, s_iou, temporal_iou
from .packer import PackerConfig, PackerParams, flatten_tokens, two_stage_pack
from .posembed import EmbeddingTables, position_grid
from .rng import make_generator


def _check_quantization(fault: bool = False) -> None:
    m = 100
    bound = 1.0 / (2 * (m - 1)) + 1e-12
    if fault:
        bound = 0.0  # testing hook: force a failure
    g = make_generator(7, "selftest-quant")
    xs = np.sort(g.uniform(0.0, 1.0, 2000))
    prev = -1
    for x in xs:
        i = quantize(float(x), m)
        assert abs(dequantize(i, m) - x) <= bound, f"quantization bound violated at {x}"
        assert i >= prev, "quantize not monotone"
        prev = i
    for i in range(m):
        assert quantize(dequantize(i, m), m) == i, "anchor not a fixed point"


def _check_softmax() -> None:
    g = make_generator(7, "selftest-softmax")
    x = g.uniform(-1e4, 1e4, (64, 17))
    p = kernels.softmax_lastdim(x)
    assert np.isfinite(p).all(), "softmax produced non-finite values"
    assert (p >= 0).all(), "softmax produced negative probabilities"
    assert np.abs(p.sum(axis=-1) - 1.0).max() <= 1e-9, "softmax rows do not sum to 1"
    extreme = kernels.softmax_lastdim(np.array([1000.0, 0.0]))
    assert extreme[0] > 0.999999 and np.isfinite(extreme).all(), "stabilization failed"


def _check_matmul() -> None:
    g = make_generator(7, "selftest-matmul")
    a = g.standard_normal((5, 7))
    b = g.standard_normal((7, 3))
    ref = np.zeros((5, 3))
    for i in range(5):
        for k in range(7):
            for j in range(3):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.abs(kernels.matmul(a, b) - ref).max() <= 1e-12, "matmul off oracle"


def _check_resize() -> None:
    ramp = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    out = kernels.linear_interp_resize(ramp, (3,))
    assert np.abs(out - np.array([0.0, 2.0, 4.0])).max() <= 1e-12, "ramp resize wrong"
    g = make_generator(7, "selftest-resize")
    x = g.standard_normal((6, 5))
    same = kernels.linear_interp_resize(x, (6, 5))
    assert np.abs(same - x).max() <= 1e-12, "same-size resize is not identity"


def _check_mean_pool() -> None:
    x = np.full((4, 4, 2), 0.25)
    pooled = kernels.mean_pool_regions(x, (2, 2))
    assert (pooled == 0.25).all(), "block-constant pooling not exact"
    rows = np.repeat(np.arange(4.0)[:, None], 4, axis=1)
    pooled = kernels.mean_pool_regions(rows, (2, 2))
    assert np.abs(pooled - np.array([[0.5, 0.5], [2.5, 2.5]])).max() <= 1e-12


def _check_position_grid() -> None:
    vocab = CoordVocab(m_w=8, m_h=8, m_t=8)
    tables = EmbeddingTables.random(vocab, 4, seed=3)
    grid = position_grid(tables)
    d1 = (grid[1:, 1:] - grid[1:, :-1]) - (grid[:-1, 1:] - grid[:-1, :-1])
    assert (d1 == 0.0).all(), "separability residual nonzero"
    w, h, t = 2, 5, 7
    from .codec import HEIGHT, TIME, WIDTH, CoordToken

    expected = (
        (tables.output_row(CoordToken(WIDTH, w)) + tables.input_row(CoordToken(WIDTH, w))) / 2
        + (tables.output_row(CoordToken(HEIGHT, h)) + tables.input_row(CoordToken(HEIGHT, h))) / 2
        + (tables.output_row(CoordToken(TIME, t)) + tables.input_row(CoordToken(TIME, t))) / 2
    )
    assert np.abs(grid[w, h, t] - expected).max() <= 1e-12, "grid cell off formula"


def _check_packer_doubling() -> None:
    params = PackerParams.identity_params(4)
    cfg = PackerConfig(w1=6, h1=6, n_frames=8, k1=3, k2=3, sigma=2)
    v = np.ones((6, 6, 8, 4))
    f_s, f_t = two_stage_pack(v, cfg, params, params, params)
    assert (f_s == 4.0).all() and (f_t == 4.0).all(), "constant input did not 4x"
    tokens = flatten_tokens(f_t, f_s)
    assert tokens.shape[0] == cfg.token_total, "token count mismatch"


def _check_attention_weights() -> None:
    g = make_generator(7, "selftest-attn")
    params = PackerParams.random(6, seed=11)
    from .packer import point_region_attention

    points = g.standard_normal((5, 6))
    regions = g.standard_normal((5, 7, 6))
    out, weights = point_region_attention(points, regions, params, return_weights=True)
    assert np.abs(weights.sum(axis=-1) - 1.0).max() <= 1e-9, "weights do not sum to 1"
    assert np.isfinite(out).all(), "attention produced non-finite output"


def _check_token_budget() -> None:
    d = 4
    params = [PackerParams.random(d, seed=s) for s in (1, 2, 3)]
    cfg = PackerConfig()
    g = make_generator(7, "selftest-budget")
    v = g.standard_normal((cfg.w1, cfg.h1, cfg.n_frames, d))
    f_s, f_t = two_stage_pack(v, cfg, *params)
    total = flatten_tokens(f_t, f_s).shape[0]
    assert total == 2520, f"reference config yields {total} tokens, expected 2520"
    alt_t = PackerConfig(sigma=25)
    assert alt_t.tokens_temporal == 2025, "temporal-only ablation should be 2025"
    alt_s = PackerConfig(w1=25, h1=25, k1=5, k2=5)
    assert alt_s.tokens_spatial == 2500, "spatial-only ablation should be 2500"


def _check_metrics() -> None:
    a = TemporalSpan(0.0, 10 / 15)
    b = TemporalSpan(5 / 15, 1.0)
    assert abs(temporal_iou(a, b) - 5 / 15) <= 1e-12
    assert temporal_iou(a, b) == temporal_iou(b, a), "tIoU not symmetric"
    unit = BBox(0, 0, 1, 1)
    half = BBox(0, 0, 0.5, 1)
    assert abs(box_iou(unit, half) - 0.5) <= 1e-12
    m_t = 100
    pred = SpatioTemporalTube.from_keyframes(
        [(dequantize(i, m_t), unit) for i in (2, 3, 4)]
    )
    gt = SpatioTemporalTube.from_keyframes(
        [(dequantize(i, m_t), half) for i in (3, 4, 5)]
    )
    val = s_iou(pred, gt, m_t)
    assert val == 0.5, f"worked tube example scored {val}, expected 0.5"
    assert s_iou(pred, gt, m_t) == s_iou(gt, pred, m_t), "sIoU not symmetric"


def _check_tube_roundtrip() -> None:
    vocab = CoordVocab()
    g = make_generator(7, "selftest-tubes")
    bound = 1.0 / (2 * (vocab.m_t - 1)) + 1e-12
    for _ in range(200):
        k = int(g.integers(1, 6))
        ticks = np.sort(g.choice(vocab.m_t, size=k, replace=False))
        kfs = []
        for t in ticks:
            xs = np.sort(g.uniform(0, 1, 2))
            ys = np.sort(g.uniform(0, 1, 2))
            kfs.append((dequantize(int(t), vocab.m_t), BBox(xs[0], ys[0], xs[1], ys[1])))
        tube = SpatioTemporalTube.from_keyframes(kfs)
        back = decode_tube(encode_tube(tube, vocab), vocab)
        assert len(back.keyframes) == len(tube.keyframes), "keyframe count changed"
        for (t0, b0), (t1, b1) in zip(tube.keyframes, back.keyframes):
            assert abs(t0 - t1) <= bound
            assert max(abs(x - y) for x, y in zip(b0.as_list(), b1.as_list())) <= bound


def _check_forge_determinism() -> None:
    vocab = CoordVocab()
    ann = {
        "video_id": "probe",
        "duration": 20.0,
        "event": "a dog chases a ball",
        "tube": [[2.0, [0.1, 0.2, 0.4, 0.6]], [10.0, [0.2, 0.2, 0.5, 0.7]]],
    }
    first = forge_annotation(ann, "STVG", vocab, seed=0)
    second = forge_annotation(ann, "STVG", vocab, seed=0)
    assert first == second, "forge output not deterministic"
    from .codec import parse_tokens

    _, diags = parse_tokens(first.question + " " + first.answer, vocab)
    assert not diags, f"forged sample has token diagnostics: {diags}"


CHECKS = (
    ("quantization bound + monotonicity", _check_quantization),
    ("softmax normalization + stability", _check_softmax),
    ("matmul oracle", _check_matmul),
    ("linear resize", _check_resize),
    ("region mean pooling", _check_mean_pool),
    ("position grid formula + separability", _check_position_grid),
    ("packer constant doubling", _check_packer_doubling),
    ("attention weight rows", _check_attention_weights),
    ("token budget 2520/2025/2500", _check_token_budget),
    ("metric identities", _check_metrics),
    ("tube round-trip bound", _check_tube_roundtrip),
    ("forge determinism", _check_forge_determinism),
)


def run_selftest(inject_fault: bool = False, verbose: bool = True) -> bool:
    """Run every embedded check; returns True iff all pass."""
    width = max(len(name) for name, _ in CHECKS)
    all_ok = True
    if verbose:
        print(f"backend: {kernels.active_backend()}")
    for name, check in CHECKS:
        start = time.perf_counter()
        try:
            if check is _check_quantization:
                check(fault=inject_fault)
            else:
                check()
            status = "PASS"
        except AssertionError as exc:
            status = f"FAIL ({exc})"
            all_ok = False
        elapsed = time.perf_counter() - start
        if verbose:
            print(f"  {name.ljust(width)}  {status}  [{elapsed:.2f}s]")
    if verbose:
        print("selftest:", "PASS" if all_ok else "FAIL")
    return all_ok
