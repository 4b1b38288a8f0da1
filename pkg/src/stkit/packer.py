"""Two-stage point-to-region feature compression.

A packer stage partitions the input into equal patches, mean-pools each
patch into a point, then runs cross-attention with the point as query and
the patch rows as keys/values, adding the pooled point back as a residual:

    q       = mlp_q(point)
    K = V0  = mlp_kv(patch rows)
    V       = value_projection(V0)          (identity unless configured)
    out     = point + softmax(q K^T / sqrt(d_head)) V

``spatial_pack`` patches the two spatial axes per frame; ``temporal_pack``
patches the frame axis per spatial cell. The full forward pass reduces the
input grid spatially once, then compresses the result along spatial and
temporal axes in two separate streams.

Everything here is a pure function of immutable inputs; with the same
seeded parameters the outputs are bit-identical across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ShapeError
from .rng import make_generator
from .tensorio import load_tensor, save_tensor

PARAM_INIT_SCALE = 0.02
NONLINEARITY = "tanh"


@dataclass(frozen=True)
class PackerConfig:
    """Grid geometry of the two-stage pass; defaults follow the reference
    configuration (27x27 features, 100 frames, 9/3 spatial grids, 20 output
    frames)."""

    w1: int = 27
    h1: int = 27
    n_frames: int = 100
    k1: int = 9
    k2: int = 3
    sigma: int = 20

    def __post_init__(self):
        for name in ("w1", "h1", "n_frames", "k1", "k2", "sigma"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1")
        if self.w1 % self.k1 or self.h1 % self.k1:
            raise ShapeError(f"k1={self.k1} must divide w1={self.w1} and h1={self.h1}")
        if self.k1 % self.k2:
            raise ShapeError(f"k2={self.k2} must divide k1={self.k1}")
        if self.n_frames % self.sigma:
            raise ShapeError(f"sigma={self.sigma} must divide n_frames={self.n_frames}")

    @property
    def tokens_temporal(self) -> int:
        return self.k1 * self.k1 * self.sigma

    @property
    def tokens_spatial(self) -> int:
        return self.k2 * self.k2 * self.n_frames

    @property
    def token_total(self) -> int:
        return self.tokens_temporal + self.tokens_spatial


def _mlp_weights(g: np.random.Generator, dim: int, scale: float):
    return (
        g.standard_normal((dim, dim)) * scale,
        np.zeros(dim),
        g.standard_normal((dim, dim)) * scale,
        np.zeros(dim),
    )


@dataclass
class PackerParams:
    """Weights of one packer stage.

    ``identity=True`` bypasses both MLPs and the value projection, which
    makes uniform-attention invariants exact (constant input doubles).
    The value projection defaults to identity (``value_w is None``).
    """

    dim: int
    heads: int = 1
    identity: bool = False
    q_w1: np.ndarray | None = None
    q_b1: np.ndarray | None = None
    q_w2: np.ndarray | None = None
    q_b2: np.ndarray | None = None
    kv_w1: np.ndarray | None = None
    kv_b1: np.ndarray | None = None
    kv_w2: np.ndarray | None = None
    kv_b2: np.ndarray | None = None
    value_w: np.ndarray | None = None
    value_b: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError("dim must be >= 1")
        if self.heads < 1 or self.dim % self.heads:
            raise ShapeError(f"heads={self.heads} must divide dim={self.dim}")
        if not self.identity:
            for name in ("q_w1", "q_w2", "kv_w1", "kv_w2"):
                w = getattr(self, name)
                if w is None or w.shape != (self.dim, self.dim):
                    raise ShapeError(f"{name} must be ({self.dim}, {self.dim})")
            for name in ("q_b1", "q_b2", "kv_b1", "kv_b2"):
                b = getattr(self, name)
                if b is None or b.shape != (self.dim,):
                    raise ShapeError(f"{name} must be ({self.dim},)")
        if (self.value_w is None) != (self.value_b is None):
            raise ShapeError("value_w and value_b must be given together")
        if self.value_w is not None and self.value_w.shape != (self.dim, self.dim):
            raise ShapeError(f"value_w must be ({self.dim}, {self.dim})")

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.dim // self.heads)

    @classmethod
    def random(
        cls,
        dim: int,
        seed: int,
        heads: int = 1,
        scale: float = PARAM_INIT_SCALE,
        value_projection: bool = False,
        stream: str = "packer",
    ) -> "PackerParams":
        g = make_generator(seed, stream)
        q = _mlp_weights(g, dim, scale)
        kv = _mlp_weights(g, dim, scale)
        vw = vb = None
        if value_projection:
            vw = g.standard_normal((dim, dim)) * scale
            vb = np.zeros(dim)
        return cls(dim, heads, False, *q, *kv, vw, vb)

    @classmethod
    def identity_params(cls, dim: int, heads: int = 1) -> "PackerParams":
        return cls(dim, heads, True)

    def _apply_mlp(self, prefix: str, x: np.ndarray) -> np.ndarray:
        w1 = getattr(self, f"{prefix}_w1")
        b1 = getattr(self, f"{prefix}_b1")
        w2 = getattr(self, f"{prefix}_w2")
        b2 = getattr(self, f"{prefix}_b2")
        hidden = np.tanh(kernels.matmul(x, w1) + b1)
        return kernels.matmul(hidden, w2) + b2

    def project_queries(self, points: np.ndarray) -> np.ndarray:
        return points if self.identity else self._apply_mlp("q", points)

    def project_keys(self, rows: np.ndarray) -> np.ndarray:
        """Shared key/value source: mlp_kv over flattened region rows."""
        if self.identity:
            return rows
        flat = rows.reshape(-1, self.dim)
        return self._apply_mlp("kv", flat).reshape(rows.shape)

    def project_values(self, kv: np.ndarray) -> np.ndarray:
        if self.identity or self.value_w is None:
            return kv
        flat = kv.reshape(-1, self.dim)
        out = kernels.matmul(flat, self.value_w) + self.value_b
        return out.reshape(kv.shape)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "dim": self.dim,
            "heads": self.heads,
            "identity": self.identity,
            "nonlinearity": NONLINEARITY,
            "value_projection": self.value_w is not None,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        if self.identity:
            return
        for name in ("q_w1", "q_b1", "q_w2", "q_b2", "kv_w1", "kv_b1", "kv_w2", "kv_b2"):
            save_tensor(directory / f"{name}.stt1", getattr(self, name))
        if self.value_w is not None:
            save_tensor(directory / "value_w.stt1", self.value_w)
            save_tensor(directory / "value_b.stt1", self.value_b)

    @classmethod
    def load(cls, directory: str | Path) -> "PackerParams":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("nonlinearity", NONLINEARITY) != NONLINEARITY:
            raise ShapeError(f"unsupported nonlinearity {manifest['nonlinearity']!r}")
        if manifest["identity"]:
            return cls.identity_params(manifest["dim"], manifest["heads"])
        weights = [
            load_tensor(directory / f"{name}.stt1")
            for name in ("q_w1", "q_b1", "q_w2", "q_b2", "kv_w1", "kv_b1", "kv_w2", "kv_b2")
        ]
        vw = vb = None
        if manifest.get("value_projection"):
            vw = load_tensor(directory / "value_w.stt1")
            vb = load_tensor(directory / "value_b.stt1")
        return cls(manifest["dim"], manifest["heads"], False, *weights, vw, vb)


def point_region_attention(
    points: np.ndarray,
    regions: np.ndarray,
    params: PackerParams,
    return_weights: bool = False,
):
    """Attend each pooled point over its own region rows, residual included.

    points: (P, D) or (P, 1, D); regions: (P, R, D). Returns (P, D), plus
    the (P, R) attention weights (heads > 1: (P, heads, R)) when requested.
    """
    points = np.asarray(points, dtype=np.float64)
    regions = np.asarray(regions, dtype=np.float64)
    if points.ndim == 3 and points.shape[1] == 1:
        points = points[:, 0, :]
    if points.ndim != 2 or regions.ndim != 3:
        raise ShapeError(
            f"expected points (P, D) and regions (P, R, D), got {points.shape} and {regions.shape}"
        )
    p, d = points.shape
    if regions.shape[0] != p or regions.shape[2] != d:
        raise ShapeError(f"points {points.shape} and regions {regions.shape} disagree")
    if d != params.dim:
        raise ShapeError(f"params dim {params.dim} != feature dim {d}")

    q = params.project_queries(points)
    kv = params.project_keys(regions)
    vals = params.project_values(kv)

    heads = params.heads
    dh = d // heads
    r = regions.shape[1]
    q_h = np.ascontiguousarray(q.reshape(p, heads, dh).reshape(p * heads, dh))
    k_h = np.ascontiguousarray(
        kv.reshape(p, r, heads, dh).transpose(0, 2, 1, 3).reshape(p * heads, r, dh)
    )
    v_h = np.ascontiguousarray(
        vals.reshape(p, r, heads, dh).transpose(0, 2, 1, 3).reshape(p * heads, r, dh)
    )
    ctx, weights = kernels.scaled_dot_attention(q_h, k_h, v_h, params.scale)
    out = points + ctx.reshape(p, heads, dh).reshape(p, d)
    if not return_weights:
        return out
    weights = weights.reshape(p, heads, r)
    return out, (weights[:, 0, :] if heads == 1 else weights)


def _pool_points(regions: np.ndarray) -> np.ndarray:
    pooled = kernels.mean_pool_regions(regions, (1, regions.shape[1]))
    return pooled[:, 0, :]


def spatial_pack(x: np.ndarray, grid: int, params: PackerParams) -> np.ndarray:
    """Compress (w, h, n, D) to (grid, grid, n, D); frames stay untouched."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"spatial_pack expects (w, h, n, D), got {x.shape}")
    w, h, n, d = x.shape
    if grid < 1 or w % grid or h % grid:
        raise ShapeError(f"grid {grid} must divide spatial extents {w}x{h}")
    pw, ph = w // grid, h // grid
    regions = (
        x.reshape(grid, pw, grid, ph, n, d)
        .transpose(0, 2, 4, 1, 3, 5)
        .reshape(grid * grid * n, pw * ph, d)
    )
    regions = np.ascontiguousarray(regions)
    out = point_region_attention(_pool_points(regions), regions, params)
    return out.reshape(grid, grid, n, d)


def temporal_pack(x: np.ndarray, out_len: int, params: PackerParams) -> np.ndarray:
    """Compress (k, k, n, D) to (k, k, out_len, D); spatial cells stay untouched."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"temporal_pack expects (k, k, n, D), got {x.shape}")
    kw, kh, n, d = x.shape
    if out_len < 1 or n % out_len:
        raise ShapeError(f"output length {out_len} must divide frame count {n}")
    r = n // out_len
    regions = np.ascontiguousarray(x.reshape(kw * kh * out_len, r, d))
    out = point_region_attention(_pool_points(regions), regions, params)
    return out.reshape(kw, kh, out_len, d)


def two_stage_pack(
    v: np.ndarray,
    cfg: PackerConfig,
    params_first: PackerParams,
    params_spatial: PackerParams,
    params_temporal: PackerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Full forward pass.

    Stage one reduces the (w1, h1, n, D) input to a (k1, k1, n, D) grid;
    stage two compresses that grid to the spatial stream (k2, k2, n, D)
    and the temporal stream (k1, k1, sigma, D). Tie the two spatial stages
    by passing the same params object for both.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 4 or v.shape[:3] != (cfg.w1, cfg.h1, cfg.n_frames):
        raise ShapeError(
            f"input shape {v.shape} does not match config "
            f"({cfg.w1}, {cfg.h1}, {cfg.n_frames}, D)"
        )
    reduced = spatial_pack(v, cfg.k1, params_first)
    f_s = spatial_pack(reduced, cfg.k2, params_spatial)
    f_t = temporal_pack(reduced, cfg.sigma, params_temporal)
    return f_s, f_t


def flatten_tokens(f_t: np.ndarray, f_s: np.ndarray) -> np.ndarray:
    """Token rows for the language model: temporal stream first.

    Both streams are flattened time-major (frame index slowest, then the
    spatial cell in row-major order), so row 0 is cell (0, 0, 0) of the
    temporal stream.
    """
    f_t = np.asarray(f_t, dtype=np.float64)
    f_s = np.asarray(f_s, dtype=np.float64)
    if f_t.ndim != 4 or f_s.ndim != 4 or f_t.shape[3] != f_s.shape[3]:
        raise ShapeError(f"stream shapes disagree: {f_t.shape} vs {f_s.shape}")
    d = f_t.shape[3]
    rows_t = f_t.transpose(2, 0, 1, 3).reshape(-1, d)
    rows_s = f_s.transpose(2, 0, 1, 3).reshape(-1, d)
    return np.concatenate([rows_t, rows_s], axis=0)


def sample_frame_indices(total_frames: int, n: int) -> list[int]:
    """Equal-interval frame indices: round(i * (T-1) / (n-1)); frames repeat
    when the video is shorter than n."""
    if total_frames < 1 or n < 1:
        raise ShapeError("frame counts must be >= 1")
    if n == 1:
        return [0]
    return [round(i * (total_frames - 1) / (n - 1)) for i in range(n)]
