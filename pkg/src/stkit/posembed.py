"""Positional embeddings built from the coordinate special tokens.

Each coordinate token owns one row in the input text-embedding table and
one row in the output layer. The positional grid averages the two rows per
axis and sums the three per-axis blends:

    grid[w, h, t] = (out_w + in_w)/2 + (out_h + in_h)/2 + (out_t + in_t)/2

so the grid is separable by construction: along any single axis the cell
increments depend on that axis alone. Blend vectors are snapped to
multiples of 2**-44 before summation so the float64 grid sums associate
exactly and per-axis increments cancel bit-for-bit; the snap moves each
cell by less than 1e-13.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .codec import HEIGHT, WIDTH, CoordToken, CoordVocab
from .errors import ShapeError
from .rng import make_generator
from .tensorio import load_tensor, save_tensor

BLEND_QUANTUM = 2.0 ** -44
TABLE_INIT_SCALE = 0.02


@dataclass
class EmbeddingTables:
    """Input-embedding and output-layer rows for every coordinate token.

    Rows are stored as (m_w + m_h + m_t, D) arrays with widths first, then
    heights, then times, mirroring the extended-vocabulary layout.
    """

    vocab: CoordVocab
    input_rows: np.ndarray
    output_rows: np.ndarray

    def __post_init__(self):
        expected = (self.vocab.coord_token_count,)
        for name in ("input_rows", "output_rows"):
            rows = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if rows.ndim != 2 or rows.shape[0] != expected[0]:
                raise ShapeError(
                    f"{name} must be ({expected[0]}, D), got {rows.shape}"
                )
            object.__setattr__(self, name, rows)
        if self.input_rows.shape[1] != self.output_rows.shape[1]:
            raise ShapeError("input and output rows disagree on embedding dim")

    @property
    def dim(self) -> int:
        return self.input_rows.shape[1]

    def _row_offset(self, tok: CoordToken) -> int:
        v = self.vocab
        if tok.index >= v.anchors(tok.axis):
            raise KeyError(f"no row for token <{tok.axis}{tok.index}>")
        if tok.axis == WIDTH:
            return tok.index
        if tok.axis == HEIGHT:
            return v.m_w + tok.index
        return v.m_w + v.m_h + tok.index

    def input_row(self, tok: CoordToken) -> np.ndarray:
        return self.input_rows[self._row_offset(tok)]

    def output_row(self, tok: CoordToken) -> np.ndarray:
        return self.output_rows[self._row_offset(tok)]

    @classmethod
    def random(
        cls, vocab: CoordVocab, dim: int, seed: int, scale: float = TABLE_INIT_SCALE
    ) -> "EmbeddingTables":
        """Seeded Gaussian rows (std ``scale``); same seed, same bytes."""
        g = make_generator(seed, "embedding-tables")
        n = vocab.coord_token_count
        return cls(
            vocab,
            g.standard_normal((n, dim)) * scale,
            g.standard_normal((n, dim)) * scale,
        )

    @classmethod
    def zeros(cls, vocab: CoordVocab, dim: int) -> "EmbeddingTables":
        n = vocab.coord_token_count
        return cls(vocab, np.zeros((n, dim)), np.zeros((n, dim)))

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_tensor(directory / "input_rows.stt1", self.input_rows)
        save_tensor(directory / "output_rows.stt1", self.output_rows)
        v = self.vocab
        header = {
            "dim": self.dim,
            "m_w": v.m_w,
            "m_h": v.m_h,
            "m_t": v.m_t,
            "base_vocab_size": v.base_vocab_size,
            "row_layout": ["w", "h", "t"],
        }
        (directory / "tables.json").write_text(json.dumps(header, indent=2))

    @classmethod
    def load(cls, directory: str | Path) -> "EmbeddingTables":
        directory = Path(directory)
        header = json.loads((directory / "tables.json").read_text())
        vocab = CoordVocab(
            m_w=header["m_w"],
            m_h=header["m_h"],
            m_t=header["m_t"],
            base_vocab_size=header.get("base_vocab_size", 0),
        )
        return cls(
            vocab,
            load_tensor(directory / "input_rows.stt1"),
            load_tensor(directory / "output_rows.stt1"),
        )


def _snap(blend: np.ndarray) -> np.ndarray:
    return np.round(blend / BLEND_QUANTUM) * BLEND_QUANTUM


def axis_blends(tables: EmbeddingTables) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-axis (output + input)/2 blend vectors, snapped for exact sums."""
    v = tables.vocab
    blend = (tables.output_rows + tables.input_rows) / 2.0
    w = _snap(blend[: v.m_w])
    h = _snap(blend[v.m_w : v.m_w + v.m_h])
    t = _snap(blend[v.m_w + v.m_h :])
    return w, h, t


def position_grid(tables: EmbeddingTables) -> np.ndarray:
    """Full (m_w, m_h, m_t, D) positional grid."""
    w, h, t = axis_blends(tables)
    grid = w[:, None, None, :] + h[None, :, None, :]
    return grid + t[None, None, :, :]


def resize_grid(grid: np.ndarray, w1: int, h1: int, n: int) -> np.ndarray:
    """Trilinear, align-corners resize of the grid's three leading axes."""
    if grid.ndim != 4:
        raise ShapeError(f"position grid must be rank 4, got rank {grid.ndim}")
    return kernels.linear_interp_resize(grid, (w1, h1, n), align_corners=True)


def resize_grid_image(grid: np.ndarray, w1: int, h1: int) -> np.ndarray:
    """Bilinear resize of the time-zero slice only, for image inputs."""
    if grid.ndim != 4:
        raise ShapeError(f"position grid must be rank 4, got rank {grid.ndim}")
    return kernels.linear_interp_resize(grid[:, :, 0, :], (w1, h1), align_corners=True)


def apply_position(v: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Elementwise sum of features and their positional grid."""
    v = np.asarray(v, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.float64)
    if v.shape != pos.shape:
        raise ShapeError(f"feature shape {v.shape} != positional shape {pos.shape}")
    return v + pos


def output_distribution(h: np.ndarray, w_out: np.ndarray) -> np.ndarray:
    """Next-token probabilities: softmax of the output-layer logits.

    h: (D,) feature; w_out: (V + m_w + m_h + m_t, D) extended output layer.
    """
    h = np.asarray(h, dtype=np.float64)
    w_out = np.asarray(w_out, dtype=np.float64)
    if h.ndim != 1 or w_out.ndim != 2 or w_out.shape[1] != h.shape[0]:
        raise ShapeError(f"incompatible shapes h{h.shape} w_out{w_out.shape}")
    logits = kernels.matmul(w_out, h[:, None])[:, 0]
    return kernels.softmax_lastdim(logits)
