import numpy as np
import pytest

from stkit.codec import HEIGHT, TIME, WIDTH, CoordToken, CoordVocab
from stkit.errors import ShapeError
from stkit.posembed import (
    EmbeddingTables,
    apply_position,
    axis_blends,
    output_distribution,
    position_grid,
    resize_grid,
    resize_grid_image,
)

SMALL = CoordVocab(m_w=6, m_h=5, m_t=7)
rng = np.random.default_rng(21)


def _direct_cell(tables, w, h, t):
    return (
        (tables.output_row(CoordToken(WIDTH, w)) + tables.input_row(CoordToken(WIDTH, w))) / 2
        + (tables.output_row(CoordToken(HEIGHT, h)) + tables.input_row(CoordToken(HEIGHT, h))) / 2
        + (tables.output_row(CoordToken(TIME, t)) + tables.input_row(CoordToken(TIME, t))) / 2
    )


def _mixed_residuals(grid):
    yield (grid[1:, 1:] - grid[1:, :-1]) - (grid[:-1, 1:] - grid[:-1, :-1])
    yield (grid[:, 1:, 1:] - grid[:, 1:, :-1]) - (grid[:, :-1, 1:] - grid[:, :-1, :-1])
    yield (grid[1:, :, 1:] - grid[1:, :, :-1]) - (grid[:-1, :, 1:] - grid[:-1, :, :-1])


def test_zero_tables_zero_grid():
    grid = position_grid(EmbeddingTables.zeros(SMALL, 4))
    assert (grid == 0.0).all()


def test_constant_tables_triple_constant():
    # dyadic constant: blends and sums stay exact
    c = 0.25
    n = SMALL.coord_token_count
    tables = EmbeddingTables(SMALL, np.full((n, 3), c), np.full((n, 3), c))
    grid = position_grid(tables)
    assert (grid == 3 * c).all()


def test_spot_cells_match_direct_formula():
    tables = EmbeddingTables.random(SMALL, 8, seed=4)
    grid = position_grid(tables)
    for w, h, t in [(0, 0, 0), (3, 2, 5), (5, 4, 6), (1, 4, 0)]:
        assert np.abs(grid[w, h, t] - _direct_cell(tables, w, h, t)).max() <= 1e-12


def test_separability_residual_exactly_zero():
    tables = EmbeddingTables.random(SMALL, 8, seed=9)
    grid = position_grid(tables)
    for residual in _mixed_residuals(grid):
        assert (residual == 0.0).all()


def test_grid_linearity():
    tables = EmbeddingTables.random(SMALL, 4, seed=2)
    base = position_grid(tables)
    for alpha in (0.5, -2.0, 1e3):
        scaled = EmbeddingTables(SMALL, alpha * tables.input_rows, alpha * tables.output_rows)
        diff = np.abs(position_grid(scaled) - alpha * base).max()
        assert diff <= 1e-10


def test_resize_identity():
    tables = EmbeddingTables.random(SMALL, 4, seed=5)
    grid = position_grid(tables)
    same = resize_grid(grid, SMALL.m_w, SMALL.m_h, SMALL.m_t)
    assert np.abs(same - grid).max() <= 1e-12


def test_resize_preserves_separability():
    tables = EmbeddingTables.random(SMALL, 4, seed=6)
    small = resize_grid(position_grid(tables), 4, 3, 5)
    for residual in _mixed_residuals(small):
        assert np.abs(residual).max() <= 1e-10


def test_resize_constant():
    grid = np.full((5, 5, 5, 2), 1.5)
    out = resize_grid(grid, 3, 2, 4)
    assert np.abs(out - 1.5).max() <= 1e-12
    assert out.shape == (3, 2, 4, 2)


def test_image_path_equals_degenerate_video_path():
    tables = EmbeddingTables.random(SMALL, 4, seed=8)
    grid = position_grid(tables)
    video = resize_grid(grid, 4, 3, 1)[:, :, 0, :]
    image = resize_grid_image(grid, 4, 3)
    assert np.array_equal(video, image)


def test_image_identity_on_time_zero_slice():
    tables = EmbeddingTables.random(SMALL, 4, seed=8)
    grid = position_grid(tables)
    image = resize_grid_image(grid, SMALL.m_w, SMALL.m_h)
    assert np.abs(image - grid[:, :, 0, :]).max() <= 1e-12


def test_resize_rejects_bad_rank():
    with pytest.raises(ShapeError):
        resize_grid(np.ones((3, 3, 3)), 2, 2, 2)


def test_apply_position():
    v = rng.standard_normal((3, 3, 2, 4))
    pos = rng.standard_normal((3, 3, 2, 4))
    assert np.array_equal(apply_position(v, np.zeros_like(v)), v)
    assert np.array_equal(apply_position(np.zeros_like(v), pos), pos)
    out = apply_position(v, pos)
    for idx in np.ndindex(v.shape):
        assert out[idx] == v[idx] + pos[idx]
    with pytest.raises(ShapeError):
        apply_position(v, pos[:2])


def test_output_distribution_uniform():
    w = np.zeros((12, 4))
    p = output_distribution(rng.standard_normal(4), w)
    assert np.abs(p - 1 / 12).max() <= 1e-12


def test_output_distribution_saturates():
    d = 4
    w = np.zeros((6, d))
    h = np.zeros(d)
    h[0] = 1.0
    w[3, 0] = 1.0
    p = output_distribution(1000 * h, w)
    assert p[3] > 1 - 1e-9


def test_output_distribution_composition_oracle():
    w = rng.standard_normal((9, 5))
    h = rng.standard_normal(5)
    logits = w @ h
    expected = np.exp(logits - logits.max())
    expected /= expected.sum()
    assert np.abs(output_distribution(h, w) - expected).max() <= 1e-12
    assert abs(output_distribution(h, w).sum() - 1) <= 1e-9


def test_output_distribution_shift_invariance():
    w = rng.standard_normal((9, 5))
    h = rng.standard_normal(5)
    logits = w @ h
    import stkit.kernels as kernels

    p0 = kernels.softmax_lastdim(logits)
    p1 = kernels.softmax_lastdim(logits + 17.5)
    assert np.abs(p0 - p1).max() <= 1e-9


def test_output_distribution_argmax_scale_invariant():
    w = rng.standard_normal((9, 5))
    h = rng.standard_normal(5)
    base = int(np.argmax(output_distribution(h, w)))
    for alpha in (0.1, 3.0, 250.0):
        assert int(np.argmax(output_distribution(alpha * h, w))) == base


def test_tables_save_load_round_trip(tmp_path):
    tables = EmbeddingTables.random(SMALL, 4, seed=13)
    tables.save(tmp_path / "tables")
    back = EmbeddingTables.load(tmp_path / "tables")
    assert back.vocab == SMALL
    assert np.array_equal(back.input_rows, tables.input_rows)
    assert np.array_equal(back.output_rows, tables.output_rows)


def test_table_lookup_and_validation():
    tables = EmbeddingTables.random(SMALL, 4, seed=1)
    with pytest.raises(KeyError):
        tables.input_row(CoordToken(WIDTH, SMALL.m_w))
    with pytest.raises(ShapeError):
        EmbeddingTables(SMALL, np.zeros((3, 4)), np.zeros((3, 4)))


def test_blends_are_snapped():
    tables = EmbeddingTables.random(SMALL, 4, seed=1)
    from stkit.posembed import BLEND_QUANTUM

    for blend in axis_blends(tables):
        assert np.array_equal(np.round(blend / BLEND_QUANTUM) * BLEND_QUANTUM, blend)
