import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stkit import kernels
from stkit.errors import ShapeError

rng = np.random.default_rng(1234)


# --- matmul -----------------------------------------------------------------


def test_matmul_identity(backend):
    a = rng.standard_normal((3, 3))
    assert np.array_equal(kernels.matmul(np.eye(3), a), a)


def test_matmul_hand_case(backend):
    out = kernels.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]]))
    assert np.array_equal(out, np.array([[2.0], [4.0]]))


def _matmul_oracle(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for kk in range(k):
            for j in range(n):
                out[i, j] += a[i, kk] * b[kk, j]
    return out


def test_matmul_triple_loop_oracle(backend):
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    assert np.abs(kernels.matmul(a, b) - _matmul_oracle(a, b)).max() <= 1e-12


def test_matmul_bilinear(backend):
    a = rng.standard_normal((4, 6))
    b = rng.standard_normal((6, 5))
    for alpha in (0.5, -7.0, 1e3):
        lhs = kernels.matmul(alpha * a, b)
        rhs = alpha * kernels.matmul(a, b)
        assert np.abs(lhs - rhs).max() <= 1e-10


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        kernels.matmul(np.ones((2, 3)), np.ones((4, 2)))
    with pytest.raises(ShapeError):
        kernels.matmul(np.ones(3), np.ones((3, 2)))


# --- softmax ----------------------------------------------------------------


def test_softmax_uniform(backend):
    out = kernels.softmax_lastdim(np.zeros(3))
    assert np.abs(out - 1 / 3).max() <= 1e-15


def test_softmax_stabilized(backend):
    out = kernels.softmax_lastdim(np.array([1000.0, 0.0]))
    assert np.isfinite(out).all()
    assert out[0] > 1 - 1e-9 and out[1] < 1e-9


def test_softmax_extended_precision_oracle(backend):
    x = np.array([1.0, 2.0, 3.0])
    hi = np.exp(np.longdouble(x) - np.longdouble(3.0))
    expected = (hi / hi.sum()).astype(np.float64)
    assert np.abs(kernels.softmax_lastdim(x) - expected).max() <= 1e-12


def test_softmax_rows_sum_one_large_magnitudes(backend):
    x = rng.uniform(-1e4, 1e4, (40, 11))
    p = kernels.softmax_lastdim(x)
    assert (p >= 0).all()
    assert np.abs(p.sum(axis=-1) - 1).max() <= 1e-9


@given(st.lists(st.floats(min_value=-1e4, max_value=1e4), min_size=1, max_size=12))
def test_softmax_sums_property(xs):
    p = kernels.softmax_lastdim(np.array(xs))
    assert abs(p.sum() - 1.0) <= 1e-9
    assert (p >= 0).all()


def test_softmax_empty_error():
    with pytest.raises(ShapeError):
        kernels.softmax_lastdim(np.zeros((0,)))


# --- mean pooling -----------------------------------------------------------


def test_mean_pool_block_constant_exact(backend):
    # dyadic constants keep block sums exactly representable
    for c in (1.0, 0.25, -3.5, 42.0):
        x = np.full((6, 4, 3), c)
        out = kernels.mean_pool_regions(x, (3, 2))
        assert out.shape == (2, 2, 3)
        assert (out == c).all()


def test_mean_pool_block_constant_close(backend):
    x = np.full((9, 3), 0.1)
    out = kernels.mean_pool_regions(x, (3,))
    assert np.abs(out - 0.1).max() <= 1e-15


def test_mean_pool_row_index_case(backend):
    x = np.repeat(np.arange(4.0)[:, None], 4, axis=1)
    out = kernels.mean_pool_regions(x, (2, 2))
    assert np.array_equal(out, np.array([[0.5, 0.5], [2.5, 2.5]]))


def test_mean_pool_loop_oracle(backend):
    x = rng.standard_normal((6, 6, 2))
    out = kernels.mean_pool_regions(x, (3, 3))
    for i in range(2):
        for j in range(2):
            for c in range(2):
                block = x[3 * i : 3 * i + 3, 3 * j : 3 * j + 3, c]
                assert abs(out[i, j, c] - block.mean()) <= 1e-12


def test_mean_pool_errors():
    with pytest.raises(ShapeError):
        kernels.mean_pool_regions(np.ones((5, 4)), (2, 2))
    with pytest.raises(ShapeError):
        kernels.mean_pool_regions(np.ones((4, 4)), (2, 2, 2))
    with pytest.raises(ShapeError):
        kernels.mean_pool_regions(np.ones((4, 4)), (0, 2))


# --- linear resize ----------------------------------------------------------


def test_resize_constant(backend):
    x = np.full((5, 7), 2.5)
    out = kernels.linear_interp_resize(x, (3, 11))
    assert np.abs(out - 2.5).max() <= 1e-12


def test_resize_ramp(backend):
    out = kernels.linear_interp_resize(np.array([0.0, 1.0, 2.0, 3.0, 4.0]), (3,))
    assert np.abs(out - np.array([0.0, 2.0, 4.0])).max() <= 1e-12


def _resize_axis_oracle(x, axis, m):
    # sequential per-axis interpolation with explicit loops
    n = x.shape[axis]
    moved = np.moveaxis(x, axis, 0)
    out = np.empty((m,) + moved.shape[1:])
    for j in range(m):
        pos = 0.0 if m == 1 else j * (n - 1) / (m - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, n - 1)
        w = pos - lo
        out[j] = (1 - w) * moved[lo] + w * moved[hi]
    return np.moveaxis(out, 0, axis)


def test_resize_2d_oracle(backend):
    x = rng.standard_normal((8, 8))
    expected = _resize_axis_oracle(_resize_axis_oracle(x, 0, 5), 1, 5)
    out = kernels.linear_interp_resize(x, (5, 5))
    assert np.abs(out - expected).max() <= 1e-12


def test_resize_identity(backend):
    x = rng.standard_normal((6, 4, 3))
    out = kernels.linear_interp_resize(x, (6, 4, 3))
    assert np.abs(out - x).max() <= 1e-12


def test_resize_bounds(backend):
    x = rng.standard_normal((9, 9))
    out = kernels.linear_interp_resize(x, (4, 13))
    assert out.min() >= x.min() - 1e-12
    assert out.max() <= x.max() + 1e-12


def test_resize_target_one_samples_first(backend):
    x = np.array([[1.0, 2.0], [5.0, 6.0]])
    out = kernels.linear_interp_resize(x, (1,))
    assert np.array_equal(out, x[:1])


def test_resize_align_corners_false(backend):
    out = kernels.linear_interp_resize(np.array([0.0, 2.0]), (1,), align_corners=False)
    assert np.abs(out - np.array([1.0])).max() <= 1e-12
    x = np.full((4, 4), 3.25)
    out = kernels.linear_interp_resize(x, (2, 6), align_corners=False)
    assert np.abs(out - 3.25).max() <= 1e-12


def test_resize_errors():
    with pytest.raises(ShapeError):
        kernels.linear_interp_resize(np.ones((4, 4)), (0, 2))
    with pytest.raises(ShapeError):
        kernels.linear_interp_resize(np.ones(4), (2, 2))


# --- attention kernel -------------------------------------------------------


def test_attention_weight_rows(backend):
    q = rng.standard_normal((6, 5))
    k = rng.standard_normal((6, 4, 5))
    v = rng.standard_normal((6, 4, 5))
    out, w = kernels.scaled_dot_attention(q, k, v, 1 / np.sqrt(5))
    assert out.shape == (6, 5) and w.shape == (6, 4)
    assert (w >= 0).all()
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-9


def test_attention_shape_errors():
    with pytest.raises(ShapeError):
        kernels.scaled_dot_attention(np.ones((2, 3)), np.ones((2, 4, 5)), np.ones((2, 4, 5)), 1.0)
    with pytest.raises(ShapeError):
        kernels.scaled_dot_attention(np.ones((2, 3)), np.ones((2, 4, 3)), np.ones((2, 5, 3)), 1.0)


# --- backend machinery ------------------------------------------------------


@pytest.mark.skipif(not kernels.numba_available(), reason="numba not installed")
def test_backend_equivalence():
    a = rng.standard_normal((12, 9))
    b = rng.standard_normal((9, 7))
    x = rng.standard_normal((5, 6, 8))
    q = rng.standard_normal((10, 6))
    k = rng.standard_normal((10, 5, 6))
    v = rng.standard_normal((10, 5, 6))
    results = {}
    for name in ("numpy", "numba"):
        kernels.set_backend(name)
        results[name] = (
            kernels.matmul(a, b),
            kernels.softmax_lastdim(x),
            kernels.mean_pool_regions(x, (1, 3)),
            kernels.linear_interp_resize(x, (3, 4)),
            kernels.scaled_dot_attention(q, k, v, 0.4),
        )
    kernels.set_backend(None)
    np_res, nb_res = results["numpy"], results["numba"]
    for lhs, rhs in zip(np_res[:4], nb_res[:4]):
        assert np.abs(lhs - rhs).max() <= 1e-12
    for lhs, rhs in zip(np_res[4], nb_res[4]):
        assert np.abs(lhs - rhs).max() <= 1e-12


def test_env_var_selection(monkeypatch):
    monkeypatch.setenv("STKIT_BACKEND", "numpy")
    assert kernels.active_backend() == "numpy"
    monkeypatch.setenv("STKIT_BACKEND", "bogus")
    with pytest.raises(ValueError):
        kernels.active_backend()


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
