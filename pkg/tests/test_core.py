import numpy as np
import pytest

from ipd.core import (
    Norms,
    ShapeMismatchError,
    as_field,
    as_grid,
    inner_product,
    lincomb,
    norms,
    require_finite,
)


def test_as_grid_reshapes_row_major():
    g = as_grid([1, 2, 3, 4, 5, 6], 2, 3)
    assert g.shape == (2, 3)
    assert g.dtype == np.float64
    assert g[1, 0] == 4.0


def test_as_grid_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        as_grid([1.0, np.nan], 1, 2)
    with pytest.raises(FloatingPointError):
        require_finite(np.array([np.inf]))


def test_as_field_stacks_components():
    dx = np.ones((3, 4))
    dy = np.zeros((3, 4))
    p = as_field(dx, dy)
    assert p.shape == (2, 3, 4)
    assert np.array_equal(p[0], dx)
    assert np.array_equal(p[1], dy)


def test_as_field_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        as_field(np.ones((2, 2)), np.ones((3, 2)))


def test_inner_product_matches_elementwise_sum():
    rng = np.random.default_rng(7)
    u = rng.standard_normal((5, 6))
    v = rng.standard_normal((5, 6))
    assert inner_product(u, v) == pytest.approx(float((u * v).sum()), rel=1e-14)


def test_inner_product_on_fields_sums_both_components():
    p = as_field(np.full((2, 2), 2.0), np.full((2, 2), 3.0))
    q = as_field(np.ones((2, 2)), np.ones((2, 2)))
    assert inner_product(p, q) == pytest.approx(4 * 2.0 + 4 * 3.0)


def test_inner_product_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        inner_product(np.ones((2, 2)), np.ones((2, 3)))


def test_norms_known_values():
    n = norms(np.array([[3.0, -4.0]]))
    assert n == Norms(7.0, 5.0, 4.0)


def test_norms_empty():
    assert norms(np.zeros((0, 0))) == Norms(0.0, 0.0, 0.0)


def test_lincomb_realizes_extrapolation():
    x = np.array([[1.0, 2.0]])
    x_prev = np.array([[0.0, 1.0]])
    xt = lincomb(2.0, x, -1.0, x_prev)
    assert np.array_equal(xt, np.array([[2.0, 3.0]]))


def test_lincomb_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        lincomb(1.0, np.ones((2, 2)), 1.0, np.ones((3, 3)))
