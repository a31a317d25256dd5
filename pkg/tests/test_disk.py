import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import iv

from abreu.disk import (PAIRS, GridField, build_disk_grid, discrete_state,
                        square_disk_moments)


@pytest.fixture(scope="module")
def grid16():
    return build_disk_grid(1 / 16)


@pytest.mark.parametrize("h", [0.5, 0.25, 0.0, -0.1, math.nan])
def test_refuses_coarse_or_invalid(h):
    with pytest.raises(ValueError):
        build_disk_grid(h)


def test_node_count(grid16):
    assert abs(grid16.size - math.pi * 256) <= 0.1 * math.pi * 256
    assert np.all(grid16.radius < 1)
    assert grid16.interior_mask.sum() == grid16.size


def test_boundary_distances(grid16):
    h = grid16.h
    axis = grid16.dist[:, :4]
    diag = grid16.dist[:, 4:]
    assert np.all((axis > 0) & (axis <= h))
    assert np.all((diag > 0) & (diag <= math.sqrt(2) * h * (1 + 1e-15)))
    assert np.allclose(np.hypot(grid16.bpoints[:, 0], grid16.bpoints[:, 1]), 1.0, atol=1e-15)
    # every node has a full 9-point neighbourhood of nodes or circle points
    assert np.all((grid16.nbr >= 0) | (grid16.bidx >= 0))


def test_boundary_points_lie_on_grid_lines(grid16):
    for d, (di, dj) in enumerate([(1, 0), (-1, 0), (0, 1), (0, -1),
                                  (1, 1), (-1, -1), (1, -1), (-1, 1)]):
        hit = grid16.nbr[:, d] < 0
        unit = np.array([di, dj]) / math.hypot(di, dj)
        expected = grid16.points[hit] + grid16.dist[hit, d, None] * unit
        assert np.allclose(grid16.bpoints[grid16.bidx[hit, d]], expected, atol=1e-14)


def test_paraboloid_hessian(grid16):
    u = GridField.sample(grid16, lambda p: p[:, 0] ** 2 + p[:, 1] ** 2)
    hess = u.hessians()
    assert np.allclose(hess, np.diag([2.0, 2.0]), atol=1e-9)
    state = discrete_state(u, grid16, 0)
    assert np.allclose(state.hess, np.diag([2.0, 2.0]), atol=1e-9)
    assert state.det == pytest.approx(4.0)


def test_mixed_derivative(grid16):
    u = GridField.sample(grid16, lambda p: p[:, 0] * p[:, 1])
    hess = u.hessians()
    far = ~grid16.near_boundary
    assert np.allclose(hess[far, 0, 1], 1.0, rtol=0, atol=1e-12)
    assert np.allclose(hess[:, 0, 1], 1.0, atol=1e-10)
    assert np.allclose(hess[:, 0, 0], 0.0, atol=1e-10)


def test_quadratic_gradient(grid16):
    u = GridField.sample(grid16, lambda p: 0.5 * p[:, 0] ** 2 - p[:, 0] * p[:, 1] + 3 * p[:, 1])
    g = u.gradients()
    x, y = grid16.points.T
    assert np.allclose(g[:, 0], x - y, atol=1e-12)
    assert np.allclose(g[:, 1], -x + 3, atol=1e-12)


def _hessian_errors(h):
    grid = build_disk_grid(h)
    u = GridField.sample(grid, lambda p: np.sin(p[:, 0]) * np.cos(p[:, 1]))
    x, y = grid.points.T
    exact = np.empty((grid.size, 2, 2))
    exact[:, 0, 0] = exact[:, 1, 1] = -np.sin(x) * np.cos(y)
    exact[:, 0, 1] = exact[:, 1, 0] = -np.cos(x) * np.sin(y)
    err = np.max(np.abs(u.hessians() - exact), axis=(1, 2))
    return err[~grid.near_boundary].max(), err[grid.near_boundary].max()


def test_hessian_orders():
    inner1, edge1 = _hessian_errors(1 / 16)
    inner2, edge2 = _hessian_errors(1 / 32)
    inner3, edge3 = _hessian_errors(1 / 64)
    assert inner1 / inner2 > 3.5 and inner2 / inner3 > 3.5
    assert inner3 <= (1 / 64) ** 2
    # next to the circle the error is O(h) with a constant near 0.35
    for h, e in ((1 / 16, edge1), (1 / 32, edge2), (1 / 64, edge3)):
        assert e <= 0.5 * h
    assert edge1 / edge3 > 3


def test_discrete_state_rejects_bad_node(grid16):
    u = GridField(grid16, np.zeros(grid16.size))
    with pytest.raises(IndexError):
        discrete_state(u, grid16, grid16.size)


def test_field_validation(grid16):
    with pytest.raises(ValueError):
        GridField(grid16, np.zeros(3))
    vals = np.zeros(grid16.size)
    vals[4] = np.nan
    with pytest.raises(ValueError):
        GridField(grid16, vals)


def test_sparse_and_difference_forms_agree(grid16):
    rng = np.random.default_rng(0)
    vals = rng.standard_normal(grid16.size)
    bvals = rng.standard_normal(grid16.bpoints.shape[0])
    for pair in PAIRS:
        S, B = grid16.second_difference(pair)
        assert np.allclose(S @ vals + B @ bvals, grid16.directional(vals, bvals, pair),
                           rtol=1e-10, atol=1e-6)
    coeffs = np.tile(np.array([[2.0, 0.3], [0.3, 1.0]]), (grid16.size, 1, 1))
    for mono in (True, False):
        L, Lb = grid16.operator(coeffs, mono)
        assert np.allclose(L @ vals + Lb @ bvals, grid16.apply(coeffs, vals, bvals, mono),
                           rtol=1e-10, atol=1e-6)


def test_monotone_operator_sign_pattern(grid16):
    coeffs = np.tile(np.array([[2.0, -0.5], [-0.5, 1.0]]), (grid16.size, 1, 1))
    L, _ = grid16.operator(coeffs, monotone=True)
    L = L.tocsr()
    diag = L.diagonal()
    assert np.all(diag < 0)
    coo = L.tocoo()
    offdiag = coo.data[coo.row != coo.col]
    assert np.all(offdiag >= 0)


# -- quadrature -------------------------------------------------------------

def test_full_cell_moments():
    m = square_disk_moments(0.1, 0.2, 0.1, 0.0, 0.0)
    assert m[0] == pytest.approx(0.01)
    assert m[1] == pytest.approx(0.01 * 0.1)
    assert m[3] == pytest.approx(0.01 * (0.01 + 0.01 / 12))


def test_cut_cell_moments_cover_disk():
    h = 0.2
    total = np.zeros(6)
    for i in range(-6, 7):
        for j in range(-6, 7):
            total += square_disk_moments(i * h, j * h, h, 0.0, 0.0)
    assert total[0] == pytest.approx(math.pi, abs=1e-13)
    assert total[3] == pytest.approx(math.pi / 4, abs=1e-13)
    assert total[5] == pytest.approx(math.pi / 4, abs=1e-13)
    assert abs(total[1]) < 1e-14 and abs(total[4]) < 1e-14


def test_outside_cell_is_empty():
    assert not np.any(square_disk_moments(2.0, 2.0, 0.1, 0.0, 0.0))


@settings(max_examples=30)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_quadrature_exact_for_quadratics(c):
    grid = build_disk_grid(1 / 8)
    x, y = grid.points.T
    q = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    exact = math.pi * (c[0] + (c[3] + c[5]) / 4)
    assert grid.quadrature_weights @ q == pytest.approx(exact, abs=1e-12)


def test_quadrature_converges_on_smooth_integrand():
    exact = 2 * math.pi * iv(1, 1.0)
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        grid = build_disk_grid(h)
        errs.append(abs(grid.quadrature_weights @ np.exp(grid.points[:, 0]) - exact))
    assert errs[-1] < 1e-5
    assert errs[0] / errs[2] > 10
