import math

import numpy as np
import pytest

from abreu.disk import GridField, build_disk_grid
from abreu.grid_solver import (SolverConfig, SolverError, clip_hessians, convergence_study,
                               solve_coupled, solve_linearized_ma, solve_monge_ampere,
                               solve_poisson)
from abreu.operators import RhsModel
from abreu.radial import RadialProblem, solve_compatibility, solve_profile


def r2(p):
    return np.sum(p**2, axis=1)


@pytest.fixture(scope="module")
def grid():
    return build_disk_grid(1 / 16)


@pytest.fixture(scope="module")
def grid32():
    return build_disk_grid(1 / 32)


@pytest.fixture(scope="module")
def case1(grid):
    return solve_coupled(RhsModel.laplacian(1.0), 0.0, 1.0, grid)


# -- config -----------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(damping=0.0), dict(damping=1.5), dict(outer_tol=0.0), dict(newton_tol=-1.0),
    dict(max_outer=0), dict(max_newton=2.5), dict(convexity_floor=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_config_dict():
    assert SolverConfig(damping=0.3).to_dict()["damping"] == 0.3


def test_clip_hessians():
    hess = np.array([[[1.0, 0.0], [0.0, -2.0]], [[2.0, 0.0], [0.0, 3.0]]])
    out, clipped = clip_hessians(hess, 1e-8)
    assert list(clipped) == [True, False]
    assert np.allclose(out[0], np.diag([1.0, 1e-8]))
    assert np.array_equal(out[1], hess[1])


def test_poisson_quadratic(grid):
    u = solve_poisson(np.full(grid.size, 4.0), lambda p: r2(p), grid)
    assert np.allclose(u.values, r2(grid.points), atol=1e-12)


# -- linearized Monge-Ampere ------------------------------------------------

def test_lma_constant(grid):
    u = GridField.sample(grid, lambda p: np.exp(r2(p) / 2))
    w = solve_linearized_ma(u, np.zeros(grid.size), 1.0, grid)
    assert np.allclose(w.values, 1.0, atol=1e-10)


def test_lma_quadratic_pair(grid):
    u = GridField.sample(grid, lambda p: r2(p) / 2)
    w = solve_linearized_ma(u, 4.0, lambda p: 1 + r2(p), grid)
    assert np.allclose(w.values, 1 + r2(grid.points), atol=1e-12)


def test_lma_minimum_principle(grid):
    rng = np.random.default_rng(2)
    u = GridField.sample(grid, lambda p: r2(p) / 2 + 0.3 * p[:, 0] ** 4 + 0.1 * p[:, 0] * p[:, 1])
    rhs = -rng.uniform(0, 3, grid.size)
    cfg = SolverConfig()
    w = solve_linearized_ma(u, rhs, 1.0, grid, cfg)
    assert w.values.min() >= 1 - 10 * cfg.newton_tol


def test_lma_rejects_bad_rhs_shape(grid):
    u = GridField.sample(grid, lambda p: r2(p) / 2)
    with pytest.raises(ValueError):
        solve_linearized_ma(u, np.zeros(5), 1.0, grid)


# -- Monge-Ampere -----------------------------------------------------------

def test_ma_quadratic_fixed_point(grid):
    w = GridField(grid, np.ones(grid.size), 1.0)
    u, info = solve_monge_ampere(w, 0.5, grid, return_info=True)
    assert info["iterations"] <= 3
    assert np.allclose(u.values, r2(grid.points) / 2, atol=1e-10)
    assert np.allclose(np.linalg.det(u.hessians()), 1.0, atol=1e-9)


@pytest.mark.parametrize("psi", [0.7, 1.0, 2.5])
def test_ma_constant_w(grid, psi):
    w = GridField(grid, np.full(grid.size, psi), psi)
    u = solve_monge_ampere(w, 0.0, grid)
    assert np.allclose(u.values, (r2(grid.points) - 1) / (2 * math.sqrt(psi)), atol=1e-10)


def test_ma_nonquadratic_second_order():
    # u = exp(|x|^2 / 2) has det D^2u = (1 + r^2) exp(r^2)
    errs = []
    for h in (1 / 16, 1 / 32):
        g = build_disk_grid(h)
        rr = r2(g.points)
        w = GridField(g, 1 / ((1 + rr) * np.exp(rr)), lambda p: np.full(len(p), 0.5 / math.e))
        u = solve_monge_ampere(w, math.exp(0.5), g)
        errs.append(np.max(np.abs(u.values - np.exp(rr / 2))))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3


def test_ma_rejects_nonpositive_w(grid):
    vals = np.ones(grid.size)
    vals[10] = -0.1
    with pytest.raises(ValueError):
        solve_monge_ampere(GridField(grid, vals, 1.0), 0.0, grid)


def test_ma_stagnation_report(grid):
    w = GridField.sample(grid, lambda p: np.exp(-3 * r2(p)), boundary=math.exp(-3))
    with pytest.raises(SolverError) as exc:
        solve_monge_ampere(w, 0.0, grid, SolverConfig(max_newton=1))
    assert len(exc.value.details["newton_history"]) == 2


# -- coupled ----------------------------------------------------------------

def test_coupled_case1(case1, grid):
    rr = r2(grid.points)
    assert case1.report.converged
    assert np.max(np.abs(case1.w.values - (1 + rr) / 2)) <= 1e-8
    assert case1.report.consistency <= 10 * case1.config.newton_tol
    assert case1.report.min_det > 0 and case1.report.min_w > 0
    assert case1.report.max_principles.passed
    assert case1.report.max_principles["size_barrier"].measured == pytest.approx(0, abs=1e-10)


def test_coupled_zero_rhs(grid):
    sol = solve_coupled(RhsModel.laplacian(0.0), 0.0, 1.0, grid)
    assert np.allclose(sol.w.values, 1.0, atol=1e-12)
    assert np.allclose(sol.u.values, (r2(grid.points) - 1) / 2, atol=1e-10)
    for check in sol.report.max_principles.checks:
        assert check.passed and abs(check.measured) < 1e-10


def test_coupled_negative_f(grid32):
    sol = solve_coupled(RhsModel.p_laplacian(2.0, -1.0), 0.0, 1.0, grid32)
    assert np.max(np.abs(sol.w.values - (3 - r2(grid32.points)) / 2)) <= 5e-3
    assert sol.report.max_principles["min_principle"].passed


def test_coupled_newton_barrier(grid):
    sol = solve_coupled(RhsModel.newton(1.0, 1.0, 1), 0.0, 1.0, grid)
    assert sol.report.max_principles["newton_barrier"].passed
    # for f = g = 1 the radial reduction gives w = 2 - r^2
    assert np.allclose(sol.w.values, 2 - r2(grid.points), atol=1e-8)


def test_coupled_nonexistence(grid):
    with pytest.raises(SolverError) as exc:
        solve_coupled(RhsModel.laplacian(1.0), 0.0, 0.4, grid)
    assert "positivity" in str(exc.value)
    assert exc.value.details["report"].min_w <= 0


def test_coupled_max_outer(grid):
    with pytest.raises(SolverError) as exc:
        solve_coupled(RhsModel.laplacian(1.0), 0.0, 1.0, grid, SolverConfig(max_outer=2))
    report = exc.value.details["report"]
    assert report.iterations == 2 and not report.converged


def test_coupled_rejects_nonpositive_psi(grid):
    with pytest.raises(ValueError):
        solve_coupled(RhsModel.laplacian(1.0), 0.0, -1.0, grid)


def test_coupled_is_deterministic(grid):
    a = solve_coupled(RhsModel.p_laplacian(3.0, -1.0), 0.0, 1.0, grid)
    b = solve_coupled(RhsModel.p_laplacian(3.0, -1.0), 0.0, 1.0, grid)
    assert np.array_equal(a.u.values, b.u.values)
    assert np.array_equal(a.w.values, b.w.values)


def test_clamp_coherence(grid):
    f = lambda x: -(1 + 4 * r2(x))
    counts = []
    for gamma in (0.8, 0.4, 0.2, 0.1, 0.05):
        sol = solve_coupled(RhsModel.clamped(RhsModel.p_laplacian(2.0, f), gamma), 0.0, 1.0, grid)
        assert sol.report.clamp_active.shape == (grid.size,)
        assert np.all(np.abs(sol.report.f_gamma) <= 1 + 1e-15)
        counts.append(sol.report.clamp_active_count)
    assert counts[0] > 0 and counts[-1] == 0
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_records(case1):
    rec = case1.records()
    assert rec.shape == (case1.grid.size, 5)
    assert np.allclose(rec[:, 3] * rec[:, 4], 1.0, atol=1e-9)


# -- convergence study ------------------------------------------------------

@pytest.fixture(scope="module")
def reference():
    prob = RadialProblem(2, 2.0, -1, 1.0, 0.0)
    g1 = solve_compatibility(prob).roots[0]
    return solve_profile(prob, g1, 2049)


def test_study_single_row(reference):
    rows = convergence_study(RhsModel.p_laplacian(2.0, -1.0), 0.0, 1.0, [1 / 16],
                             reference=reference)
    assert len(rows) == 1
    assert rows[0].order_u is None and rows[0].order_w is None
    assert rows[0].error_w < 5e-3


def test_study_two_rows_parallel(reference):
    args = (RhsModel.p_laplacian(2.0, -1.0), 0.0, 1.0, [1 / 8, 1 / 16])
    serial = convergence_study(*args, reference=reference)
    parallel = convergence_study(*args, reference=reference, jobs=2)
    assert serial == parallel
    assert serial[1].order_u is not None


def test_study_second_order_on_nonquadratic_case():
    # p = 3 is not reproduced exactly by the stencil, so errors show the true order
    prob = RadialProblem(2, 3.0, -1, 1.0, 0.0)
    ref = solve_profile(prob, solve_compatibility(prob).roots[0], 4097)
    rows = convergence_study(RhsModel.p_laplacian(3.0, -1.0), 0.0, 1.0, [1 / 16, 1 / 32],
                             reference=ref)
    assert rows[1].order_w >= 1.8 and rows[1].order_u >= 1.5
    assert rows[1].error_w < rows[0].error_w


@pytest.mark.parametrize("psi, model", [
    (2.0, RhsModel.p_laplacian(2.0, -1.0)),
    (1.0, RhsModel.p_laplacian(2.0, 1.0)),
    (1.0, RhsModel.newton(1.0, 1.0, 1))])
def test_study_mismatch(reference, psi, model):
    with pytest.raises(ValueError):
        convergence_study(model, 0.0, psi, [1 / 16], reference=reference)


def test_study_requires_reference():
    with pytest.raises(ValueError):
        convergence_study(RhsModel.laplacian(1.0), 0.0, 1.0, [1 / 16])
