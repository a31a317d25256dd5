"""Finite-difference solver for the coupled system on the unit disk

    U^{ij} w_ij = F(x, u, Du, D^2u),   w = 1 / det D^2u,
    u = phi, w = psi on the circle,

with ``U`` the cofactor matrix of ``D^2u``.

The outer loop freezes ``u^k``, solves the linear problem for ``w^k``,
then solves the Monge-Ampere problem ``det D^2u* = 1/w^k`` by Newton's
method and relaxes ``u^{k+1} = theta u* + (1 - theta) u^k``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .disk import BoundaryData, DiskGrid, GridField, as_boundary_fn, build_disk_grid
from .operators import RhsKind, RhsModel, cofactor, rhs_values

__all__ = [
    "SolverConfig",
    "SolveReport",
    "GridSolution",
    "SolverError",
    "clip_hessians",
    "solve_poisson",
    "solve_linearized_ma",
    "solve_monge_ampere",
    "solve_coupled",
    "convergence_study",
    "StudyRow",
]


class SolverError(RuntimeError):
    """A solve failed; ``details`` carries residual history and worst nodes."""

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.details = details or {}


@dataclass(frozen=True)
class SolverConfig:
    damping: float = 0.5
    outer_tol: float = 1e-8
    max_outer: int = 200
    newton_tol: float = 1e-10
    max_newton: int = 30
    convexity_floor: float = 1e-8

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping!r}")
        for name in ("outer_tol", "newton_tol", "convexity_floor"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        for name in ("max_outer", "max_newton"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    outer_history: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    newton_history: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    consistency: float = float("nan")
    min_det: float = float("nan")
    min_w: float = float("nan")
    clipped_nodes: int = 0
    clamp_active: Optional[np.ndarray] = None
    f_gamma: Optional[np.ndarray] = None
    rhs: Optional[np.ndarray] = None
    max_principles: object = None
    elapsed: float = 0.0

    @property
    def clamp_active_count(self) -> Optional[int]:
        return None if self.clamp_active is None else int(np.count_nonzero(self.clamp_active))

    def to_dict(self) -> dict:
        out = {
            "iterations": self.iterations,
            "converged": self.converged,
            "outer_history": [float(x) for x in self.outer_history],
            "newton_iterations": list(self.newton_iterations),
            "linear_residuals": [float(x) for x in self.linear_residuals],
            "consistency": float(self.consistency),
            "min_det": float(self.min_det),
            "min_w": float(self.min_w),
            "clipped_nodes": int(self.clipped_nodes),
            "clamp_active_count": self.clamp_active_count,
            "elapsed": self.elapsed,
        }
        if self.max_principles is not None:
            out["max_principles"] = self.max_principles.to_dict()
        return out


@dataclass
class GridSolution:
    u: GridField
    w: GridField
    report: SolveReport
    model: Optional[RhsModel] = None
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def grid(self) -> DiskGrid:
        return self.u.grid

    def det(self) -> np.ndarray:
        return np.linalg.det(self.u.hessians())

    def records(self) -> np.ndarray:
        """Rows ``x, y, u, w, det`` at the interior nodes."""
        pts = self.grid.points
        return np.column_stack([pts[:, 0], pts[:, 1], self.u.values, self.w.values, self.det()])


# ---------------------------------------------------------------------------


def clip_hessians(hess: np.ndarray, floor: float):
    """Raise Hessian eigenvalues to ``floor``; returns (clipped, mask of changed nodes)."""
    eigval, eigvec = np.linalg.eigh(hess)
    low = eigval < floor
    changed = np.any(low, axis=1)
    if not changed.any():
        return hess, changed
    eigval = np.maximum(eigval, floor)
    out = hess.copy()
    out[changed] = np.einsum("nij,nj,nkj->nik", eigvec[changed], eigval[changed],
                             eigvec[changed])
    return out, changed


def _where(grid, node):
    x, y = grid.points[node]
    return f"({x:.6g}, {y:.6g})"


def _factorize(matrix):
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:  # singular factor
        raise SolverError(f"sparse factorization failed: {exc}") from exc


def _solve(matrix, rhs):
    sol = _factorize(matrix).solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverError("linear solve produced non-finite values")
    return sol


def solve_poisson(rhs: np.ndarray, bc: BoundaryData, grid: DiskGrid) -> GridField:
    """Shortley-Weller solution of ``Delta u = rhs`` with ``u = bc`` on the circle."""
    eye = np.broadcast_to(np.eye(2), (grid.size, 2, 2))
    L, Lb = grid.operator(eye, monotone=True)
    bvals = as_boundary_fn(bc)(grid.bpoints)
    values = _solve(L, np.asarray(rhs, dtype=float) - Lb @ bvals)
    return GridField(grid, values, bc)


def _lma(u: GridField, rhs_vals: np.ndarray, psi_bc: BoundaryData, grid: DiskGrid,
         config: SolverConfig):
    hess, _ = clip_hessians(u.hessians(), config.convexity_floor)
    cof = cofactor(hess)
    L, Lb = grid.operator(cof, monotone=True)
    bvals = as_boundary_fn(psi_bc)(grid.bpoints)
    b = rhs_vals - Lb @ bvals
    lu = _factorize(L)
    w = lu.solve(b)
    residual = np.abs(grid.apply(cof, w, bvals) - rhs_vals)
    # one step of iterative refinement when round-off dominates
    if residual.max() > config.newton_tol:
        w = w - lu.solve(grid.apply(cof, w, bvals) - rhs_vals)
        residual = np.abs(grid.apply(cof, w, bvals) - rhs_vals)
    if not np.all(np.isfinite(w)):
        raise SolverError("linearized Monge-Ampere solve produced non-finite values")
    worst = int(np.argmax(residual))
    if residual[worst] > config.newton_tol:
        raise SolverError(
            f"linearized Monge-Ampere residual {residual[worst]:.3e} exceeds "
            f"{config.newton_tol:.1e} at node {worst} {_where(grid, worst)}",
            {"worst_node": worst, "residual": float(residual[worst])})
    return GridField(grid, w, psi_bc), float(residual.max())


def solve_linearized_ma(u: GridField, rhs, psi_bc: BoundaryData, grid: DiskGrid,
                        config: SolverConfig = SolverConfig()) -> GridField:
    """Solve ``U^{ij} w_ij = rhs`` with ``w = psi`` on the circle, ``U = cof(D^2u)``.

    ``rhs`` is a GridField or an array of nodal values. The mixed derivative
    uses the positive-coefficient diagonal splitting (see
    :meth:`DiskGrid.operator`), so the discrete minimum principle holds for
    diagonally dominant cofactors. Hessian eigenvalues below
    ``config.convexity_floor`` are clipped before the cofactor is taken.

    Raises
    ------
    SolverError
        When the factorization fails or the residual exceeds ``newton_tol``.
    """
    rhs_vals = rhs.values if isinstance(rhs, GridField) else np.asarray(rhs, dtype=float)
    rhs_vals = np.broadcast_to(rhs_vals, (grid.size,)).astype(float)
    return _lma(u, rhs_vals, psi_bc, grid, config)[0]


def _default_ma_init(w_vals, phi_bc, grid):
    # Delta u = 2 sqrt(det) is exact for det D^2u = const, |x|^2-type solutions
    return solve_poisson(2.0 / np.sqrt(w_vals), phi_bc, grid)


def _newton_ma(w: GridField, phi_bc, grid, config, init):
    w_vals = np.asarray(w.values, dtype=float)
    if not np.all(w_vals > 0):
        bad = int(np.argmin(w_vals))
        raise ValueError(f"Monge-Ampere solve needs w > 0; w = {w_vals[bad]:.3e} at node {bad}")
    target = 1.0 / w_vals
    u = (_default_ma_init(w_vals, phi_bc, grid) if init is None else init).values.copy()
    bvals = as_boundary_fn(phi_bc)(grid.bpoints)
    floor = config.convexity_floor

    def evaluate(vals):
        hess, clipped = clip_hessians(grid.hessians(vals, bvals), floor)
        det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] ** 2
        return hess, clipped, det - target

    hess, clipped, res = evaluate(u)
    history = [float(np.max(np.abs(res * w_vals)))]
    iters = 0
    while history[-1] > config.newton_tol:
        if iters >= config.max_newton:
            raise SolverError(
                f"Newton stagnated after {iters} iterations, residual {history[-1]:.3e}",
                {"newton_history": history})
        J, _ = grid.operator(cofactor(hess), monotone=False)
        step = _solve(J, -res)
        norm0 = np.max(np.abs(res))
        alpha = 1.0
        for _ in range(40):
            trial = u + alpha * step
            t_hess, t_clipped, t_res = evaluate(trial)
            if np.max(np.abs(t_res)) <= (1.0 - 1e-4 * alpha) * norm0:
                break
            alpha *= 0.5
        else:
            raise SolverError("Newton line search failed", {"newton_history": history})
        u, hess, clipped, res = trial, t_hess, t_clipped, t_res
        iters += 1
        history.append(float(np.max(np.abs(res * w_vals))))
    return GridField(grid, u, phi_bc), {"iterations": iters, "history": history,
                                        "clipped": int(np.count_nonzero(clipped))}


def solve_monge_ampere(w: GridField, phi_bc: BoundaryData, grid: DiskGrid,
                       config: SolverConfig = SolverConfig(),
                       init: Optional[GridField] = None, return_info: bool = False):
    """Newton's method for ``det D^2u = 1/w``, ``u = phi`` on the circle.

    The Jacobian is the exact derivative of the discrete determinant,
    ``U11 D_x + U22 D_y + U12 (D_e - D_e')``, assembled at the clipped
    Hessian. Steps are halved until the max-norm residual decreases.
    Convergence is declared when ``max |w det D^2u - 1| <= newton_tol``.
    The default start solves ``Delta u = 2 / sqrt(w)``. With
    ``return_info=True`` the result is ``(u, info)`` where ``info`` holds
    the iteration count, residual history and number of clipped nodes.

    Raises
    ------
    ValueError
        If ``w`` is not positive at every node.
    SolverError
        On stagnation after ``max_newton`` iterations.
    """
    u, info = _newton_ma(w, phi_bc, grid, config, init)
    return (u, info) if return_info else u


def _rhs_at(model, u: GridField):
    grid = u.grid
    bvals = u.boundary_values()
    return rhs_values(model, grid.gradients(u.values, bvals), grid.hessians(u.values, bvals),
                      grid.points, u.values)


def solve_coupled(rhs_model: RhsModel, phi_bc: BoundaryData, psi_bc: BoundaryData,
                  grid: DiskGrid, config: SolverConfig = SolverConfig(),
                  init: Optional[GridField] = None, audit: bool = True) -> GridSolution:
    """Damped fixed-point iteration for the coupled fourth-order problem.

    Starting from the Monge-Ampere solution with ``w`` equal to the harmonic
    extension of ``psi`` (or from ``init``), each sweep evaluates ``F`` at
    ``u^k``, solves for ``w^k``, solves for ``u*`` and relaxes. Returns the
    last ``(u*, w^k)`` pair once ``max |u^{k+1} - u^k| <= outer_tol``.

    Raises
    ------
    SolverError
        If ``w`` loses positivity, an inner solve fails, or the loop does
        not settle within ``max_outer`` sweeps. ``details["report"]`` holds
        the partial report.
    """
    start = time.perf_counter()
    report = SolveReport()
    psi_fn = as_boundary_fn(psi_bc)
    if np.any(psi_fn(grid.bpoints) <= 0):
        raise ValueError("boundary data for w must be positive")

    def fail(msg, exc=None):
        report.elapsed = time.perf_counter() - start
        details = {"report": report}
        if exc is not None and isinstance(exc, SolverError):
            details.update(exc.details)
        err = SolverError(msg, details)
        raise err from exc

    if init is None:
        w0 = solve_poisson(np.zeros(grid.size), psi_bc, grid)
        try:
            u, _ = _newton_ma(w0, phi_bc, grid, config, None)
        except SolverError as exc:
            fail(f"initial Monge-Ampere solve failed: {exc}", exc)
    else:
        u = init

    theta = config.damping
    u_star = w = None
    for k in range(config.max_outer):
        rhs, _ = _rhs_at(rhs_model, u)
        try:
            w, lin_res = _lma(u, rhs, psi_bc, grid, config)
        except SolverError as exc:
            fail(f"sweep {k}: {exc}", exc)
        report.linear_residuals.append(lin_res)
        if np.any(w.values <= 0):
            bad = int(np.argmin(w.values))
            report.min_w = float(w.values[bad])
            fail(f"sweep {k}: w lost positivity (w = {w.values[bad]:.3e} at "
                 f"{_where(grid, bad)}); no convex solution is reachable")
        try:
            u_star, stats = _newton_ma(w, phi_bc, grid, config, u)
        except SolverError as exc:
            fail(f"sweep {k}: {exc}", exc)
        report.newton_iterations.append(stats["iterations"])
        report.newton_history.append(stats["history"])
        report.clipped_nodes = stats["clipped"]
        change = float(np.max(np.abs(u_star.values - u.values)))
        report.outer_history.append(change)
        report.iterations = k + 1
        if not math.isfinite(change):
            fail(f"sweep {k}: iteration diverged")
        if change <= config.outer_tol:
            report.converged = True
            break
        u = GridField(grid, theta * u_star.values + (1 - theta) * u.values, phi_bc)
    else:
        fail(f"outer loop did not settle in {config.max_outer} sweeps "
             f"(last change {report.outer_history[-1]:.3e})")

    det = np.linalg.det(u_star.hessians())
    report.min_det = float(det.min())
    report.min_w = float(w.values.min())
    report.consistency = float(np.max(np.abs(det * w.values - 1.0)))
    rhs, info = _rhs_at(rhs_model, u_star)
    report.rhs = rhs
    if rhs_model.kind is RhsKind.CLAMPED:
        report.clamp_active = info["clamp_active"]
        report.f_gamma = info["f_gamma"]
    report.elapsed = time.perf_counter() - start
    sol = GridSolution(u_star, w, report, rhs_model, config)
    if audit:
        from .verify import check_max_principles
        report.max_principles = check_max_principles(sol, rhs_model)
    return sol


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyRow:
    h: float
    error_u: float
    error_w: float
    order_u: Optional[float]
    order_w: Optional[float]
    iterations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _check_reference(model: RhsModel, phi_bc, psi_bc, reference):
    prob = reference.problem
    if prob.n != 2:
        raise ValueError(f"grid reference must be two-dimensional, got n = {prob.n}")
    for name, data, want in (("psi", psi_bc, prob.psi), ("phi", phi_bc, prob.phi)):
        vals = as_boundary_fn(data)(np.array([[1.0, 0.0], [0.0, 1.0], [-0.6, -0.8]]))
        if not np.allclose(vals, want, rtol=0, atol=1e-12):
            raise ValueError(f"{name} boundary data {vals} do not match the reference {want}")
    if model.kind is RhsKind.LAPLACIAN_SCALED:
        p_ok = prob.p == 2
    elif model.kind is RhsKind.P_LAPLACIAN:
        p_ok = model.p == prob.p
    else:
        raise ValueError(f"no radial reference for {model.kind.value} models")
    if callable(model.f) or float(model.f) != prob.f_sign or not p_ok:
        raise ValueError("model (p, f) does not match the reference problem")


def _study_point(args):
    rhs_model, phi_bc, psi_bc, h, config = args
    grid = build_disk_grid(h)
    sol = solve_coupled(rhs_model, phi_bc, psi_bc, grid, config, audit=False)
    return sol.u.values, sol.w.values, sol.report.iterations


def convergence_study(rhs_model: RhsModel, phi_bc: BoundaryData, psi_bc: BoundaryData,
                      h_list: Sequence[float], config: SolverConfig = SolverConfig(),
                      reference=None, jobs: int = 1) -> list[StudyRow]:
    """Solve on each mesh width and measure sup-norm errors against a radial solution.

    Orders are ``log(e_prev / e) / log(h_prev / h)`` between consecutive
    rows; the first row has none. With ``jobs > 1`` the solves run in
    separate processes (model and boundary data must then be picklable);
    the rows do not depend on the execution order. Solver failures
    propagate.
    """
    from .verify import radial_interpolants

    if reference is None:
        raise ValueError("a radial reference solution is required")
    h_list = [float(h) for h in h_list]
    if not h_list:
        raise ValueError("h_list is empty")
    for h in h_list:
        build_disk_grid(h)  # validates before any solve starts
    _check_reference(rhs_model, phi_bc, psi_bc, reference)
    u_ref, w_ref = radial_interpolants(reference)
    tasks = [(rhs_model, phi_bc, psi_bc, h, config) for h in h_list]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_study_point, tasks))
    else:
        results = [_study_point(t) for t in tasks]

    rows = []
    prev = None
    for h, (u, w, iters) in zip(h_list, results):
        r = build_disk_grid(h).radius
        eu = float(np.max(np.abs(u - u_ref(r))))
        ew = float(np.max(np.abs(w - w_ref(r))))
        ou = ow = None
        if prev is not None:
            ratio = math.log(prev[0] / h)
            ou = _order(prev[1], eu, ratio)
            ow = _order(prev[2], ew, ratio)
        rows.append(StudyRow(h, eu, ew, ou, ow, iters))
        prev = (h, eu, ew)
    return rows


def _order(e_prev, e, log_ratio):
    if e_prev > 0 and e > 0:
        return math.log(e_prev / e) / log_ratio
    return float("nan")
