"""Checks on computed solutions: energy, maximum principles, monotonicity of F,
radial-versus-grid agreement and directional minimality of the energy.

Every check records what it measured and the tolerance it was held to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import simpson
from scipy.interpolate import PchipInterpolator

from .disk import DiskGrid, GridField
from .grid_solver import GridSolution, _check_reference
from .operators import RhsKind, RhsModel, rhs_values
from .radial import RadialSolution, sphere_area

__all__ = [
    "Check",
    "VerificationReport",
    "energy_Jp",
    "radial_energy",
    "grid_energy",
    "check_max_principles",
    "check_monotonicity_F",
    "cross_validate",
    "check_euler_lagrange",
    "radial_interpolants",
    "DEFAULT_DIRECTIONS",
]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "measured": float(self.measured), "tolerance": float(self.tolerance)}


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[Check, ...] = ()
    skipped: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def summary(self) -> str:
        return "pass" if self.passed else "fail"

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"summary": self.summary, "checks": [c.to_dict() for c in self.checks],
                "skipped": list(self.skipped)}


# ---------------------------------------------------------------------------
# energy


def radial_energy(r, slope, det, n: int, p: float) -> float:
    """``|S^(n-1)| int_0^1 (g^p/p - log det) r^(n-1) dr`` by Simpson's rule."""
    r = np.asarray(r, dtype=float)
    det = np.asarray(det, dtype=float)
    if np.any(det <= 0) or not np.all(np.isfinite(det)):
        raise ValueError("energy needs det > 0 at every sample")
    integrand = (np.abs(slope) ** p / p - np.log(det)) * r ** (n - 1)
    return sphere_area(n) * float(simpson(integrand, x=r))


def grid_energy(u: GridField, p: float) -> float:
    """Nodal quadrature of ``|Du|^p/p - log det D^2u`` over the disk."""
    grid = u.grid
    bvals = u.boundary_values()
    hess = grid.hessians(u.values, bvals)
    det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] ** 2
    if np.any(det <= 0):
        bad = int(np.argmin(det))
        raise ValueError(f"energy needs det > 0; det = {det[bad]:.3e} at node {bad}")
    grad = grid.gradients(u.values, bvals)
    q = np.hypot(grad[:, 0], grad[:, 1]) ** p / p - np.log(det)
    return float(grid.quadrature_weights @ q)


def energy_Jp(data, p: float) -> float:
    """Energy ``int |Du|^p/p - log det D^2u dx`` of radial or grid data.

    ``data`` is a RadialSolution, a GridSolution or a GridField holding u.

    Raises
    ------
    ValueError
        If the determinant is nonpositive anywhere in the data.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p!r}")
    if isinstance(data, RadialSolution):
        return radial_energy(data.r, data.slope, data.det, data.problem.n, p)
    if isinstance(data, GridSolution):
        return grid_energy(data.u, p)
    if isinstance(data, GridField):
        return grid_energy(data, p)
    raise TypeError(f"cannot evaluate the energy of {type(data).__name__}")


# ---------------------------------------------------------------------------
# maximum principles


def check_max_principles(sol: GridSolution, model: RhsModel) -> VerificationReport:
    """Audit the discrete maximum-principle consequences of the equation for w.

    (a) ``rhs <= 0`` forces ``min w >= min psi``; ``rhs >= 0`` forces
        ``max w <= max psi``.
    (b) NEWTON models: ``max (w + |x|^2) <= max over the circle (psi + 1)``.
    (c) LAPLACIAN_SCALED: ``w - (sup|f|/2)|x|^2`` takes its minimum on the circle.

    Slack is reported as ``measured``; a check passes when it is at least
    ``-10 * outer_tol``. Audits that do not apply to the model are listed
    in ``skipped``.
    """
    grid = sol.grid
    tol = 10.0 * sol.config.outer_tol
    w = sol.w.values
    psi_b = sol.w.boundary_values()
    r2 = np.sum(grid.points**2, axis=1)
    rhs = sol.report.rhs
    if rhs is None:
        bvals = sol.u.boundary_values()
        rhs, _ = rhs_values(model, grid.gradients(sol.u.values, bvals),
                            grid.hessians(sol.u.values, bvals), grid.points, sol.u.values)
    checks, skipped = [], []

    if np.all(rhs <= 0):
        slack = float(w.min() - psi_b.min())
        checks.append(Check("min_principle", slack >= -tol, slack, tol))
    else:
        skipped.append("min_principle")
    if np.all(rhs >= 0):
        slack = float(psi_b.max() - w.max())
        checks.append(Check("max_principle", slack >= -tol, slack, tol))
    else:
        skipped.append("max_principle")

    if model.kind is RhsKind.NEWTON:
        slack = float(np.max(psi_b + 1.0) - np.max(w + r2))
        checks.append(Check("newton_barrier", slack >= -tol, slack, tol))
    else:
        skipped.append("newton_barrier")

    if model.kind is RhsKind.LAPLACIAN_SCALED:
        half = 0.5 * model.f_sup(np.vstack([grid.points, grid.bpoints]))
        slack = float(np.min(w - half * r2) - np.min(psi_b - half))
        checks.append(Check("size_barrier", slack >= -tol, slack, tol))
    else:
        skipped.append("size_barrier")
    return VerificationReport(tuple(checks), tuple(skipped))


# ---------------------------------------------------------------------------
# monotonicity of F


def check_monotonicity_F(model: RhsModel, u: GridField, v: GridField, grid: DiskGrid,
                         boundary_tol: float = 1e-10) -> float:
    """Discrete ``int (F[u] - F[v]) (u - v) dx``.

    Raises
    ------
    ValueError
        If ``u`` and ``v`` differ on the circle by more than ``boundary_tol``.
    """
    ub, vb = u.boundary_values(), v.boundary_values()
    gap = float(np.max(np.abs(ub - vb))) if ub.size else 0.0
    if gap > boundary_tol:
        raise ValueError(f"u and v differ by {gap:.3e} on the boundary")

    def F(field_, bvals):
        vals, _ = rhs_values(model, grid.gradients(field_.values, bvals),
                             grid.hessians(field_.values, bvals), grid.points, field_.values)
        return vals

    diff = u.values - v.values
    if not np.any(diff):
        return 0.0
    return float(grid.quadrature_weights @ ((F(u, ub) - F(v, vb)) * diff))


# ---------------------------------------------------------------------------
# radial vs grid


def radial_interpolants(ref: RadialSolution):
    """Monotone cubic interpolants ``(u(r), w(r))`` of a radial solution."""
    return PchipInterpolator(ref.r, ref.v), PchipInterpolator(ref.r, ref.w)


def cross_validate(grid_sol: GridSolution, radial_ref: RadialSolution,
                   tol_u: float = 5e-3, tol_w: float = 5e-3,
                   tol_energy: float = 1e-2) -> VerificationReport:
    """Sup-norm errors of u and w at the nodes and the energy gap.

    Raises
    ------
    ValueError
        If the grid solution's model or boundary data differ from the
        radial problem.
    """
    if grid_sol.model is None:
        raise ValueError("grid solution carries no model to compare")
    _check_reference(grid_sol.model, grid_sol.u.boundary, grid_sol.w.boundary, radial_ref)
    u_ref, w_ref = radial_interpolants(radial_ref)
    r = grid_sol.grid.radius
    eu = float(np.max(np.abs(grid_sol.u.values - u_ref(r))))
    ew = float(np.max(np.abs(grid_sol.w.values - w_ref(r))))
    p = radial_ref.problem.p
    gap = abs(energy_Jp(grid_sol, p) - energy_Jp(radial_ref, p))
    return VerificationReport((
        Check("error_u", eu <= tol_u, eu, tol_u),
        Check("error_w", ew <= tol_w, ew, tol_w),
        Check("energy_gap", gap <= tol_energy, gap, tol_energy),
    ))


# ---------------------------------------------------------------------------
# directional minimality


def _direction(name, poly):
    d1 = poly.deriv()
    return name, poly, d1, d1.deriv()


DEFAULT_DIRECTIONS = (
    _direction("1-r^2", Polynomial([1, 0, -1])),
    _direction("(1-r^2)^2", Polynomial([1, 0, -1]) ** 2),
    _direction("r^2(1-r^2)", Polynomial([0, 0, 1, 0, -1])),
)
DEFAULT_STEPS = (1e-2, -1e-2, 1e-3, -1e-3)


def _perturbed_det(sol: RadialSolution, eta1, eta2, eps):
    # det = g' (g/r)^(n-1); at r = 0 both factors tend to g'(0)
    n = sol.problem.n
    r, g = sol.r, sol.slope
    dg = np.empty_like(g)
    ratio = np.empty_like(g)
    pos = r > 0
    dg[pos] = sol.det[pos] * (r[pos] / g[pos]) ** (n - 1)
    ratio[pos] = g[pos] / r[pos]
    ratio[~pos] = dg[~pos] = sol.det[~pos] ** (1.0 / n)
    d1 = eta1(r)
    ratio_eta = np.where(pos, d1 / np.where(pos, r, 1.0), eta2(0.0))
    dg_e = dg + eps * eta2(r)
    ratio_e = ratio + eps * ratio_eta
    return g + eps * d1, dg_e, ratio_e


def check_euler_lagrange(sol: RadialSolution,
                         directions: Sequence = DEFAULT_DIRECTIONS,
                         steps: Iterable[float] = DEFAULT_STEPS,
                         tol: float = 1e-8) -> VerificationReport:
    """Compare ``J_p(v + eps eta)`` with ``J_p(v)`` along radial directions.

    Each direction is ``(name, eta, eta', eta'')`` with ``eta(1) = 0``. A
    check passes when ``J_p(v + eps eta) - J_p(v) >= -tol``; perturbations
    that leave the convex cone are skipped.
    """
    prob = sol.problem
    n, p = prob.n, prob.p
    base = radial_energy(sol.r, sol.slope, sol.det, n, p)
    checks, skipped = [], []
    for name, eta, d1, d2 in directions:
        if abs(eta(1.0)) > 1e-14:
            raise ValueError(f"direction {name} does not vanish at r = 1")
        for eps in steps:
            label = f"{name} eps={eps:+g}"
            g_e, dg_e, ratio_e = _perturbed_det(sol, d1, d2, eps)
            if np.any(dg_e <= 0) or np.any(ratio_e <= 0):
                skipped.append(label)
                continue
            det_e = dg_e * ratio_e ** (n - 1)
            diff = radial_energy(sol.r, g_e, det_e, n, p) - base
            checks.append(Check(label, diff >= -tol, diff, tol))
    return VerificationReport(tuple(checks), tuple(skipped))
