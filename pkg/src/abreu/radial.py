"""Radial solutions of the p-Laplacian Abreu problem on the unit ball.

For ``u(x) = v(|x|)`` with slope ``g = v'`` the coupled fourth-order system
reduces to a scalar compatibility equation for the boundary slope
``g(1)``,

    H(g(1)) = I(g(1)),
    H(t) = int_0^t exp((f/p) s^p) s^(n-1) ds,
    I(t) = exp((f/p) t^p) / (n psi),

after which the whole profile follows from inverting
``H(g(r)) = H(g(1)) r^n`` and ``w = psi exp((f/p)(g^p - g(1)^p))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from .numerics import (
    DEFAULT_QUADRATURE,
    ROOT_TOL,
    Bracket,
    QuadratureSpec,
    find_root_bracketed,
    integrate_kernel,
    invert_monotone,
    kernel_table,
)

__all__ = [
    "Regime",
    "RadialProblem",
    "CompatibilityAnalysis",
    "RadialSolution",
    "kernel_H",
    "kernel_I",
    "compatibility_residual",
    "solve_compatibility",
    "threshold_M",
    "solve_profile",
    "solve_all_profiles",
    "residual_ode",
    "check_linear_growth",
    "sphere_area",
]

# relative |H - I| a candidate g(1) may carry before solve_profile refuses it
_COMPAT_TOL = 1e-8


class Regime(str, enum.Enum):
    F_NEG = "F_NEG"
    P_LT_N = "P_LT_N"
    P_EQ_N = "P_EQ_N"
    P_GT_N = "P_GT_N"


@dataclass(frozen=True)
class RadialProblem:
    """Parameters of the radial problem on the unit ball in R^n.

    ``f_sign`` multiplies the p-Laplacian on the right-hand side, ``psi`` is
    the boundary value of ``w = 1/det D^2u`` and ``phi`` the boundary value
    of ``u``.
    """

    n: int
    p: float
    f_sign: int
    psi: float
    phi: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {self.n!r}")
        if not (math.isfinite(self.p) and self.p > 1):
            raise ValueError(f"p must be a finite real > 1, got {self.p!r}")
        if self.f_sign not in (-1, 1):
            raise ValueError(f"f_sign must be +1 or -1, got {self.f_sign!r}")
        if not (math.isfinite(self.psi) and self.psi > 0):
            raise ValueError(f"psi must be positive, got {self.psi!r}")
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def regime(self) -> Regime:
        if self.f_sign < 0:
            return Regime.F_NEG
        if self.p < self.n:
            return Regime.P_LT_N
        if self.p == self.n:
            return Regime.P_EQ_N
        return Regime.P_GT_N

    @property
    def closed_form(self) -> bool:
        # p == n makes the H integrand an exact derivative
        return self.p == self.n


@dataclass(frozen=True)
class CompatibilityAnalysis:
    regime: Regime
    roots: tuple[float, ...]
    scan_max: float
    scan_step: float
    threshold_M: Optional[float] = None
    tangencies: tuple[float, ...] = ()
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class RadialSolution:
    """Sampled radial profile; arrays are read-only.

    ``slope`` is g = v', ``v`` the profile of u, ``w`` the function
    W = 1/det D^2u and ``det`` the Hessian determinant, all at radii ``r``.
    """

    problem: RadialProblem
    g1: float
    r: np.ndarray
    slope: np.ndarray
    v: np.ndarray
    w: np.ndarray
    det: np.ndarray

    def __post_init__(self):
        for name in ("r", "slope", "v", "w", "det"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        sizes = {getattr(self, k).shape for k in ("r", "slope", "v", "w", "det")}
        if len(sizes) != 1 or self.r.ndim != 1:
            raise ValueError("radial sample arrays must be 1-D and of equal length")

    def __len__(self):
        return self.r.size

    def records(self):
        """Iterate ``(r, slope, v, w, det)`` tuples."""
        return zip(self.r.tolist(), self.slope.tolist(), self.v.tolist(),
                   self.w.tolist(), self.det.tolist())


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n, i.e. n times the ball volume."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _check_t(t):
    if not math.isfinite(t):
        raise ValueError(f"non-finite argument {t!r}")
    if t < 0:
        raise ValueError(f"kernel argument must be >= 0, got {t!r}")


def kernel_H(t: float, problem: RadialProblem,
             spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``H(t) = int_0^t exp((f/p) s^p) s^(n-1) ds``."""
    _check_t(t)
    f, p, n = problem.f_sign, problem.p, problem.n
    if problem.closed_form:
        return f * math.expm1(f * t**n / n)
    return integrate_kernel(f, p, n, 0.0, t, spec)


def kernel_I(t: float, problem: RadialProblem) -> float:
    """``I(t) = exp((f/p) t^p) / (n psi)``.

    For f = -1 this equals ``(1 - int_0^t exp(-s^p/p) s^(p-1) ds) / (n psi)``;
    the exponential form is exact and cheaper.
    """
    _check_t(t)
    return math.exp(problem.f_sign * t**problem.p / problem.p) / (problem.n * problem.psi)


def compatibility_residual(t: float, problem: RadialProblem,
                           spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """A function with the same sign and zeros as ``H(t) - I(t)``.

    For f = +1 both sides are multiplied by ``exp(-t^p/p)`` so that large
    ``t`` does not overflow.
    """
    _check_t(t)
    f, p, n, psi = problem.f_sign, problem.p, problem.n, problem.psi
    if f > 0:
        if problem.closed_form:
            # 1 - exp(-t^n/n) - 1/(n psi), grouped to avoid cancellation
            return (1.0 - 1.0 / (n * psi)) - math.exp(-t**n / n)
        scaled_h = integrate_kernel(1, p, n, 0.0, t, spec, log_scale=t**p / p)
        return scaled_h - 1.0 / (n * psi)
    return kernel_H(t, problem, spec) - kernel_I(t, problem)


def _scan_values(problem, grid):
    f, p, n, psi = problem.f_sign, problem.p, problem.n, problem.psi
    if f > 0:
        if problem.closed_form:
            return (1.0 - 1.0 / (n * psi)) - np.exp(-grid**n / n)
        return kernel_table(1, p, n, grid, scaled=True) - 1.0 / (n * psi)
    if problem.closed_form:
        h = -np.expm1(-grid**n / n)
    else:
        h = kernel_table(-1, p, n, grid)
    return h - np.exp(-grid**p / p) / (n * psi)


def _expand_bracket(fn, lo, hi, limit=64):
    for _ in range(limit):
        if fn(hi) > 0:
            return Bracket(lo, hi)
        lo, hi = hi, 2.0 * hi
    return None


def solve_compatibility(problem: RadialProblem, scan_max: float = 10.0,
                        scan_step: float = 1e-3,
                        tol: float = ROOT_TOL) -> CompatibilityAnalysis:
    """Enumerate admissible boundary slopes ``g(1) > 0``.

    The function ``H - I`` (in overflow-safe scaling) is tabulated on a
    uniform grid over ``[0, scan_max]``; each sign change is refined with a
    bracketed root finder. Extrema of the table that approach zero without
    a sign change are reported in ``tangencies``, since a double root may
    hide between two grid points.

    For p = n with f = +1 the root is the closed form
    ``g(1) = (n log(n psi / (n psi - 1)))^(1/n)`` (no root when
    ``psi <= 1/n``); the scan is kept as a cross-check. For f = -1 and for
    p < n a root exists and is unique, so if none lies below ``scan_max``
    the bracket is widened until one is found.
    """
    if not (scan_max > 0 and scan_step > 0):
        raise ValueError("scan_max and scan_step must be positive")
    regime = problem.regime
    n, psi = problem.n, problem.psi

    npts = max(2, int(round(scan_max / scan_step)) + 1)
    grid = np.linspace(0.0, scan_max, npts)
    vals = _scan_values(problem, grid)

    def resid(t):
        return compatibility_residual(t, problem)

    roots: list[float] = []
    signs = np.sign(vals)
    for k in range(npts - 1):
        a, b = signs[k], signs[k + 1]
        if a == 0:
            continue
        if b == 0:
            # exact grid zero: a crossing only if the next nonzero value flips sign
            later = signs[k + 2:][signs[k + 2:] != 0]
            if later.size and later[0] != a:
                roots.append(float(grid[k + 1]))
        elif a != b:
            roots.append(find_root_bracketed(resid, Bracket(grid[k], grid[k + 1]), tol))

    tangencies = []
    for k in range(1, npts - 1):
        a, b, c = vals[k - 1], vals[k], vals[k + 1]
        if (a > 0) != (c > 0) or (b > 0) != (a > 0):
            continue
        is_extremum = (b - a) * (c - b) <= 0
        near_zero = abs(b) <= 4.0 * max(abs(a - b), abs(c - b))
        if is_extremum and near_zero:
            tangencies.append(float(grid[k]))

    diagnostics: list[str] = []
    threshold = None
    if regime is Regime.P_EQ_N:
        scan_roots = roots
        if n * psi > 1:
            closed = (n * math.log1p(1.0 / (n * psi - 1.0))) ** (1.0 / n)
            roots = [closed]
            if len(scan_roots) != 1 or abs(scan_roots[0] - closed) > 1e-8 * max(1.0, closed):
                diagnostics.append(
                    f"scan over [0, {scan_max}] found {scan_roots} but the closed form "
                    f"gives {closed!r}")
        else:
            roots = []
            diagnostics.append(f"no admissible root: psi = {psi} <= 1/n")
            if scan_roots:
                diagnostics.append(f"scan found spurious sign changes at {scan_roots}")
    elif regime in (Regime.F_NEG, Regime.P_LT_N):
        if not roots:
            bracket = _expand_bracket(resid, scan_max, 2.0 * scan_max)
            if bracket is None:
                diagnostics.append("bracket expansion failed to find the root")
            else:
                roots = [find_root_bracketed(resid, bracket, tol)]
                diagnostics.append(f"root lies beyond scan_max = {scan_max}")
        if len(roots) > 1:
            diagnostics.append(f"expected a single crossing, scan found {len(roots)}")
    else:
        threshold = threshold_M(n, problem.p)

    if tangencies:
        diagnostics.append(f"tangency suspected near t = {tangencies}")
    return CompatibilityAnalysis(
        regime=regime,
        roots=tuple(float(r) for r in roots),
        scan_max=float(scan_max),
        scan_step=float(scan_step),
        threshold_M=threshold,
        tangencies=tuple(tangencies),
        diagnostics=tuple(diagnostics),
    )


def threshold_M(n: int, p: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Size of psi above which a root in (0, 1) is guaranteed when p > n:

        M(n, p) = 1 + exp(1/p) / (n int_0^1 exp(s^p/p) s^(n-1) ds).
    """
    if not p > n:
        raise ValueError(f"threshold_M needs p > n, got n={n}, p={p}")
    h1 = integrate_kernel(1, p, n, 0.0, 1.0, spec)
    return 1.0 + math.exp(1.0 / p) / (n * h1)


def _closed_form_inverse(problem, y):
    # H(t) = f expm1(f t^n / n)  =>  t = ((n/f) log1p(f y))^(1/n)
    f, n = problem.f_sign, problem.n
    return (n * f * np.log1p(f * y)) ** (1.0 / n)


def solve_profile(problem: RadialProblem, g1: float, r_samples: int = 256,
                  tol: float = ROOT_TOL,
                  spec: QuadratureSpec = DEFAULT_QUADRATURE) -> RadialSolution:
    """Reconstruct the radial solution belonging to the boundary slope ``g1``.

    The slope at each radius solves ``H(g(r)) = H(g1) r^n``; ``w`` follows by
    exponentiation, ``det = 1/w``, and ``v(r) = phi - int_r^1 g`` by
    cumulative Simpson on the slope samples. Samples are uniform in ``r``
    and include both end points; ``g(0) = 0`` is imposed.

    Raises
    ------
    ValueError
        If ``g1`` does not satisfy the compatibility condition to relative
        accuracy 1e-8.
    """
    if r_samples < 2:
        raise ValueError("r_samples must be >= 2")
    if not (math.isfinite(g1) and g1 > 0):
        raise ValueError(f"g1 must be a positive real, got {g1!r}")
    f, p, n, psi = problem.f_sign, problem.p, problem.n, problem.psi
    h1 = kernel_H(g1, problem, spec)
    i1 = kernel_I(g1, problem)
    mismatch = abs(h1 - i1) / max(1.0, i1)
    if mismatch > _COMPAT_TOL:
        raise ValueError(
            f"g1 = {g1!r} violates the compatibility condition: "
            f"|H - I| / max(1, I) = {mismatch:.3e}")

    r = np.linspace(0.0, 1.0, r_samples)
    targets = h1 * r**n
    slope = np.empty_like(r)
    slope[0] = 0.0
    slope[-1] = g1
    if problem.closed_form:
        slope[1:-1] = _closed_form_inverse(problem, targets[1:-1])
    else:
        # march outward: H is accumulated incrementally from the previous slope
        prev_t, prev_h = 0.0, 0.0
        for k in range(1, r_samples - 1):
            lo, base = prev_t, prev_h

            def h_from_prev(t, lo=lo, base=base):
                return base + integrate_kernel(f, p, n, lo, t, spec)

            t_k = invert_monotone(h_from_prev, targets[k], Bracket(lo, g1), tol)
            slope[k] = t_k
            prev_t, prev_h = t_k, h_from_prev(t_k)

    w = psi * np.exp((f / p) * (slope**p - g1**p))
    det = 1.0 / w
    if r_samples >= 3:
        cum = cumulative_simpson(slope, x=r, initial=0.0)
    else:
        cum = np.array([0.0, 0.5 * (slope[0] + slope[1]) * (r[1] - r[0])])
    v = problem.phi - (cum[-1] - cum)
    return RadialSolution(problem=problem, g1=float(g1), r=r, slope=slope, v=v, w=w, det=det)


def solve_all_profiles(problem: RadialProblem, r_samples: int = 256,
                       scan_max: float = 10.0, scan_step: float = 1e-3):
    """Compatibility analysis plus one profile per admissible root."""
    analysis = solve_compatibility(problem, scan_max, scan_step)
    return analysis, [solve_profile(problem, g1, r_samples) for g1 in analysis.roots]


def residual_ode(solution: RadialSolution) -> float:
    """Max over interior samples of the defect in the first-order slope ODE

        exp((f/p) g^p) g^(n-1) g' = exp((f/p) g(1)^p) r^(n-1) / psi,

    with ``g'`` from second-order centred differences.
    """
    if len(solution) < 3:
        raise ValueError("residual_ode needs at least 3 samples")
    prob = solution.problem
    f, p, n, psi = prob.f_sign, prob.p, prob.n, prob.psi
    r, g = solution.r, solution.slope
    dg = np.gradient(g, r)
    lhs = np.exp((f / p) * g**p) * g ** (n - 1) * dg
    rhs = math.exp((f / p) * solution.g1**p) * r ** (n - 1) / psi
    return float(np.max(np.abs(lhs - rhs)[1:-1]))


def check_linear_growth(solution: RadialSolution) -> tuple[float, float]:
    """Tightest ``(c_lo, c_hi)`` with ``c_lo r <= g(r) <= c_hi r`` for r > 0."""
    mask = solution.r > 0
    ratio = solution.slope[mask] / solution.r[mask]
    return float(ratio.min()), float(ratio.max())
