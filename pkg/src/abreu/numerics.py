"""Low-level numerical kernels.

Adaptive Gauss-Legendre quadrature for the exponential kernels

    int_a^b exp((f/p) s^p) s^(m-1) ds,

a bracket-preserving root finder and inversion of monotone scalar functions.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "QuadratureSpec",
    "Bracket",
    "QuadratureError",
    "NoBracketError",
    "DEFAULT_QUADRATURE",
    "ROOT_TOL",
    "integrate",
    "integrate_kernel",
    "kernel_table",
    "find_root_bracketed",
    "invert_monotone",
]

ROOT_TOL = 1e-12

_ORDER = 10
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(_ORDER)
_MAX_PANELS = 20000


class QuadratureError(ArithmeticError):
    """Requested accuracy could not be reached, or the integrand blew up."""


class NoBracketError(ValueError):
    """The function does not change sign over the supplied bracket."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_depth: int = 50

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("bracket endpoints must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"empty bracket [{self.lo}, {self.hi}]")


DEFAULT_QUADRATURE = QuadratureSpec()


def _gauss(fn, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    vals = fn(mid + half * _NODES)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
    return half * float(np.dot(_WEIGHTS, vals))


def integrate(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Globally adaptive Gauss-Legendre quadrature of a vectorized integrand.

    Each panel is estimated with a 10-point rule on the whole panel and on
    its two halves; the difference is the panel's error estimate. The panel
    with the largest estimate is split until the summed estimate meets
    ``max(abs_tol, rel_tol * |I|)``.

    Raises
    ------
    QuadratureError
        If a panel deeper than ``spec.max_depth`` still needs splitting, or
        the integrand produces non-finite values.
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integration limits must be finite")
    if b < a:
        raise ValueError("integration requires a <= b")
    if a == b:
        return 0.0

    def panel(lo, hi, depth):
        mid = 0.5 * (lo + hi)
        whole = _gauss(fn, lo, hi)
        left = _gauss(fn, lo, mid)
        right = _gauss(fn, mid, hi)
        est = left + right
        return (-abs(est - whole), lo, hi, est, depth)

    heap = [panel(a, b, 0)]
    total = heap[0][3]
    err = -heap[0][0]
    npanels = 1
    while err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        neg_err, lo, hi, est, depth = heapq.heappop(heap)
        if depth >= spec.max_depth or npanels >= _MAX_PANELS:
            raise QuadratureError(
                f"tolerance not reached: error estimate {err:.3e} on [{a}, {b}] "
                f"after {npanels} panels (depth {depth})")
        mid = 0.5 * (lo + hi)
        kids = (panel(lo, mid, depth + 1), panel(mid, hi, depth + 1))
        for kid in kids:
            heapq.heappush(heap, kid)
        npanels += 1
        # re-sum instead of updating in place to keep round-off from drifting
        total = math.fsum(item[3] for item in heap)
        err = math.fsum(-item[0] for item in heap)
    return total


def _kernel(f_sign, p, m, log_scale):
    coef = f_sign / p

    def fn(s):
        return np.exp(coef * s**p - log_scale) * s ** (m - 1)

    return fn


def _check_kernel_args(f_sign, p, m):
    if f_sign not in (-1, 1):
        raise ValueError(f"f_sign must be +1 or -1, got {f_sign!r}")
    if not (math.isfinite(p) and p > 1):
        raise ValueError(f"p must be a finite real > 1, got {p!r}")
    if not (math.isfinite(m) and m >= 1):
        raise ValueError(f"m must be a finite real >= 1, got {m!r}")


def integrate_kernel(f_sign: int, p: float, m: float, a: float, b: float,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE,
                     log_scale: float = 0.0) -> float:
    """Return ``int_a^b exp((f_sign/p) s^p - log_scale) s^(m-1) ds``.

    ``log_scale`` divides the integrand by ``exp(log_scale)`` before
    integration, which keeps the f_sign = +1 kernels finite for large ``b``.
    ``m`` may be non-integer (the compatibility identity uses ``m = p``).
    """
    _check_kernel_args(f_sign, p, m)
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(log_scale)):
        raise ValueError("non-finite input to integrate_kernel")
    if a < 0:
        raise ValueError("kernel integrals are taken over s >= 0")
    return integrate(_kernel(f_sign, p, m, log_scale), a, b, spec)


def kernel_table(f_sign: int, p: float, m: float, t: np.ndarray,
                 scaled: bool = False) -> np.ndarray:
    """Cumulative kernel integrals ``int_0^{t_k}`` on an increasing grid.

    Each cell ``[t_{k-1}, t_k]`` is integrated with one 10-point Gauss rule,
    so the grid must be fine compared with the variation of the kernel
    (root scans use steps of order 1e-3). With ``scaled=True`` entry ``k`` is
    multiplied by ``exp(-(f_sign/p) t_k^p)``; the recursion is carried out in
    that scaling so nothing overflows.
    """
    _check_kernel_args(f_sign, p, m)
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t must be a nonempty increasing grid starting at >= 0")
    coef = f_sign / p
    lo, hi = t[:-1], t[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    s = mid + half * _NODES[None, :]
    phase = coef * hi**p
    if scaled:
        vals = np.exp(coef * s**p - phase[:, None]) * s ** (m - 1)
    else:
        vals = np.exp(coef * s**p) * s ** (m - 1)
    cells = (half[:, 0]) * (vals @ _WEIGHTS)
    out = np.empty_like(t)
    out[0] = integrate_kernel(f_sign, p, m, 0.0, t[0],
                              log_scale=coef * t[0] ** p if scaled else 0.0)
    if not scaled:
        out[1:] = out[0] + np.cumsum(cells)
        return out
    decay = np.exp(-(phase - coef * lo**p))
    acc = out[0]
    for k in range(cells.size):
        acc = decay[k] * acc + cells[k]
        out[k + 1] = acc
    return out


def find_root_bracketed(fn: Callable[[float], float], bracket: Bracket,
                        tol: float = ROOT_TOL, max_iter: int = 500) -> float:
    """Root of a continuous function on a sign-change bracket.

    Secant (regula falsi) steps are taken while they shrink the bracket by
    at least half per step; otherwise the step falls back to bisection, so
    the bracket width is guaranteed to go to zero.

    Raises
    ------
    NoBracketError
        If ``fn(lo) * fn(hi) > 0``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    a, b = float(bracket.lo), float(bracket.hi)
    fa, fb = fn(a), fn(b)
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise ValueError(f"non-finite function values at bracket ends: {fa}, {fb}")
    if fa == 0:
        return a
    if fb == 0:
        return b
    if (fa > 0) == (fb > 0):
        raise NoBracketError(
            f"no bracket: f({a}) = {fa:.3e} and f({b}) = {fb:.3e} have the same sign")

    bisect = False
    for _ in range(max_iter):
        width = b - a
        if width <= tol:
            break
        mid = 0.5 * (a + b)
        x = mid
        if not bisect and fb != fa:
            x = b - fb * (b - a) / (fb - fa)
            if not a < x < b:
                x = mid
        if not a < x < b:
            # bracket is down to adjacent floats
            break
        fx = fn(x)
        if fx == 0:
            return x
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        bisect = (b - a) > 0.5 * width
    return a if abs(fa) <= abs(fb) else b


def invert_monotone(fn: Callable[[float], float], target: float, bracket: Bracket,
                    tol: float = ROOT_TOL) -> float:
    """Solve ``fn(t) = target`` for a strictly increasing ``fn`` on ``bracket``."""
    lo_val, hi_val = fn(bracket.lo), fn(bracket.hi)
    if not lo_val <= target <= hi_val:
        raise ValueError(
            f"target {target!r} outside [{lo_val!r}, {hi_val!r}] over "
            f"[{bracket.lo}, {bracket.hi}]")
    if target == lo_val:
        return bracket.lo
    if target == hi_val:
        return bracket.hi
    return find_root_bracketed(lambda t: fn(t) - target, bracket, tol)
