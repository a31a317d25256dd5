"""Pointwise differential-operator algebra.

Cofactor matrices, elementary symmetric functions of Hessian eigenvalues,
the right-hand-side families of the Abreu-type systems, the gamma-clamp and
the trace inequalities behind the maximum-principle bounds.

Most functions accept a single ``(n, n)`` matrix or a stack ``(..., n, n)``;
the grid solver evaluates everything on stacks of 2x2 Hessians.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "PointState",
    "RhsKind",
    "RhsModel",
    "RegularizationWarning",
    "point_state",
    "cofactor",
    "elementary_symmetric",
    "rhs_values",
    "rhs_evaluate",
    "rhs_clamped",
    "newton_scale",
    "check_trace_inequalities",
]

# floor for |Du| where the p < 2 p-Laplacian is singular
GRAD_FLOOR = float(np.finfo(float).eps)

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]


class RegularizationWarning(RuntimeWarning):
    """A singular p-Laplacian evaluation was regularized."""


@dataclass(frozen=True)
class PointState:
    """Du, D^2u, det D^2u and the cofactor matrix at one point.

    ``value`` (u itself) is optional and only read by user-supplied models.
    """

    grad: np.ndarray
    hess: np.ndarray
    det: float
    cof: np.ndarray
    value: Optional[float] = None

    @property
    def n(self) -> int:
        return self.hess.shape[-1]

    @property
    def laplacian(self) -> float:
        return float(np.trace(self.hess))


def point_state(hess, grad=None, value=None) -> PointState:
    hess = np.array(hess, dtype=float)
    if hess.ndim != 2 or hess.shape[0] != hess.shape[1]:
        raise ValueError("hess must be a square matrix")
    if not np.allclose(hess, hess.T, rtol=1e-12, atol=1e-14):
        raise ValueError("hess must be symmetric")
    n = hess.shape[0]
    grad = np.zeros(n) if grad is None else np.array(grad, dtype=float)
    return PointState(grad=grad, hess=hess, det=float(np.linalg.det(hess)),
                      cof=cofactor(hess), value=value)


def cofactor(hess: np.ndarray) -> np.ndarray:
    """Cofactor matrix ``U`` with ``U @ hess = det(hess) I``.

    Built from signed minors, so it is defined for singular matrices too.
    2x2 stacks use the closed form.
    """
    hess = np.asarray(hess, dtype=float)
    n = hess.shape[-1]
    if hess.shape[-2] != n:
        raise ValueError("cofactor needs square matrices")
    if n == 1:
        return np.ones_like(hess)
    if n == 2:
        out = np.empty_like(hess)
        out[..., 0, 0] = hess[..., 1, 1]
        out[..., 1, 1] = hess[..., 0, 0]
        out[..., 0, 1] = -hess[..., 1, 0]
        out[..., 1, 0] = -hess[..., 0, 1]
        return out
    out = np.empty_like(hess)
    idx = np.arange(n)
    for i in range(n):
        rows = idx[idx != i]
        for j in range(n):
            cols = idx[idx != j]
            minor = hess[..., rows[:, None], cols[None, :]]
            # adjugate is the transpose of the signed-minor matrix
            out[..., j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return out


def _esf_from_eigs(eigs: np.ndarray, k: int) -> np.ndarray:
    n = eigs.shape[-1]
    e = [np.ones(eigs.shape[:-1])] + [np.zeros(eigs.shape[:-1]) for _ in range(k)]
    for i in range(n):
        lam = eigs[..., i]
        for j in range(min(k, i + 1), 0, -1):
            e[j] = e[j] + lam * e[j - 1]
    return e[k]


def elementary_symmetric(hess: np.ndarray, k: int) -> np.ndarray:
    """``S_k`` of the eigenvalues of a symmetric matrix (stack).

    S_0 = 1, S_1 = trace, S_n = det.
    """
    hess = np.asarray(hess, dtype=float)
    n = hess.shape[-1]
    if not (0 <= k <= n) or int(k) != k:
        raise ValueError(f"k must be an integer in [0, {n}], got {k!r}")
    eigs = np.linalg.eigvalsh(hess)
    out = _esf_from_eigs(eigs, int(k))
    return float(out) if out.ndim == 0 else out


def newton_scale(lap, det, n):
    """``(Delta u)^(1/(n-1)) (det D^2u)^((n-2)/(n-1))``, the clamp denominator."""
    return np.power(lap, 1.0 / (n - 1)) * np.power(det, (n - 2) / (n - 1))


class RhsKind(str, enum.Enum):
    LAPLACIAN_SCALED = "LAPLACIAN_SCALED"
    P_LAPLACIAN = "P_LAPLACIAN"
    NEWTON = "NEWTON"
    CLAMPED = "CLAMPED"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class RhsModel:
    """Right-hand side ``F(x, u, Du, D^2u)`` of the fourth-order equation.

    Use the named constructors:

    * ``laplacian(f)``       ``f * Delta u``
    * ``p_laplacian(p, f)``  ``f * div(|Du|^(p-2) Du)``
    * ``newton(f, g, k)``    ``-(Delta u)^(1/(n-1)) det^((n-2)/(n-1)) f
      - S_k^(1/(k(n-1))) det^((n-2)/(n-1)) g``
    * ``clamped(inner, gamma)``  ``-(Delta u)^(1/(n-1)) det^((n-2)/(n-1)) f_gamma``
      with ``f_gamma = min(-gamma F_inner / that scale, 1)``
    * ``custom(func)``       ``func(x, u, Du, D^2u)`` evaluated on stacks

    ``f`` may be a constant or a callable of the point array ``(N, n)``.
    """

    kind: RhsKind
    p: float = 2.0
    f: Coefficient = 1.0
    g: float = 0.0
    k: int = 1
    gamma: float = 0.0
    inner: Optional["RhsModel"] = None
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        kind = RhsKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is RhsKind.P_LAPLACIAN and not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p!r}")
        if kind is RhsKind.NEWTON:
            if not callable(self.f) and not 0 <= self.f <= 1:
                raise ValueError("NEWTON requires 0 <= f <= 1")
            if not 0 <= self.g <= 1:
                raise ValueError("NEWTON requires 0 <= g <= 1")
            if int(self.k) != self.k or self.k < 1:
                raise ValueError("NEWTON requires an integer k >= 1")
        if kind is RhsKind.CLAMPED:
            if not self.gamma > 0:
                raise ValueError("CLAMPED requires gamma > 0")
            if self.inner is None:
                raise ValueError("CLAMPED needs a wrapped model")
        if kind is RhsKind.CUSTOM and self.func is None:
            raise ValueError("CUSTOM needs a callable")

    @classmethod
    def laplacian(cls, f: Coefficient = 1.0) -> "RhsModel":
        return cls(RhsKind.LAPLACIAN_SCALED, p=2.0, f=f)

    @classmethod
    def p_laplacian(cls, p: float, f: Coefficient = 1.0) -> "RhsModel":
        return cls(RhsKind.P_LAPLACIAN, p=p, f=f)

    @classmethod
    def newton(cls, f: Coefficient = 1.0, g: float = 1.0, k: int = 1) -> "RhsModel":
        return cls(RhsKind.NEWTON, f=f, g=g, k=k)

    @classmethod
    def clamped(cls, inner: "RhsModel", gamma: float) -> "RhsModel":
        return cls(RhsKind.CLAMPED, gamma=gamma, inner=inner)

    @classmethod
    def custom(cls, func: Callable) -> "RhsModel":
        return cls(RhsKind.CUSTOM, func=func)

    def coefficient(self, x: np.ndarray) -> np.ndarray:
        """The ``f`` coefficient at the points ``x`` (shape ``(N, n)``)."""
        x = np.atleast_2d(x)
        if callable(self.f):
            return np.broadcast_to(np.asarray(self.f(x), dtype=float), x.shape[:1])
        return np.full(x.shape[0], float(self.f))

    def f_sup(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.coefficient(x))))

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is RhsKind.CUSTOM:
            return out
        if self.kind is RhsKind.CLAMPED:
            out.update(gamma=self.gamma, inner=self.inner.to_dict())
            return out
        out["f"] = "callable" if callable(self.f) else float(self.f)
        if self.kind is RhsKind.P_LAPLACIAN:
            out["p"] = self.p
        if self.kind is RhsKind.NEWTON:
            out.update(g=self.g, k=self.k)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RhsModel":
        kind = RhsKind(data["kind"])
        if kind is RhsKind.CLAMPED:
            return cls.clamped(cls.from_dict(data["inner"]), data["gamma"])
        if kind is RhsKind.CUSTOM:
            raise ValueError("custom models cannot be rebuilt from a record")
        f = data.get("f", 1.0)
        if f == "callable":
            raise ValueError("callable coefficients cannot be rebuilt from a record")
        if kind is RhsKind.LAPLACIAN_SCALED:
            return cls.laplacian(f)
        if kind is RhsKind.P_LAPLACIAN:
            return cls.p_laplacian(data["p"], f)
        return cls.newton(f, data.get("g", 1.0), data.get("k", 1))


def _p_laplacian(p, grad, hess):
    norm = np.linalg.norm(grad, axis=-1)
    lap = np.trace(hess, axis1=-2, axis2=-1)
    quad = np.einsum("...i,...ij,...j->...", grad, hess, grad)
    singular = norm == 0
    regularized = singular & (p < 2)
    safe = np.where(singular, 1.0, norm)
    if p < 2:
        safe = np.where(singular, GRAD_FLOOR, safe)
        val = (p - 2) * safe ** (p - 4) * quad + safe ** (p - 2) * lap
    else:
        val = (p - 2) * safe ** (p - 4) * quad + safe ** (p - 2) * lap
        # |Du| = 0, p >= 2: the first term vanishes, the second is lap (p = 2) or 0
        val = np.where(singular, lap if p == 2 else 0.0, val)
    return val, regularized


def rhs_values(model: RhsModel, grad, hess, x, value=None):
    """Vectorized right-hand side on stacks of states.

    Parameters
    ----------
    grad : (N, n) array
    hess : (N, n, n) array
    x : (N, n) array of points
    value : (N,) array, optional
        u itself; only passed on to CUSTOM models.

    Returns
    -------
    values : (N,) array
    info : dict
        ``regularized`` (bool mask, singular p < 2 points), ``clamp_active``
        and ``f_gamma`` (CLAMPED models only).
    """
    grad = np.atleast_2d(np.asarray(grad, dtype=float))
    hess = np.asarray(hess, dtype=float)
    if hess.ndim == 2:
        hess = hess[None]
    x = np.atleast_2d(np.asarray(x, dtype=float))
    npts, n = grad.shape
    info = {"regularized": np.zeros(npts, dtype=bool)}
    kind = model.kind

    if kind is RhsKind.LAPLACIAN_SCALED:
        return model.coefficient(x) * np.trace(hess, axis1=-2, axis2=-1), info
    if kind is RhsKind.P_LAPLACIAN:
        val, reg = _p_laplacian(model.p, grad, hess)
        info["regularized"] = reg
        return model.coefficient(x) * val, info
    if kind is RhsKind.CUSTOM:
        return np.asarray(model.func(x, value, grad, hess), dtype=float).reshape(npts), info

    lap = np.trace(hess, axis1=-2, axis2=-1)
    det = np.linalg.det(hess)
    if kind is RhsKind.NEWTON:
        if not 1 <= model.k <= n - 1:
            raise ValueError(f"NEWTON needs 1 <= k <= n-1 = {n - 1}, got {model.k}")
        f = model.coefficient(x)
        if np.any((f < 0) | (f > 1)):
            raise ValueError("NEWTON requires 0 <= f <= 1 everywhere")
        sk = elementary_symmetric(hess, model.k)
        sk = np.atleast_1d(sk)
        dpow = np.power(det, (n - 2) / (n - 1))
        val = -np.power(lap, 1.0 / (n - 1)) * dpow * f \
            - np.power(sk, 1.0 / (model.k * (n - 1))) * dpow * model.g
        return val, info

    # CLAMPED
    inner_val, inner_info = rhs_values(model.inner, grad, hess, x, value)
    if np.any(lap <= 0) or np.any(det <= 0):
        raise ValueError("clamped right-hand side needs Delta u > 0 and det D^2u > 0")
    scale = newton_scale(lap, det, n)
    ratio = -model.gamma * inner_val / scale
    f_gamma = np.clip(ratio, 0.0, 1.0)
    info["regularized"] = inner_info["regularized"]
    info["clamp_active"] = ratio >= 1.0
    info["sign_violation"] = ratio < 0.0
    info["f_gamma"] = f_gamma
    return -scale * f_gamma, info


def rhs_evaluate(model: RhsModel, state: PointState, x) -> float:
    """Right-hand side at a single point.

    A singular p < 2 p-Laplacian (``Du = 0``) is evaluated with ``|Du|``
    floored at machine epsilon and a :class:`RegularizationWarning` is issued.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    val, info = rhs_values(model, state.grad[None], state.hess[None], x,
                           None if state.value is None else np.array([state.value]))
    if info["regularized"][0]:
        warnings.warn("p-Laplacian with p < 2 evaluated at Du = 0; |Du| was floored "
                      "at machine epsilon", RegularizationWarning, stacklevel=2)
    return float(val[0])


def rhs_clamped(model: RhsModel, state: PointState, x) -> tuple[float, bool]:
    """``(f_gamma, clamp_active)`` for a CLAMPED model at one point.

    ``f_gamma = min(-gamma F / ((Delta u)^(1/(n-1)) det^((n-2)/(n-1))), 1)``;
    the clamp is active when the unclamped ratio reaches 1.
    """
    if model.kind is not RhsKind.CLAMPED:
        raise ValueError("rhs_clamped needs a CLAMPED model")
    if state.laplacian <= 0 or state.det <= 0:
        raise ValueError("rhs_clamped needs Delta u > 0 and det D^2u > 0")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    _, info = rhs_values(model, state.grad[None], state.hess[None], x,
                         None if state.value is None else np.array([state.value]))
    return float(info["f_gamma"][0]), bool(info["clamp_active"][0])


def check_trace_inequalities(hess: np.ndarray, k: int, slack: float = -1e-12):
    """Check ``Delta u >= S_k^(1/k)`` and ``S_(n-1) >= (Delta u)^(1/(n-1)) det^((n-2)/(n-1))``.

    Both hold for every positive definite matrix; the relative slack of each
    side must be at least ``slack``. Works on stacks and then returns boolean
    arrays.

    Raises
    ------
    ValueError
        If any matrix is not positive definite, or k is outside [1, n-1].
    """
    hess = np.asarray(hess, dtype=float)
    n = hess.shape[-1]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    eigs = np.linalg.eigvalsh(hess)
    if np.any(eigs <= 0):
        raise ValueError("check_trace_inequalities needs positive definite input")
    lap = eigs.sum(axis=-1)
    sk = _esf_from_eigs(eigs, k)
    first = (lap - sk ** (1.0 / k)) / lap >= slack

    s_nm1 = _esf_from_eigs(eigs, n - 1)
    logdet = np.log(eigs).sum(axis=-1)
    rhs = np.exp(np.log(lap) / (n - 1) + logdet * (n - 2) / (n - 1))
    second = (s_nm1 - rhs) / np.maximum(s_nm1, rhs) >= slack
    return first, second
