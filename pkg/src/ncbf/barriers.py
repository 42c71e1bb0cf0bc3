"""Barrier and Lyapunov constraint rows for control-affine systems.

Every builder returns a ``ConstraintRow`` over the stacked decision
variable ``[u; delta]`` (q inputs followed by the CLF relaxation), in the
form ``a @ [u; delta] <= b`` expected by the QP solver.

The nonlinear barrier is

    Theta(x) = exp(theta(x) / (|x + d| + r) - Delta) - 1

which keeps relative degree one with respect to the input even when the
raw constraint ``theta`` has a higher relative degree, as long as
``(x + d)' g(x)`` does not vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import norm2

Array = np.ndarray


class DegenerateState(ValueError):
    """|x + d| is too small for the barrier gradient to be defined."""


class RelativeDegreeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AffineSystem:
    """dx/dt = f(x) + g(x) u, with ``n`` states and ``q`` inputs.

    ``f_jacobian`` is only needed by the second-order (HOCBF) baseline.
    """

    n: int
    q: int
    f: Callable[[Array], Array]
    g: Callable[[Array], Array]
    f_jacobian: Optional[Callable[[Array], Array]] = None

    def drift(self, x) -> Array:
        return np.asarray(self.f(x), dtype=float).reshape(self.n)

    def input_matrix(self, x) -> Array:
        return np.asarray(self.g(x), dtype=float).reshape(self.n, self.q)

    def xdot(self, x, u) -> Array:
        return self.drift(x) + self.input_matrix(x) @ np.atleast_1d(u)


@dataclass(frozen=True)
class SafetyFunction:
    """State constraint theta(x) >= 0 with analytic derivatives."""

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    relative_degree: int = 1
    hessian: Optional[Callable[[Array], Array]] = None

    def lie(self, sys: AffineSystem, x) -> tuple[float, Array]:
        """(L_f theta, L_g theta) at ``x``."""
        grad = np.asarray(self.gradient(x), dtype=float)
        return float(grad @ sys.drift(x)), grad @ sys.input_matrix(x)


@dataclass(frozen=True, eq=False)
class NcbfParams:
    delta: float
    r: float
    d: Array
    K: float

    def __post_init__(self):
        if not (self.delta > 0 and self.r > 0 and self.K > 0):
            raise ValueError("delta, r and K must be strictly positive")
        d = np.array(self.d, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    def __eq__(self, other):
        if not isinstance(other, NcbfParams):
            return NotImplemented
        return ((self.delta, self.r, self.K) == (other.delta, other.r, other.K)
                and np.array_equal(self.d, other.d))

    def __hash__(self):
        return hash((self.delta, self.r, self.K, self.d.tobytes()))


@dataclass(frozen=True)
class ClfParams:
    """V(x) = (x - x_d)' Z (x - x_d) with decay rate chi3 and slack weight p.

    Z may be singular when V tracks only some coordinates; chi1/chi2 then
    bound V on the tracked coordinates.
    """

    Z: Array
    chi3: float
    zeta_d: Array
    p: float = 1.0
    chi1: Optional[float] = None
    chi2: Optional[float] = None

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != Z.shape[1] or not np.allclose(Z, Z.T):
            raise ValueError("Z must be a symmetric square matrix")
        eig = np.linalg.eigvalsh(Z)
        if eig[0] < -1e-12 or eig[-1] <= 0:
            raise ValueError("Z must be positive semidefinite and nonzero")
        if not (self.chi3 > 0 and self.p > 0):
            raise ValueError("chi3 and p must be positive")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "zeta_d", np.asarray(self.zeta_d, dtype=float))
        if self.chi1 is None:
            object.__setattr__(self, "chi1", float(eig[0]))
        if self.chi2 is None:
            object.__setattr__(self, "chi2", float(eig[-1]))
        if self.chi1 > self.chi2:
            raise ValueError("chi1 must not exceed chi2")

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.Z)[0])

    @property
    def lambda_max(self) -> float:
        return float(np.linalg.eigvalsh(self.Z)[-1])

    def value(self, x) -> float:
        e = np.asarray(x, dtype=float) - self.zeta_d
        return float(e @ self.Z @ e)

    def gradient(self, x) -> Array:
        e = np.asarray(x, dtype=float) - self.zeta_d
        return 2.0 * self.Z @ e


@dataclass(frozen=True)
class ControlBounds:
    v_min: Array
    v_max: Array

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.v_min, dtype=float))
        hi = np.atleast_1d(np.asarray(self.v_max, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("v_min and v_max must have the same length")
        if np.any(lo > hi):
            raise ValueError("v_min must not exceed v_max")
        object.__setattr__(self, "v_min", lo)
        object.__setattr__(self, "v_max", hi)


@dataclass(frozen=True)
class ConstraintRow:
    a: Array
    b: float
    label: str = ""

    def slack(self, w) -> float:
        """b - a @ w; nonnegative when ``w`` satisfies the row."""
        return float(self.b - self.a @ np.asarray(w, dtype=float))


def _row(coef: Array, last: float) -> Array:
    """[coef, last]: the input coefficients followed by the slack coefficient."""
    a = np.empty(coef.shape[0] + 1)
    a[:-1] = coef
    a[-1] = last
    return a


def stack_rows(rows: list[ConstraintRow]) -> tuple[Array, Array]:
    return np.vstack([r.a for r in rows]), np.array([r.b for r in rows])


# --- nonlinear barrier ----------------------------------------------------


def ncbf_value(theta_val: float, zeta, prm: NcbfParams) -> float:
    radius = norm2(np.asarray(zeta, dtype=float) + prm.d) + prm.r
    try:
        return math.expm1(theta_val / radius - prm.delta)
    except OverflowError:
        return math.inf


def ncbf_gradient(sys: AffineSystem, sf: SafetyFunction, zeta, prm: NcbfParams) -> Array:
    """Analytic gradient of Theta with respect to the state."""
    x = np.asarray(zeta, dtype=float)
    shifted = x + prm.d
    norm = norm2(shifted)
    if norm < 1e-12:
        raise DegenerateState(f"|x + d| = {norm:g} is too small")
    radius = norm + prm.r
    th = float(sf.value(x))
    Theta = math.expm1(th / radius - prm.delta)
    grad_theta = np.asarray(sf.gradient(x), dtype=float)
    return (Theta + 1.0) / radius**2 * (radius * grad_theta - th * shifted / norm)


def ncbf_lie(sys: AffineSystem, sf: SafetyFunction, zeta, prm: NcbfParams):
    """(Theta, L_f Theta, L_g Theta) at ``zeta``."""
    x = np.asarray(zeta, dtype=float)
    grad = ncbf_gradient(sys, sf, x, prm)
    Theta = ncbf_value(float(sf.value(x)), x, prm)
    return Theta, float(grad @ sys.drift(x)), grad @ sys.input_matrix(x)


def ncbf_constraint_row(sys: AffineSystem, sf: SafetyFunction, zeta, prm: NcbfParams) -> ConstraintRow:
    # L_f + L_g u + K Theta >= 0  ->  -L_g u <= L_f + K Theta; delta is not allowed to relax it
    Theta, lf, lg = ncbf_lie(sys, sf, zeta, prm)
    return ConstraintRow(_row(-lg, 0.0), lf + prm.K * Theta, "ncbf")


# --- CLF, plain CBF, HOCBF baseline ---------------------------------------


def clf_constraint_row(sys: AffineSystem, clf: ClfParams, zeta) -> ConstraintRow:
    x = np.asarray(zeta, dtype=float)
    grad = clf.gradient(x)
    lf = float(grad @ sys.drift(x))
    lg = grad @ sys.input_matrix(x)
    return ConstraintRow(_row(lg, -1.0), -lf - clf.chi3 * clf.value(x), "clf")


def rd1_cbf_row(sf: SafetyFunction, sys: AffineSystem, zeta, alpha_gain: float,
                label: str = "cbf") -> ConstraintRow:
    """Row for L_f theta + L_g theta u + alpha_gain * theta >= 0."""
    x = np.asarray(zeta, dtype=float)
    lf, lg = sf.lie(sys, x)
    if sf.relative_degree != 1 or not lg.any():
        raise RelativeDegreeMismatch(
            f"{label}: input does not appear in the first derivative at this state")
    return ConstraintRow(_row(-lg, 0.0), lf + alpha_gain * float(sf.value(x)), label)


def hocbf_constraint_row(sys: AffineSystem, sf: SafetyFunction, zeta,
                         gains: tuple[float, float] = (0.1, 0.1)) -> ConstraintRow:
    """Second-order barrier: psi1 = d/dt theta + k1 theta, require d/dt psi1 + k2 psi1 >= 0.

    With L_g theta = 0 this expands to
    L_f^2 theta + L_g L_f theta u + (k1 + k2) L_f theta + k1 k2 theta >= 0.
    """
    k1, k2 = gains
    if not (k1 > 0 and k2 > 0):
        raise ValueError("HOCBF gains must be positive")
    if sf.relative_degree != 2:
        raise RelativeDegreeMismatch("HOCBF row needs a relative-degree-2 safety function")
    if sf.hessian is None or sys.f_jacobian is None:
        raise ValueError("HOCBF row needs the safety-function Hessian and the drift Jacobian")
    x = np.asarray(zeta, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DegenerateState("non-finite state")
    fx = sys.drift(x)
    grad = np.asarray(sf.gradient(x), dtype=float)
    grad_lf = np.asarray(sf.hessian(x), dtype=float) @ fx + np.asarray(sys.f_jacobian(x), dtype=float).T @ grad
    lf = float(grad @ fx)
    lf2 = float(grad_lf @ fx)
    lglf = grad_lf @ sys.input_matrix(x)
    th = float(sf.value(x))
    return ConstraintRow(_row(-lglf, 0.0), lf2 + (k1 + k2) * lf + k1 * k2 * th, "hocbf")


def input_bound_rows(bounds: ControlBounds, q: int) -> list[ConstraintRow]:
    if bounds.v_min.shape != (q,):
        raise ValueError(f"bounds have {bounds.v_min.shape[0]} components, expected {q}")
    rows = []
    for j in range(q):
        e = np.zeros(q + 1)
        e[j] = 1.0
        rows.append(ConstraintRow(e, float(bounds.v_max[j]), f"u{j}_max"))
        rows.append(ConstraintRow(-e, -float(bounds.v_min[j]), f"u{j}_min"))
    return rows
