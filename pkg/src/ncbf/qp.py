"""Predictor-corrector interior-point solver for inequality-constrained QPs.

Solves

    min  1/2 v'Pv + G'v   s.t.  A v <= theta

with slacks ``s = theta - A v`` and multipliers ``L``. Each iteration takes
an affine-scaling (predictor) Newton step, picks the centering parameter
from how far that step reduces complementarity, then solves a corrected
system that adds the second-order term dL_aff * ds_aff. Both solves share
one LU factorization of the unreduced (n + 2m) Newton matrix.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .linalg import lu_factor_inplace, lu_substitute

REGULARIZATION = 1e-10
MIN_STEP = 1e-12


class SingularKkt(ArithmeticError):
    """The Newton system could not be factored."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


_STATUS_CODES = (Status.OPTIMAL, Status.MAX_ITERATIONS, Status.NUMERICAL_FAILURE)


@dataclass(frozen=True)
class QpProblem:
    """One QP instance. ``A`` holds one constraint per row."""

    P: np.ndarray
    G: np.ndarray
    A: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float, ndmin=2)
        G = np.array(self.G, dtype=float, ndmin=1)
        A = np.array(self.A, dtype=float, ndmin=2)
        theta = np.array(self.theta, dtype=float, ndmin=1)
        n = G.shape[0]
        if G.ndim != 1 or theta.ndim != 1:
            raise ValueError("G and theta must be vectors")
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected {(n, n)}")
        if A.shape != (theta.shape[0], n) or theta.shape[0] == 0:
            raise ValueError(f"A has shape {A.shape}, expected ({theta.shape[0]}, {n}) with m >= 1")
        for name, arr in (("P", P), ("G", G), ("A", A), ("theta", theta)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} has non-finite entries")
        off = P.copy()
        np.fill_diagonal(off, 0.0)
        if off.any():
            if np.abs(P - P.T).max() > 1e-12 * max(1.0, np.abs(P).max()):
                raise ValueError("P is not symmetric")
            try:
                np.linalg.cholesky(P)
            except np.linalg.LinAlgError:
                raise ValueError("P is not positive definite") from None
        elif not (P.diagonal() > 0).all():
            raise ValueError("P is not positive definite")
        for name, arr in (("P", P), ("G", G), ("A", A), ("theta", theta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.P @ v + self.G @ v)

    def to_json(self) -> dict:
        return {
            "P": self.P.tolist(),
            "G": self.G.tolist(),
            "A": self.A.tolist(),
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QpProblem":
        missing = {"P", "G", "A", "theta"} - set(obj)
        if missing:
            raise ValueError(f"QP JSON is missing keys: {sorted(missing)}")
        return cls(P=obj["P"], G=obj["G"], A=obj["A"], theta=obj["theta"])

    @classmethod
    def load(cls, path: str | Path) -> "QpProblem":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class IpmIterate:
    v: np.ndarray
    s: np.ndarray
    L: np.ndarray
    sigma: float = 0.0

    @property
    def mu(self) -> float:
        return float(self.s @ self.L) / self.s.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    tol_mu: float = 1e-11
    tol_residual: float = 1e-8
    max_iter: int = 100
    tau: float = 0.995
    init_margin: float = 1.0

    def __post_init__(self):
        if not (self.tol_mu > 0 and self.tol_residual > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not self.init_margin > 0:
            raise ValueError("init_margin must be positive")


@dataclass
class QpSolution:
    v_star: np.ndarray
    L_star: np.ndarray
    s_star: np.ndarray
    iterations: int
    status: Status
    final_mu: float
    kkt_residual_norm: float
    mu_history: list[float] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# --- jitted kernels -------------------------------------------------------


@njit(cache=True)
def _residual(P, G, A, theta, v, s, L, sigma_mu):
    n = v.shape[0]
    m = s.shape[0]
    r = np.empty(n + 2 * m)
    r[:n] = P @ v + G + A.T @ L
    r[n:n + m] = A @ v + s - theta
    r[n + m:] = L * s - sigma_mu
    return r


@njit(cache=True)
def _newton_matrix(P, A, s, L):
    n = P.shape[0]
    m = s.shape[0]
    K = np.zeros((n + 2 * m, n + 2 * m))
    K[:n, :n] = P
    K[:n, n + m:] = A.T
    K[n:n + m, :n] = A
    for i in range(m):
        K[n + i, n + i] = 1.0
        K[n + m + i, n + i] = L[i]
        K[n + m + i, n + m + i] = s[i]
    return K


@njit(cache=True)
def _equilibrate(K, scale):
    for i in range(K.shape[0]):
        big = 0.0
        for j in range(K.shape[1]):
            if abs(K[i, j]) > big:
                big = abs(K[i, j])
        scale[i] = 1.0 / big if big > 0.0 else 1.0
        for j in range(K.shape[1]):
            K[i, j] *= scale[i]


@njit(cache=True)
def _factor(P, A, s, L, piv, scale):
    """Row-equilibrate and factor the Newton matrix.

    Retries once with a regularized diagonal. Right-hand sides must be
    multiplied by ``scale`` before substitution.
    """
    K = _newton_matrix(P, A, s, L)
    _equilibrate(K, scale)
    if lu_factor_inplace(K, piv):
        return K, True
    K = _newton_matrix(P, A, s, L)
    for i in range(K.shape[0]):
        K[i, i] += REGULARIZATION
    _equilibrate(K, scale)
    return K, lu_factor_inplace(K, piv)


@njit(cache=True)
def _max_step(x, dx, tau):
    beta = 1.0
    for i in range(x.shape[0]):
        if dx[i] < 0.0:
            b = -tau * x[i] / dx[i]
            if b < beta:
                beta = b
    return beta


@njit(cache=True)
def _inf_norm(r):
    out = 0.0
    for x in r:
        if abs(x) > out:
            out = abs(x)
    return out


@njit(cache=True)
def _ipm(P, G, A, theta, v, s, L, tol_mu, tol_res, max_iter, tau, mu_hist):
    """Run the predictor-corrector loop in place on (v, s, L).

    Returns (status code, iterations, final mu, final residual norm); status
    0 = optimal, 1 = iteration limit, 2 = numerical failure.
    """
    n = v.shape[0]
    m = s.shape[0]
    piv = np.empty(n + 2 * m, dtype=np.int64)
    scale = np.empty(n + 2 * m)
    for k in range(max_iter + 1):
        mu = (s @ L) / m
        mu_hist[k] = mu
        r = _residual(P, G, A, theta, v, s, L, 0.0)
        res = _inf_norm(r)
        if mu < tol_mu and res < tol_res:
            return 0, k, mu, res
        if k == max_iter:
            return 1, k, mu, res
        lu, ok = _factor(P, A, s, L, piv, scale)
        if not ok:
            return 2, k, mu, res
        # predictor: sigma = 0
        d_aff = lu_substitute(lu, piv, -r * scale)
        ds_aff = d_aff[n:n + m]
        dL_aff = d_aff[n + m:]
        b_aff = min(_max_step(s, ds_aff, 1.0), _max_step(L, dL_aff, 1.0))
        mu_aff = ((s + b_aff * ds_aff) @ (L + b_aff * dL_aff)) / m
        sigma = (mu_aff / mu) ** 3
        if sigma > 1.0:
            sigma = 1.0
        # corrector
        rc = r.copy()
        rc[n + m:] += dL_aff * ds_aff - sigma * mu
        d = lu_substitute(lu, piv, -rc * scale)
        dv = d[:n]
        ds = d[n:n + m]
        dL = d[n + m:]
        beta = min(_max_step(s, ds, tau), _max_step(L, dL, tau))
        if not beta >= MIN_STEP:
            return 2, k, mu, res
        v += beta * dv
        s += beta * ds
        L += beta * dL
        for i in range(m):
            if not (s[i] > 0.0 and L[i] > 0.0):
                return 2, k + 1, (s @ L) / m, res
    return 1, max_iter, (s @ L) / m, res


# --- public operations ----------------------------------------------------


def initial_iterate(p: QpProblem, cfg: SolverConfig = SolverConfig()) -> IpmIterate:
    v = np.zeros(p.n)
    s = np.maximum(cfg.init_margin, p.theta - p.A @ v)
    L = np.full(p.m, cfg.init_margin)
    return IpmIterate(v=v, s=s, L=L)


def kkt_residual(p: QpProblem, it: IpmIterate, sigma_mu: float) -> np.ndarray:
    """Stacked residual [Pv + G + A'L; Av + s - theta; L*s - sigma_mu]."""
    return _residual(p.P, p.G, p.A, p.theta,
                     np.asarray(it.v, float), np.asarray(it.s, float),
                     np.asarray(it.L, float), float(sigma_mu))


def newton_direction(p: QpProblem, it: IpmIterate, sigma: float, mu: float,
                     corrector: tuple[np.ndarray, np.ndarray] | None = None):
    """Newton step (dv, ds, dL) for the perturbed KKT system.

    ``corrector`` is ``(ds_aff, dL_aff)``; when given, their product is added
    to the complementarity block of the right-hand side.
    """
    s = np.asarray(it.s, float)
    L = np.asarray(it.L, float)
    if np.any(s <= 0) or np.any(L <= 0):
        raise ValueError("iterate must have s > 0 and L > 0")
    r = kkt_residual(p, it, sigma * mu)
    if corrector is not None:
        ds_aff, dL_aff = corrector
        r[p.n + p.m:] += np.asarray(dL_aff, float) * np.asarray(ds_aff, float)
    piv = np.empty(p.n + 2 * p.m, dtype=np.int64)
    scale = np.empty(p.n + 2 * p.m)
    lu, ok = _factor(p.P, p.A, s, L, piv, scale)
    if not ok:
        raise SingularKkt("Newton matrix is singular even after regularization")
    d = lu_substitute(lu, piv, -r * scale)
    n, m = p.n, p.m
    return d[:n], d[n:n + m], d[n + m:]


def step_to_boundary(s, L, ds, dL, tau: float) -> tuple[float, float]:
    """Largest steps in (0, 1] keeping s and L at least (1 - tau) times their value."""
    return (_max_step(np.asarray(s, float), np.asarray(ds, float), float(tau)),
            _max_step(np.asarray(L, float), np.asarray(dL, float), float(tau)))


def solve(p: QpProblem, cfg: SolverConfig = SolverConfig()) -> QpSolution:
    it = initial_iterate(p, cfg)
    v, s, L = it.v, it.s, it.L
    hist = np.zeros(cfg.max_iter + 1)
    code, iters, mu, res = _ipm(p.P, p.G, p.A, p.theta, v, s, L,
                                cfg.tol_mu, cfg.tol_residual, cfg.max_iter, cfg.tau, hist)
    return QpSolution(
        v_star=v, L_star=L, s_star=s, iterations=int(iters),
        status=_STATUS_CODES[code], final_mu=float(mu),
        kkt_residual_norm=float(res), mu_history=hist[:iters + 1].tolist(),
    )
