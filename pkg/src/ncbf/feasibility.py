"""Pointwise feasibility diagnostics for the NCBF-constrained QP.

The barrier row and the input box are compatible at a state exactly when

    c * [ |G_d| u_min + (x + d)'f - (|x+d| + r) |x+d| L_f theta / theta ] <= K Theta

with ``c = (Theta + 1) theta / ((|x+d| + r)^2 |x+d|)`` and
``G_d = (x + d)' g(x)``. ``y_function`` is the same bracket rescaled by
``1 / Theta``, so ``lhs == Y * Theta * (Theta + 1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .barriers import AffineSystem, ControlBounds, NcbfParams, SafetyFunction, ncbf_value
from .linalg import norm2


class PreconditionViolated(ValueError):
    pass


@dataclass(frozen=True)
class FeasibilityReport:
    gd: np.ndarray
    lhs: float
    alpha_theta: float
    satisfied: bool
    y_value: float
    margin: float


@dataclass(frozen=True)
class TrackingBoundReport:
    empirical_M: float
    chi3: float
    v0: float
    epsilon: float
    violated_at: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.violated_at is None


FEASIBILITY_CSV_HEADER = ("t", "Theta", "theta", "lhs", "alphaTheta", "margin", "satisfied", "Y")


def gd(sys: AffineSystem, zeta, d) -> np.ndarray:
    x = np.asarray(zeta, dtype=float)
    return (x + np.asarray(d, dtype=float)) @ sys.input_matrix(x)


def _terms(sys, sf, zeta, prm, bounds):
    x = np.asarray(zeta, dtype=float)
    shifted = x + prm.d
    norm = norm2(shifted)
    radius = norm + prm.r
    th = float(sf.value(x))
    Theta = ncbf_value(th, x, prm)
    if not (Theta > 0 and th > 0):
        raise PreconditionViolated(f"need Theta > 0 and theta > 0, got Theta={Theta:g}, theta={th:g}")
    g_d = shifted @ sys.input_matrix(x)
    lf_theta, _ = sf.lie(sys, x)
    head = float(np.abs(g_d) @ bounds.v_min) + float(shifted @ sys.drift(x))
    return g_d, Theta, th, norm, radius, head, lf_theta


def theorem_condition(sys: AffineSystem, sf: SafetyFunction, zeta, prm: NcbfParams,
                      bounds: ControlBounds) -> FeasibilityReport:
    g_d, Theta, th, norm, radius, head, lf_theta = _terms(sys, sf, zeta, prm, bounds)
    coef = (Theta + 1.0) * th / (radius**2 * norm)
    lhs = coef * (head - radius * norm * lf_theta / th)
    alpha = prm.K * Theta
    y = (head * th - radius * norm * lf_theta) / (Theta * radius**2 * norm)
    return FeasibilityReport(gd=g_d, lhs=lhs, alpha_theta=alpha, satisfied=bool(lhs <= alpha),
                             y_value=y, margin=alpha - lhs)


def y_function(sys: AffineSystem, sf: SafetyFunction, zeta, prm: NcbfParams,
               bounds: ControlBounds) -> float:
    _, Theta, th, norm, radius, head, lf_theta = _terms(sys, sf, zeta, prm, bounds)
    return (head * th - radius * norm * lf_theta) / (Theta * radius**2 * norm)


def symmetrize_bounds(bounds: ControlBounds) -> ControlBounds:
    """Shrink an asymmetric box around zero to the largest symmetric one inside it."""
    lo, hi = bounds.v_min, bounds.v_max
    if np.any(lo > 0) or np.any(hi < 0):
        raise PreconditionViolated("every input range must contain 0")
    lim = np.minimum(np.abs(lo), hi)
    return ControlBounds(-lim, lim.copy())


def tracking_bound_check(traj: Iterable[tuple[float, float]], chi3: float,
                         lambda_min: float) -> TrackingBoundReport:
    """A-posteriori comparison-lemma certificate for a sampled CLF trace.

    The rate bound M is the largest forward-difference value of
    dV/dt + chi3 V over the samples (never below zero).
    """
    data = np.asarray(list(traj), dtype=float)
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != 2:
        raise ValueError("trajectory must be a nonempty sequence of (t, V) pairs")
    if np.any(data[:, 1] < 0):
        raise ValueError("V must be nonnegative")
    if not (chi3 > 0 and lambda_min > 0):
        raise ValueError("chi3 and lambda_min must be positive")
    t, V = data[:, 0], data[:, 1]
    if len(t) > 1:
        vdot = np.diff(V) / np.diff(t)
        M = max(0.0, float(np.max(vdot + chi3 * V[:-1])))
    else:
        M = 0.0
    V0 = float(V[0])
    floor = M / chi3
    bound = floor + (V0 - floor) * np.exp(-chi3 * (t - t[0]))
    tol = 1e-6 + 1e-3 * V0
    bad = np.nonzero(V > bound + tol)[0]
    eps = max(math.sqrt(M / (lambda_min * chi3)), math.sqrt(V0 / lambda_min))
    return TrackingBoundReport(empirical_M=M, chi3=chi3, v0=V0, epsilon=eps,
                               violated_at=float(t[bad[0]]) if bad.size else None)


def write_feasibility_csv(path, rows: Sequence[dict]) -> None:
    """Rows are dicts keyed by ``FEASIBILITY_CSV_HEADER``; missing values become NaN."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEASIBILITY_CSV_HEADER)
        for row in rows:
            out = []
            for key in FEASIBILITY_CSV_HEADER:
                val = row.get(key, float("nan"))
                if key == "satisfied":
                    out.append(str(int(bool(val))))
                else:
                    out.append(repr(float(val)))
            w.writerow(out)
