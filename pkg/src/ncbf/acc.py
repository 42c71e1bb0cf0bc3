"""Adaptive cruise control case study.

State is (v, z): follower speed and gap to a lead car moving at constant
speed ``v_f``. The input is the wheel force ``u`` in newtons. Each control
step solves a two-variable QP over ``[u, delta]``: stay close to the force
that cancels resistance, and relax the speed-tracking CLF as little as
possible, subject to the force box, two speed-limit CBFs, one gap barrier
(NCBF or HOCBF baseline) and the relaxed CLF.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import barriers as bf
from .feasibility import PreconditionViolated, symmetrize_bounds, theorem_condition
from .linalg import norm2
from .qp import QpProblem, SolverConfig, Status, solve

log = logging.getLogger(__name__)


class Barrier(str, enum.Enum):
    NCBF = "ncbf"
    HOCBF = "hocbf"


@dataclass(frozen=True)
class AccParams:
    M: float = 1650.0
    f0: float = 0.1
    f1: float = 5.0
    f2: float = 0.25
    v_f: float = 13.89
    v_max: float = 55.0
    v_min: float = 0.0
    v_T: float = 24.0
    c_a: float = 0.4
    c_d: float = 0.4
    g: float = 9.81
    a0: float = 10.0
    dt: float = 0.1
    horizon: float = 50.0
    chi3: float = 10.0
    p: float = 1.0
    ncbf: bf.NcbfParams = field(default_factory=lambda: bf.NcbfParams(delta=0.09, r=0.01, d=(0.1, 0.1), K=0.2))
    hocbf_gains: tuple[float, float] = (0.2, 0.05)

    def __post_init__(self):
        for name in ("M", "f0", "f1", "f2", "v_f", "v_max", "v_T", "c_a", "c_d", "g", "a0",
                     "horizon", "chi3", "p"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.v_min < 0:
            raise ValueError("v_min must be nonnegative")
        if not (self.v_min <= self.v_f and self.v_T <= self.v_max):
            raise ValueError("need v_min <= v_f and v_T <= v_max")
        if not 0 < self.dt <= 1:
            raise ValueError("dt must lie in (0, 1]")
        if self.ncbf.d.shape != (2,):
            raise ValueError("ncbf.d must have two components")
        if not all(k > 0 for k in self.hocbf_gains):
            raise ValueError("hocbf gains must be positive")

    @property
    def u_max(self) -> float:
        return self.c_a * self.M * self.g

    @property
    def u_min(self) -> float:
        return -self.c_d * self.M * self.g

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def with_initial(self, **kw) -> "AccParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class AccState:
    v: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.z])


@dataclass
class TrajectoryRecord:
    t: float
    state: AccState
    u: float
    delta: float
    theta: float
    Theta: float
    V: float
    qp_status: Status
    qp_iters: int
    feasibility_margin: float = math.nan


# --- model ----------------------------------------------------------------


def resistance(v: float, prm: AccParams) -> float:
    v = float(v)
    sgn = math.copysign(1.0, v) if v != 0.0 else 0.0
    return prm.f0 * sgn + prm.f1 * v + prm.f2 * v * v


def dynamics(s: AccState, u: float, prm: AccParams) -> tuple[float, float]:
    return (u - resistance(s.v, prm)) / prm.M, prm.v_f - s.v


def system(prm: AccParams) -> bf.AffineSystem:
    def f(x):
        return np.array([-resistance(x[0], prm) / prm.M, prm.v_f - x[0]])

    def g(x):
        return np.array([[1.0 / prm.M], [0.0]])

    def f_jacobian(x):
        # d sgn/dv taken as 0
        return np.array([[-(prm.f1 + 2.0 * prm.f2 * x[0]) / prm.M, 0.0], [-1.0, 0.0]])

    return bf.AffineSystem(n=2, q=1, f=f, g=g, f_jacobian=f_jacobian)


def gap_constraint(prm: AccParams, relative_degree: int = 2) -> bf.SafetyFunction:
    """theta = z - a0 (relative degree 2 with respect to u)."""
    return bf.SafetyFunction(
        value=lambda x: x[1] - prm.a0,
        gradient=lambda x: np.array([0.0, 1.0]),
        relative_degree=relative_degree,
        hessian=lambda x: np.zeros((2, 2)),
    )


def speed_limits(prm: AccParams) -> tuple[bf.SafetyFunction, bf.SafetyFunction]:
    upper = bf.SafetyFunction(value=lambda x: prm.v_max - x[0], gradient=lambda x: np.array([-1.0, 0.0]))
    lower = bf.SafetyFunction(value=lambda x: x[0] - prm.v_min, gradient=lambda x: np.array([1.0, 0.0]))
    return upper, lower


def clf(prm: AccParams) -> bf.ClfParams:
    # V = (v - v_T)^2; the gap is not tracked
    return bf.ClfParams(Z=np.diag([1.0, 0.0]), chi3=prm.chi3, zeta_d=np.array([prm.v_T, 0.0]),
                        p=prm.p, chi1=1.0, chi2=1.0)


def control_bounds(prm: AccParams) -> bf.ControlBounds:
    return bf.ControlBounds(v_min=[prm.u_min], v_max=[prm.u_max])


def gap_value(s: AccState, prm: AccParams) -> float:
    return s.z - prm.a0


def barrier_value(s: AccState, prm: AccParams) -> float:
    return bf.ncbf_value(gap_value(s, prm), s.as_array(), prm.ncbf)


def lyapunov_value(s: AccState, prm: AccParams) -> float:
    return (s.v - prm.v_T) ** 2


# --- per-step QP ----------------------------------------------------------


@dataclass(frozen=True)
class AccModel:
    """The ACC plant and its constraint functions, built once per parameter set."""

    prm: AccParams
    sys: bf.AffineSystem
    gap: bf.SafetyFunction
    v_upper: bf.SafetyFunction
    v_lower: bf.SafetyFunction
    clf: bf.ClfParams
    bounds: bf.ControlBounds
    theorem_bounds: bf.ControlBounds
    input_rows: tuple[bf.ConstraintRow, ...]

    @classmethod
    def build(cls, prm: AccParams) -> "AccModel":
        upper, lower = speed_limits(prm)
        bounds = control_bounds(prm)
        # the feasibility theorem is stated for boxes symmetric about zero
        sym = bounds if np.array_equal(bounds.v_min, -bounds.v_max) else symmetrize_bounds(bounds)
        return cls(prm=prm, sys=system(prm), gap=gap_constraint(prm), v_upper=upper,
                   v_lower=lower, clf=clf(prm), bounds=bounds, theorem_bounds=sym,
                   input_rows=tuple(bf.input_bound_rows(bounds, 1)))


def constraint_rows(s: AccState, prm: AccParams, barrier: Barrier,
                    model: Optional[AccModel] = None) -> list[bf.ConstraintRow]:
    mdl = model or AccModel.build(prm)
    x = s.as_array()
    rows = list(mdl.input_rows)
    rows.append(bf.rd1_cbf_row(mdl.v_upper, mdl.sys, x, 1.0, "v_max"))
    rows.append(bf.rd1_cbf_row(mdl.v_lower, mdl.sys, x, 1.0, "v_min"))
    if Barrier(barrier) is Barrier.NCBF:
        rows.append(bf.ncbf_constraint_row(mdl.sys, mdl.gap, x, prm.ncbf))
    else:
        rows.append(bf.hocbf_constraint_row(mdl.sys, mdl.gap, x, prm.hocbf_gains))
    rows.append(bf.clf_constraint_row(mdl.sys, mdl.clf, x))
    return rows


def input_scale(prm: AccParams) -> np.ndarray:
    """Diagonal map from the scaled decision variable [u/(M g), delta] to [u, delta]."""
    return np.array([prm.M * prm.g, 1.0])


def assemble_qp(s: AccState, prm: AccParams, barrier: Barrier = Barrier.NCBF,
                scaled: bool = False, model: Optional[AccModel] = None) -> QpProblem:
    """Per-step QP in ``[u, delta]``; with ``scaled`` the first variable is u/(M g)."""
    A, theta = bf.stack_rows(constraint_rows(s, prm, barrier, model))
    P = np.diag([2.0 / prm.M**2, 2.0 * prm.p])
    G = np.array([-2.0 * resistance(s.v, prm) / prm.M**2, 0.0])
    if scaled:
        S = input_scale(prm)
        P = P * np.outer(S, S)
        G = G * S
        A = A * S
    return QpProblem(P=P, G=G, A=A, theta=theta)


# --- integration ----------------------------------------------------------


def step(s: AccState, u: float, prm: AccParams) -> AccState:
    """One explicit Euler step with the input held over the interval."""
    dv, dz = dynamics(s, u, prm)
    return AccState(s.v + prm.dt * dv, s.z + prm.dt * dz)


def step_rk4(s: AccState, u: float, prm: AccParams) -> AccState:
    """Classical RK4 with zero-order-hold input, for discretization studies."""
    h = prm.dt

    def f(v, z):
        return dynamics(AccState(v, z), u, prm)

    k1 = f(s.v, s.z)
    k2 = f(s.v + 0.5 * h * k1[0], s.z + 0.5 * h * k1[1])
    k3 = f(s.v + 0.5 * h * k2[0], s.z + 0.5 * h * k2[1])
    k4 = f(s.v + h * k3[0], s.z + h * k3[1])
    return AccState(s.v + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                    s.z + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))


def feasibility_margin(s: AccState, prm: AccParams, model: Optional[AccModel] = None) -> float:
    """Theorem margin at ``s``; NaN where Theta <= 0 or theta <= 0."""
    mdl = model or AccModel.build(prm)
    try:
        rep = theorem_condition(mdl.sys, mdl.gap, s.as_array(), prm.ncbf, mdl.theorem_bounds)
    except PreconditionViolated:
        return math.nan
    return rep.margin


def simulate(s0: AccState, prm: AccParams, barrier: Barrier = Barrier.NCBF,
             solver: SolverConfig = SolverConfig(), integrator: str = "euler",
             scaled: bool = False) -> list[TrajectoryRecord]:
    """Closed-loop run from ``s0`` over ``prm.horizon``; one record per step.

    A failed QP does not abort the run: the previous input is held for that
    step and the record carries the solver status.
    """
    barrier = Barrier(barrier)
    advance = {"euler": step, "rk4": step_rk4}[integrator]
    n = prm.n_steps
    if n > 10**6:
        raise ValueError("horizon / dt exceeds 10^6 steps")
    scale = input_scale(prm) if scaled else np.ones(2)
    mdl = AccModel.build(prm)
    records = []
    s = s0
    u_prev, delta_prev = 0.0, 0.0
    warned = False
    for k in range(n + 1):
        if not (math.isfinite(s.v) and math.isfinite(s.z)):
            break
        sol = solve(assemble_qp(s, prm, barrier, scaled, mdl), solver)
        if sol.status is Status.OPTIMAL:
            u, delta = (sol.v_star * scale).tolist()
        else:
            u, delta = u_prev, delta_prev
        records.append(TrajectoryRecord(
            t=k * prm.dt, state=s, u=u, delta=delta,
            theta=gap_value(s, prm), Theta=barrier_value(s, prm), V=lyapunov_value(s, prm),
            qp_status=sol.status, qp_iters=sol.iterations,
            feasibility_margin=feasibility_margin(s, prm, mdl) if barrier is Barrier.NCBF else math.nan,
        ))
        if not warned and records[-1].theta < 0.5 * prm.ncbf.delta * (
                norm2(s.as_array() + prm.ncbf.d) + prm.ncbf.r):
            # L_g Theta vanishes as theta -> 0, so the barrier loses authority here
            log.warning("t=%g: gap margin %.4g is below half the barrier offset", records[-1].t,
                        records[-1].theta)
            warned = True
        u_prev, delta_prev = u, delta
        s = advance(s, u, prm)
    return records


def failed_steps(records: Sequence[TrajectoryRecord]) -> list[float]:
    return [r.t for r in records if r.qp_status is not Status.OPTIMAL]


# --- CSV ------------------------------------------------------------------

TRAJECTORY_CSV_HEADER = ("t", "v", "z", "u", "delta", "theta", "Theta", "V",
                         "qp_status", "qp_iters", "feas_margin")


def fmt(x: float) -> str:
    # shortest repr round-trips exactly
    return repr(float(x))


def write_trajectory_csv(path, records: Sequence[TrajectoryRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_CSV_HEADER)
        for r in records:
            w.writerow([fmt(r.t), fmt(r.state.v), fmt(r.state.z), fmt(r.u), fmt(r.delta),
                        fmt(r.theta), fmt(r.Theta), fmt(r.V), r.qp_status.value, r.qp_iters,
                        fmt(r.feasibility_margin)])


def read_trajectory_csv(path) -> list[TrajectoryRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_CSV_HEADER:
            raise ValueError(f"{path}: unexpected trajectory header {reader.fieldnames}")
        return [
            TrajectoryRecord(
                t=float(row["t"]), state=AccState(float(row["v"]), float(row["z"])),
                u=float(row["u"]), delta=float(row["delta"]), theta=float(row["theta"]),
                Theta=float(row["Theta"]), V=float(row["V"]), qp_status=Status(row["qp_status"]),
                qp_iters=int(row["qp_iters"]), feasibility_margin=float(row["feas_margin"]),
            )
            for row in reader
        ]


def trajectory_filename(barrier: Barrier, v0: float) -> str:
    return f"{Barrier(barrier).value}_v0_{v0:g}.csv"
