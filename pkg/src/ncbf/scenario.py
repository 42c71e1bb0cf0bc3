"""Scenario configuration, initial-speed sweeps and NCBF/HOCBF comparison."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import acc
from .acc import AccParams, AccState, Barrier, TrajectoryRecord
from .barriers import NcbfParams
from .feasibility import (PreconditionViolated, theorem_condition, tracking_bound_check,
                          write_feasibility_csv)
from .qp import SolverConfig, Status

SAFETY_TOL = 1e-3
SETTLE_BAND = 0.1


class SolverOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tol_mu: float = Field(1e-11, gt=0)
    tol_residual: float = Field(1e-8, gt=0)
    max_iter: int = Field(100, ge=1)
    tau: float = Field(0.995, gt=0, lt=1)
    init_margin: float = Field(1.0, gt=0)


class ScenarioConfig(BaseModel):
    """Every parameter of a run; defaults reproduce the published ACC scenario."""

    model_config = ConfigDict(extra="forbid")

    M: float = Field(1650.0, gt=0)
    f0: float = Field(0.1, gt=0)
    f1: float = Field(5.0, gt=0)
    f2: float = Field(0.25, gt=0)
    v_f: float = Field(13.89, gt=0)
    v_max: float = Field(55.0, gt=0)
    v_min: float = Field(0.0, ge=0)
    v_T: float = Field(24.0, gt=0)
    c_a: float = Field(0.4, gt=0)
    c_d: float = Field(0.4, gt=0)
    g: float = Field(9.81, gt=0)
    a0: float = Field(10.0, gt=0)
    dt: float = Field(0.1, gt=0, le=1)
    horizon: float = Field(50.0, gt=0)
    chi3: float = Field(10.0, gt=0)
    p: float = Field(1.0, gt=0)
    Delta: float = Field(0.09, gt=0)
    K: float = Field(0.2, gt=0)
    r: float = Field(0.01, gt=0)
    d: tuple[float, float] = (0.1, 0.1)
    hocbf_gains: tuple[float, float] = (0.2, 0.05)
    v0_list: list[float] = Field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0], min_length=1)
    z0: float = Field(100.0, gt=0)
    output_dir: str = "out"
    barrier: Literal["ncbf", "hocbf", "both"] = "ncbf"
    solver: SolverOverrides = Field(default_factory=SolverOverrides)

    @field_validator("hocbf_gains")
    @classmethod
    def _positive_gains(cls, v):
        if not all(k > 0 for k in v):
            raise ValueError("HOCBF gains must be positive")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.v_min > self.v_f:
            raise ValueError("v_min must not exceed v_f")
        if self.v_T > self.v_max:
            raise ValueError("v_T must not exceed v_max")
        if self.horizon / self.dt > 1e6:
            raise ValueError("horizon / dt exceeds 10^6 steps")
        for v0 in self.v0_list:
            if not self.v_min <= v0 <= self.v_max:
                raise ValueError(f"v0_list entry {v0} lies outside [v_min, v_max]")
        return self

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.model_validate_json(Path(path).read_text())

    def acc_params(self) -> AccParams:
        return AccParams(
            M=self.M, f0=self.f0, f1=self.f1, f2=self.f2, v_f=self.v_f, v_max=self.v_max,
            v_min=self.v_min, v_T=self.v_T, c_a=self.c_a, c_d=self.c_d, g=self.g, a0=self.a0,
            dt=self.dt, horizon=self.horizon, chi3=self.chi3, p=self.p,
            ncbf=NcbfParams(delta=self.Delta, r=self.r, d=self.d, K=self.K),
            hocbf_gains=self.hocbf_gains,
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver.model_dump())

    def barriers(self) -> list[Barrier]:
        return [Barrier.NCBF, Barrier.HOCBF] if self.barrier == "both" else [Barrier(self.barrier)]


# --- sweeps ---------------------------------------------------------------


@dataclass
class Run:
    barrier: Barrier
    v0: float
    records: list[TrajectoryRecord]

    @property
    def failed(self) -> bool:
        return any(r.qp_status is not Status.OPTIMAL for r in self.records)


def _simulate_one(args) -> Run:
    cfg, barrier, v0 = args
    recs = acc.simulate(AccState(v0, cfg.z0), cfg.acc_params(), barrier, cfg.solver_config())
    return Run(barrier, v0, recs)


def run_sweep(cfg: ScenarioConfig, barriers: Optional[Sequence[Barrier]] = None,
              jobs: int = 1) -> list[Run]:
    """Simulate every (barrier, v0) pair; results come back sorted by (barrier, v0)."""
    tasks = [(cfg, Barrier(b), float(v0))
             for b in (barriers or cfg.barriers()) for v0 in sorted(cfg.v0_list)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_simulate_one, tasks))
    return [_simulate_one(t) for t in tasks]


def write_runs(runs: Sequence[Run], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for run in runs:
        path = out / acc.trajectory_filename(run.barrier, run.v0)
        acc.write_trajectory_csv(path, run.records)
        paths.append(path)
    return paths


def write_gnuplot(paths: Sequence[Path], out_dir: str | Path) -> Path:
    """Small gnuplot script plotting gap and speed for every trajectory CSV."""
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             "set multiplot layout 2,1", "set ylabel 'z [m]'"]
    lines.append("plot " + ", ".join(f"'{p.name}' using 1:3 with lines title '{p.stem}'" for p in paths))
    lines.append("set ylabel 'v [m/s]'")
    lines.append("plot " + ", ".join(f"'{p.name}' using 1:2 with lines title '{p.stem}'" for p in paths))
    lines.append("unset multiplot")
    script = Path(out_dir) / "trajectories.gp"
    script.write_text("\n".join(lines) + "\n")
    return script


# --- comparison -----------------------------------------------------------


def settle_time(records: Sequence[TrajectoryRecord], v_f: float, band: float = SETTLE_BAND) -> Optional[float]:
    """Earliest time after which |v - v_f| stays within ``band``."""
    t_settle = None
    for r in records:
        if abs(r.state.v - v_f) <= band:
            if t_settle is None:
                t_settle = r.t
        else:
            t_settle = None
    return t_settle


def run_summary(run: Run, prm: AccParams) -> dict:
    recs = run.records
    return {
        "steady_state_gap": recs[-1].state.z,
        "min_gap": min(r.state.z for r in recs),
        "max_abs_u": max(abs(r.u) for r in recs),
        "settle_time": settle_time(recs, prm.v_f),
        "safety_violations": sum(1 for r in recs if r.theta < -SAFETY_TOL),
        "solver_failures": sum(1 for r in recs if r.qp_status is not Status.OPTIMAL),
    }


@dataclass
class ComparisonReport:
    """Per-v0 summaries keyed by barrier label; ``labels`` is (subject, baseline)."""

    labels: tuple[str, str]
    rows: dict[float, dict[str, dict]]

    def to_json(self) -> dict:
        a, b = self.labels
        out = []
        for v0, pair in sorted(self.rows.items()):
            row = {"v0": v0}
            for label, key in ((a, "a"), (b, "b")):
                for field_name, val in pair[key].items():
                    row[f"{field_name}_{label}"] = val
            out.append(row)
        return {"subject": a, "baseline": b, "runs": out}

    def table(self) -> str:
        a, b = self.labels
        head = (f"{'v0':>6} | {'gap_' + a:>10} {'gap_' + b:>10} | {'min_' + a:>10} {'min_' + b:>10} | "
                f"{'|u|_' + a:>9} {'|u|_' + b:>9} | {'settle_' + a:>9} {'settle_' + b:>9} | "
                f"{'viol_' + a:>7} {'viol_' + b:>7}")
        lines = [head, "-" * len(head)]

        def fmt_t(x):
            return f"{x:9.1f}" if x is not None else f"{'-':>9}"

        for v0, pair in sorted(self.rows.items()):
            x, y = pair["a"], pair["b"]
            lines.append(
                f"{v0:6.1f} | {x['steady_state_gap']:10.4f} {y['steady_state_gap']:10.4f} | "
                f"{x['min_gap']:10.4f} {y['min_gap']:10.4f} | {x['max_abs_u']:9.1f} {y['max_abs_u']:9.1f} | "
                f"{fmt_t(x['settle_time'])} {fmt_t(y['settle_time'])} | "
                f"{x['safety_violations']:7d} {y['safety_violations']:7d}")
        return "\n".join(lines)


def compare(cfg: ScenarioConfig, subject: Barrier = Barrier.NCBF,
            baseline: Barrier = Barrier.HOCBF, jobs: int = 1) -> tuple[ComparisonReport, list[Run]]:
    subject, baseline = Barrier(subject), Barrier(baseline)
    prm = cfg.acc_params()
    runs_a = run_sweep(cfg, [subject], jobs)
    runs_b = runs_a if baseline is subject else run_sweep(cfg, [baseline], jobs)
    rows = {ra.v0: {"a": run_summary(ra, prm), "b": run_summary(rb, prm)}
            for ra, rb in zip(runs_a, runs_b)}
    labels = (subject.value, baseline.value) if baseline is not subject else (subject.value, subject.value + "_2")
    runs = runs_a if baseline is subject else runs_a + runs_b
    return ComparisonReport(labels=labels, rows=rows), runs


# --- feasibility along trajectories ---------------------------------------


@dataclass
class FeasibilitySummary:
    steps: int
    satisfied: int
    max_y: float
    min_margin: float
    final_y: float
    violations: list[float]

    @property
    def fraction(self) -> float:
        return self.satisfied / self.steps if self.steps else 0.0


def feasibility_rows(records: Sequence[TrajectoryRecord], prm: AccParams) -> list[dict]:
    """One row per record; steps outside Theta > 0, theta > 0 get NaNs and count as unsatisfied."""
    mdl = acc.AccModel.build(prm)
    rows = []
    for r in records:
        row = {"t": r.t, "Theta": acc.barrier_value(r.state, prm), "theta": acc.gap_value(r.state, prm)}
        try:
            rep = theorem_condition(mdl.sys, mdl.gap, r.state.as_array(), prm.ncbf, mdl.theorem_bounds)
        except PreconditionViolated:
            row.update(lhs=math.nan, alphaTheta=math.nan, margin=math.nan, satisfied=False, Y=math.nan)
        else:
            row.update(lhs=rep.lhs, alphaTheta=rep.alpha_theta, margin=rep.margin,
                       satisfied=rep.satisfied, Y=rep.y_value)
        rows.append(row)
    return rows


def summarize_feasibility(rows: Sequence[dict]) -> FeasibilitySummary:
    ys = [r["Y"] for r in rows if not math.isnan(r["Y"])]
    margins = [r["margin"] for r in rows if not math.isnan(r["margin"])]
    return FeasibilitySummary(
        steps=len(rows),
        satisfied=sum(1 for r in rows if r["satisfied"]),
        max_y=max(ys) if ys else math.nan,
        min_margin=min(margins) if margins else math.nan,
        final_y=rows[-1]["Y"] if rows else math.nan,
        violations=[r["t"] for r in rows if not r["satisfied"]],
    )


def check_feasibility(records: Sequence[TrajectoryRecord], prm: AccParams,
                      csv_path: Optional[str | Path] = None) -> FeasibilitySummary:
    rows = feasibility_rows(records, prm)
    if csv_path is not None:
        write_feasibility_csv(csv_path, rows)
    return summarize_feasibility(rows)


def tracking_report(records: Sequence[TrajectoryRecord], prm: AccParams):
    # lambda_min of Z on the tracked speed coordinate
    return tracking_bound_check([(r.t, r.V) for r in records], prm.chi3, 1.0)


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
