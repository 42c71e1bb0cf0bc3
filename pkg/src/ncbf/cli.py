"""Command-line front end.

Exit codes: 0 ok, 2 configuration or input error, 3 solver failure during
simulation, 4 feasibility violation, 5 standalone QP failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import acc
from .acc import Barrier
from .qp import QpProblem, solve
from .scenario import (ScenarioConfig, check_feasibility, compare, dump_json, run_sweep,
                       write_gnuplot, write_runs)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INFEASIBLE = 4
EXIT_QP = 5


class ConfigError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<config>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def load_config(args) -> ScenarioConfig:
    """Config file (or defaults) with command-line overrides applied."""
    try:
        data = json.loads(Path(args.config).read_text()) if args.config else {}
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if getattr(args, "v0", None):
        try:
            data["v0_list"] = [float(x) for x in args.v0.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"--v0: cannot parse {args.v0!r}") from None
    for name in ("dt", "horizon"):
        if getattr(args, name, None) is not None:
            data[name] = getattr(args, name)
    if getattr(args, "barrier", None):
        data["barrier"] = args.barrier
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def cmd_run(args) -> int:
    cfg = load_config(args)
    runs = run_sweep(cfg, jobs=args.jobs)
    paths = write_runs(runs, cfg.output_dir)
    if args.gnuplot:
        write_gnuplot(paths, cfg.output_dir)
    failed = [r for r in runs if r.failed]
    for run, path in zip(runs, paths):
        status = "FAILED" if run.failed else "ok"
        print(f"{run.barrier.value:5s} v0={run.v0:<6g} z_end={run.records[-1].state.z:9.4f} "
              f"v_end={run.records[-1].state.v:8.4f} {status:6s} -> {path}")
    if failed:
        for run in failed:
            ts = acc.failed_steps(run.records)
            _err(f"{run.barrier.value} v0={run.v0:g}: QP failed at {len(ts)} steps, first t={ts[0]:g}")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args)
    report, runs = compare(cfg, Barrier(args.subject), Barrier(args.baseline), jobs=args.jobs)
    out = Path(cfg.output_dir)
    write_runs(runs, out)
    dump_json(report.to_json(), out / "comparison.json")
    table = report.table()
    (out / "comparison.txt").write_text(table + "\n")
    print(table)
    if any(r.failed for r in runs):
        _err("at least one run had QP failures")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_check_feasibility(args) -> int:
    cfg = load_config(args)
    prm = cfg.acc_params()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.trajectory:
        sources = []
        for path in args.trajectory:
            try:
                sources.append((Path(path).stem, acc.read_trajectory_csv(path)))
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot read trajectory {path}: {exc}") from None
    else:
        sources = [(f"ncbf_v0_{run.v0:g}", run.records)
                   for run in run_sweep(cfg, [Barrier.NCBF], jobs=args.jobs)]
    violated = False
    for name, records in sources:
        csv_path = out / f"feasibility_{name}.csv"
        summ = check_feasibility(records, prm, csv_path)
        print(f"{name}: satisfied {summ.satisfied}/{summ.steps} ({summ.fraction:.4f}), "
              f"max Y={summ.max_y:.6g}, final Y={summ.final_y:.6g}, min margin={summ.min_margin:.6g} "
              f"-> {csv_path}")
        if summ.violations:
            violated = True
            shown = ", ".join(f"{t:g}" for t in summ.violations[:10])
            more = f" (+{len(summ.violations) - 10} more)" if len(summ.violations) > 10 else ""
            _err(f"{name}: condition violated at t = {shown}{more}")
    return EXIT_INFEASIBLE if violated else EXIT_OK


def cmd_solve_qp(args) -> int:
    try:
        problem = QpProblem.load(args.problem)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid QP problem {args.problem}: {exc}") from None
    sol = solve(problem)
    with np.printoptions(precision=10):
        print(f"status:      {sol.status.value}")
        print(f"iterations:  {sol.iterations}")
        print(f"v*:          {sol.v_star}")
        print(f"multipliers: {sol.L_star}")
        print(f"slacks:      {sol.s_star}")
        print(f"objective:   {problem.objective(sol.v_star):.10g}")
        print(f"final mu:    {sol.final_mu:.3e}   kkt residual: {sol.kkt_residual_norm:.3e}")
    return EXIT_OK if sol.ok else EXIT_QP


def cmd_print_default_config(args) -> int:
    print(ScenarioConfig().model_dump_json(indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p, barrier=True):
        p.add_argument("--config", help="scenario JSON (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--v0", help="comma-separated initial speeds, overrides v0_list")
        p.add_argument("--dt", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        if barrier:
            p.add_argument("--barrier", choices=["ncbf", "hocbf", "both"])

    for name in ("run", "sweep"):
        p = sub.add_parser(name, help="simulate and write one trajectory CSV per (barrier, v0)")
        scenario_flags(p)
        p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
        p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="NCBF vs HOCBF summary per initial speed")
    scenario_flags(p, barrier=False)
    p.add_argument("--subject", choices=["ncbf", "hocbf"], default="ncbf")
    p.add_argument("--baseline", choices=["ncbf", "hocbf"], default="hocbf")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check-feasibility", help="evaluate the feasibility condition along trajectories")
    scenario_flags(p, barrier=False)
    p.add_argument("--trajectory", nargs="+", help="trajectory CSVs to check instead of simulating")
    p.set_defaults(func=cmd_check_feasibility)

    p = sub.add_parser("solve-qp", help="solve a QP given as JSON {P, G, A, theta}")
    p.add_argument("problem")
    p.set_defaults(func=cmd_solve_qp)

    p = sub.add_parser("print-default-config", help="print the default scenario JSON")
    p.set_defaults(func=cmd_print_default_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if "--print-default-config" in argv:
        argv = ["print-default-config"]
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
