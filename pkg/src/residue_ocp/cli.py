"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 bad input (e.g. inadmissible
control), 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .files import (ConfigError, load_config, load_scenario_file, read_control_csv,
                    write_trajectory)
from .integrate import ControlPath, integrate_forward
from .model import ModelError, objective
from .pmp import AdjointMode
from .scenarios import ScenarioResult, builtin_scenarios, run_scenarios, solve_scenario

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NONCONVERGED = 0, 2, 3, 4

log = logging.getLogger("residue_ocp")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _format_summary(res: ScenarioResult) -> str:
    lines = [f"scenario: {res.scenario.name}"]
    for method, rep in res.reports.items():
        traj = res.trajectories[method]
        s_t, r_t, e_t = traj.states[-1]
        lines += [
            f"[{method}]",
            f"objective: {rep.objective:.12g}",
            f"iterations: {rep.iterations}",
            f"converged: {str(rep.converged).lower()}",
            f"final_delta: {rep.final_control_delta:.3e}",
            f"status: {rep.message}",
            f"terminal_state: S={s_t:.10g} R={r_t:.10g} E={e_t:.10g}",
            f"regimes: {' '.join(r.kind.value for r in rep.regimes)}",
        ]
        for r in rep.regimes:
            lines.append(f"  {r.kind.value:<8} [{r.t_start:8.4f}, {r.t_end:8.4f}]  mean u={r.level:.4f}")
        switches = ", ".join(f"{t:.4f}" for t in rep.switch_times)
        lines.append(f"switch_times: {switches}")
    gap = res.objective_gap
    if gap is not None:
        lines.append(f"objective_gap: {gap[0]:.6e}")
        lines.append(f"objective_gap_relative: {gap[1]:.6e}")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    p = cfg.params
    try:
        if args.control_csv:
            controls = read_control_csv(args.control_csv, p.n_steps)
        else:
            controls = ControlPath.constant(args.u, p.n_steps)
    except (ModelError, ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    traj = integrate_forward(controls, p)
    if args.out:
        write_trajectory(args.out, traj, p)
    print(f"objective: {objective(traj, p):.12g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    overrides = {}
    if args.method:
        overrides["method"] = args.method
    if args.adjoint_mode:
        overrides["adjoint_mode"] = AdjointMode.parse(args.adjoint_mode)
    if overrides:
        cfg = replace(cfg, **overrides)
    res = solve_scenario(cfg.scenario("run"), cfg.settings())
    if args.out:
        write_trajectory(args.out, res.trajectory, cfg.params)
    print(_format_summary(res))
    if not res.converged:
        print("warning: solver did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_scenarios(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.set == "builtin":
            scenarios = builtin_scenarios()
        else:
            scenarios = load_scenario_file(args.set, cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        return _fail(EXIT_INPUT, f"cannot read scenario file: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_scenarios(scenarios, cfg.settings(), max_workers=args.workers)
    for name in report.names:
        if name in report.results:
            res = report.results[name]
            write_trajectory(out / f"{name}.csv", res.trajectory, res.scenario.params)
            print(_format_summary(res))
            print()
        else:
            print(f"scenario: {name}\nstatus: {report.failures[name].error}\n")
    (out / "comparison.csv").write_text(report.to_csv())
    if not report.results:
        return _fail(EXIT_NONCONVERGED, "every scenario failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="residue-ocp",
        description="Optimal residue allocation between soil return and energy production.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log config defaulting and solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate the states for a given control")
    sim.add_argument("--config", default="baseline", help="INI config file or 'baseline'")
    ctrl = sim.add_mutually_exclusive_group()
    ctrl.add_argument("--u", type=float, default=0.0, help="constant control value")
    ctrl.add_argument("--control-csv", help="CSV with a 'u' column or a single column of values")
    sim.add_argument("--out", help="trajectory CSV to write")
    sim.set_defaults(func=cmd_simulate)

    solve = sub.add_parser("solve", help="solve the optimal control problem")
    solve.add_argument("--config", default="baseline")
    solve.add_argument("--method", choices=("fbsm", "direct", "both"))
    solve.add_argument("--adjoint-mode", choices=("paper", "corrected"))
    solve.add_argument("--out", help="trajectory CSV to write")
    solve.set_defaults(func=cmd_solve)

    scen = sub.add_parser("scenarios", help="run the builtin or a user-defined scenario set")
    scen.add_argument("--set", default="builtin", help="'builtin' or a scenario INI file")
    scen.add_argument("--config", default="baseline", help="base config (solver settings, defaults)")
    scen.add_argument("--out", required=True, help="output directory")
    scen.add_argument("--workers", type=int, default=1)
    scen.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
