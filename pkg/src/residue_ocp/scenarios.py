"""Named scenarios, batch runs, parameter sweeps and comparison tables."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .direct import DirectConfig, solve_direct
from .fbsm import REGIME_EPS, SolveReport, SweepConfig, classify_regimes, solve_fbsm
from .integrate import ControlPath, Trajectory
from .model import ModelParams
from .pmp import AdjointMode

log = logging.getLogger(__name__)

SOLVERS = ("fbsm", "direct", "both")
SWEEP_PARAMETERS = {"theta": "theta", "horizon": "horizon", "p_E": "p_E", "c1": "c1"}
COMPARISON_HEADER = ["scenario", "J", "switch_1", "switch_2", "switch_3", "S_T", "R_T", "E_T", "status"]


@dataclass(frozen=True)
class Scenario:
    name: str
    params: ModelParams = ModelParams()
    solver: str = "direct"
    adjoint_mode: AdjointMode = AdjointMode.CORRECTED

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        object.__setattr__(self, "adjoint_mode", AdjointMode.parse(self.adjoint_mode))


def builtin_scenarios() -> List[Scenario]:
    """Baseline, no reinvestment, short horizon and long horizon, in that order."""
    base = ModelParams()
    return [
        Scenario("baseline", base),
        Scenario("no-reinvest", base.with_(theta=0.0)),
        Scenario("short-horizon", base.with_(horizon=15.0)),
        Scenario("long-horizon", base.with_(horizon=30.0)),
    ]


@dataclass(frozen=True)
class SolverSettings:
    fbsm: SweepConfig = SweepConfig()
    direct: DirectConfig = DirectConfig()


@dataclass
class ScenarioResult:
    scenario: Scenario
    trajectories: Dict[str, Trajectory]
    reports: Dict[str, SolveReport]

    @property
    def primary(self) -> str:
        return "direct" if "direct" in self.reports else "fbsm"

    @property
    def trajectory(self) -> Trajectory:
        return self.trajectories[self.primary]

    @property
    def report(self) -> SolveReport:
        return self.reports[self.primary]

    @property
    def objective(self) -> float:
        return self.report.objective

    @property
    def objective_gap(self) -> Optional[float]:
        """``(|J_fbsm - J_direct|, relative gap)`` when both solvers ran."""
        if {"fbsm", "direct"} <= self.reports.keys():
            j_f = self.reports["fbsm"].objective
            j_d = self.reports["direct"].objective
            return abs(j_f - j_d), abs(j_f - j_d) / abs(j_d)
        return None

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports.values())

    @property
    def status(self) -> str:
        bad = [m for m, r in self.reports.items() if not r.converged]
        return "ok" if not bad else "not_converged:" + "+".join(bad)


@dataclass
class Failure:
    name: str
    error: str


@dataclass
class ComparisonReport:
    names: List[str]
    results: Dict[str, ScenarioResult] = field(default_factory=dict)
    failures: Dict[str, Failure] = field(default_factory=dict)
    swept: Optional[str] = None
    swept_values: Dict[str, float] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.names)

    def rows(self) -> List[List[str]]:
        out = []
        for name in self.names:
            if name in self.results:
                res = self.results[name]
                switches = [f"{t:.6f}" for t in res.report.switch_times[:3]]
                switches += [""] * (3 - len(switches))
                s_t, r_t, e_t = res.trajectory.states[-1]
                out.append([name, repr(res.objective), *switches,
                            repr(float(s_t)), repr(float(r_t)), repr(float(e_t)), res.status])
            else:
                err = self.failures[name].error.replace("\n", " ")
                out.append([name, "", "", "", "", "", "", "", f"failed: {err}"])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        writer.writerows(self.rows())
        return buf.getvalue()

    def table(self, quantity) -> List[tuple]:
        """``(name, value)`` pairs for completed scenarios; ``quantity`` maps a result to a value."""
        return [(n, quantity(self.results[n])) for n in self.names if n in self.results]


def solve_scenario(sc: Scenario, settings: SolverSettings = SolverSettings(),
                   warm_start: Optional[ControlPath] = None) -> ScenarioResult:
    trajectories, reports = {}, {}
    fbsm_cfg = replace(settings.fbsm, adjoint_mode=sc.adjoint_mode)
    direct_cfg = settings.direct
    if warm_start is not None:
        fbsm_cfg = replace(fbsm_cfg, initial_guess=warm_start)
        direct_cfg = replace(direct_cfg, initial_guess=warm_start)
    if sc.solver in ("direct", "both"):
        trajectories["direct"], reports["direct"] = solve_direct(sc.params, direct_cfg, sc.adjoint_mode)
    if sc.solver in ("fbsm", "both"):
        trajectories["fbsm"], reports["fbsm"] = solve_fbsm(sc.params, fbsm_cfg)
    for rep, traj in zip(reports.values(), trajectories.values()):
        rep.regimes = classify_regimes(traj, REGIME_EPS)
    return ScenarioResult(sc, trajectories, reports)


def _attempt(sc, settings, warm_start=None):
    try:
        return solve_scenario(sc, settings, warm_start)
    except Exception as exc:  # recorded per scenario, the batch continues
        log.error("scenario %s failed: %s", sc.name, exc)
        return Failure(sc.name, f"{type(exc).__name__}: {exc}")


def run_scenarios(scenarios: Sequence[Scenario], settings: SolverSettings = SolverSettings(),
                  max_workers: int = 1) -> ComparisonReport:
    """Solve every scenario; failures are recorded rather than raised."""
    names = [sc.name for sc in scenarios]
    if len(set(names)) != len(names):
        raise ValueError(f"scenario names must be unique: {names}")
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(lambda sc: _attempt(sc, settings), scenarios))
    else:
        outcomes = [_attempt(sc, settings) for sc in scenarios]
    report = ComparisonReport(names)
    for outcome in outcomes:
        if isinstance(outcome, Failure):
            report.failures[outcome.name] = outcome
        else:
            report.results[outcome.scenario.name] = outcome
    return report


def sweep(parameter: str, values: Sequence[float], base: Scenario,
          settings: SolverSettings = SolverSettings()) -> ComparisonReport:
    """One solve per value of ``parameter``, warm-started from the previous point."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    field_name = SWEEP_PARAMETERS[parameter]
    points = []
    for v in values:
        v = float(v)
        if not np.isfinite(v):
            raise ValueError(f"sweep value {v} is not finite")
        points.append((f"{base.name}[{parameter}={v:g}]", v))
    report = ComparisonReport([name for name, _ in points], swept=parameter)
    warm = None
    for name, v in points:
        report.swept_values[name] = v
        try:
            sc = replace(base, name=name, params=base.params.with_(**{field_name: v}))
        except ValueError as exc:
            report.failures[name] = Failure(name, f"{type(exc).__name__}: {exc}")
            continue
        outcome = _attempt(sc, settings, warm)
        if isinstance(outcome, Failure):
            report.failures[name] = outcome
        else:
            report.results[name] = outcome
            warm = outcome.trajectory.controls
    return report
