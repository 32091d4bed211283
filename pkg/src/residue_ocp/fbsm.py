"""Forward-backward sweep for the state/costate boundary-value system."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .integrate import ControlPath, Trajectory, integrate_adjoint_backward, integrate_forward
from .model import ModelParams, objective
from .pmp import AdjointMode, optimal_control, switching_coefficient

log = logging.getLogger(__name__)

REGIME_EPS = 0.02


class RegimeKind(enum.Enum):
    LOWER = "lower"
    INTERIOR = "interior"
    UPPER = "upper"


@dataclass(frozen=True)
class Regime:
    t_start: float
    t_end: float
    kind: RegimeKind
    level: float  # mean control over the regime

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class SolveReport:
    method: str
    objective: float
    iterations: int
    converged: bool
    final_control_delta: float
    regimes: List[Regime] = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""
    history: List[float] = field(default_factory=list, repr=False)

    @property
    def switch_times(self) -> List[float]:
        return [reg.t_start for reg in self.regimes[1:]]

    @property
    def regime_kinds(self) -> List[RegimeKind]:
        return [reg.kind for reg in self.regimes]


class NonConvergence(RuntimeError):
    """Raised only on request; solvers normally flag non-convergence in the report."""

    def __init__(self, report: SolveReport):
        super().__init__(
            f"{report.method} did not converge after {report.iterations} iterations "
            f"(last delta {report.final_control_delta:.3e})")
        self.report = report


def _label(u: np.ndarray, eps: float) -> np.ndarray:
    labels = np.full(u.shape, 1, dtype=int)
    labels[u <= eps] = 0
    labels[u >= 1.0 - eps] = 2
    return labels


def _runs(labels):
    runs = []
    start = 0
    for k in range(1, len(labels) + 1):
        if k == len(labels) or labels[k] != labels[start]:
            runs.append([int(labels[start]), start, k])
            start = k
    return runs


def classify_regimes(traj_or_controls, eps: float = REGIME_EPS, grid=None,
                     min_steps: int = 2) -> List[Regime]:
    """Split the horizon into maximal lower-bound / interior / upper-bound runs.

    Runs shorter than ``min_steps`` intervals are absorbed by their
    predecessor (or successor, for a leading run).
    """
    if isinstance(traj_or_controls, Trajectory):
        u = traj_or_controls.u
        grid = traj_or_controls.grid
    else:
        u = np.asarray(getattr(traj_or_controls, "values", traj_or_controls), dtype=float)
    t = grid.nodes if grid is not None else np.arange(u.size + 1, dtype=float)

    runs = _runs(_label(u, eps))
    merged = []
    for run in runs:
        if merged and run[2] - run[1] < min_steps:
            merged[-1][2] = run[2]
        elif merged and merged[-1][0] == run[0]:
            merged[-1][2] = run[2]
        else:
            merged.append(list(run))
    if len(merged) > 1 and merged[0][2] - merged[0][1] < min_steps:
        merged[1][1] = merged[0][1]
        merged.pop(0)
    kinds = [RegimeKind.LOWER, RegimeKind.INTERIOR, RegimeKind.UPPER]
    return [Regime(float(t[a]), float(t[b]), kinds[lab], float(np.mean(u[a:b])))
            for lab, a, b in merged]


def match_regimes(regimes: Sequence[Regime], pattern: Sequence[RegimeKind]) -> Optional[List[Regime]]:
    """Earliest occurrence of ``pattern`` as a subsequence of the regime kinds.

    Transition times of the matched pattern are the ``t_end`` values of all
    but the last matched regime.
    """
    matched = []
    it = iter(regimes)
    for kind in pattern:
        for reg in it:
            if reg.kind is kind:
                matched.append(reg)
                break
        else:
            return None
    return matched


@dataclass(frozen=True)
class SweepConfig:
    relaxation: float = 0.5
    tol_control: float = 1e-6
    max_iters: int = 2000
    adjoint_mode: AdjointMode = AdjointMode.CORRECTED
    initial_guess: Optional[ControlPath] = None

    def __post_init__(self):
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError(f"relaxation must lie in (0, 1], got {self.relaxation}")
        if not self.tol_control > 0:
            raise ValueError(f"tol_control must be positive, got {self.tol_control}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        object.__setattr__(self, "adjoint_mode", AdjointMode.parse(self.adjoint_mode))


def control_update(traj: Trajectory, p: ModelParams) -> np.ndarray:
    """Control map evaluated at the left node of each interval."""
    h_tilde = switching_coefficient(traj.adjoints[:-1], p)
    return optimal_control(h_tilde, traj.states[:-1, 1], p)


def solve_fbsm(p: ModelParams, cfg: SweepConfig = SweepConfig()) -> Tuple[Trajectory, SolveReport]:
    """Iterate forward states, backward costates and the relaxed control update.

    Stops once the sup-norm of ``u_new - u`` drops to ``cfg.tol_control``.
    The returned trajectory carries the control that passed the test, with
    its own costates and switching series attached.
    """
    started = time.perf_counter()
    n = p.n_steps
    if cfg.initial_guess is None:
        u = np.full(n, 0.5)
    else:
        u = np.array(cfg.initial_guess.resample(n).values)
    omega = cfg.relaxation
    delta = np.inf
    history = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        traj = integrate_adjoint_backward(integrate_forward(ControlPath(u), p), p, cfg.adjoint_mode)
        u_new = control_update(traj, p)
        delta = float(np.max(np.abs(u_new - u)))
        history.append(delta)
        if delta <= cfg.tol_control:
            converged = True
            break
        u = np.clip((1.0 - omega) * u + omega * u_new, 0.0, 1.0)
    if not converged:
        log.warning("FBSM stopped after %d iterations, delta %.3e", it, delta)
    report = SolveReport(
        method="fbsm",
        objective=objective(traj, p),
        iterations=it,
        converged=converged,
        final_control_delta=delta,
        regimes=classify_regimes(traj),
        wall_time=time.perf_counter() - started,
        message="converged" if converged else "maximum iterations reached",
        history=history,
    )
    return traj, report
