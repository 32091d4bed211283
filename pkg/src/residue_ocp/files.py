"""Run-configuration files and trajectory / comparison CSV output.

A run configuration is an INI file with four optional sections::

    [model]   alpha delta_S rho gamma beta delta_E theta
    [econ]    p_E p_S c1 c2 discount
    [sim]     T N S0 R0 E0
    [solver]  method adjoint_mode tol max_iters relaxation

Keys are case-sensitive.  Missing keys take baseline values.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .direct import DirectConfig
from .fbsm import SweepConfig
from .integrate import ControlPath, Trajectory
from .model import ModelError, ModelParams, discount_weights
from .pmp import AdjointMode, switching_coefficient
from .scenarios import SOLVERS, Scenario, SolverSettings

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["t", "S", "R", "E", "u", "lambda_S", "lambda_R", "lambda_E",
                     "lambda_hat_S", "lambda_hat_R", "lambda_hat_E", "switch_raw", "switch_clamped"]
SWITCH_CLAMP = 2.0

# section -> {file key: ModelParams field}
PARAM_KEYS = {
    "model": {"alpha": "alpha", "delta_S": "delta_S", "rho": "rho", "gamma": "gamma",
              "beta": "beta", "delta_E": "delta_E", "theta": "theta"},
    "econ": {"p_E": "p_E", "p_S": "p_S", "c1": "c1", "c2": "c2", "discount": "discount"},
    "sim": {"T": "horizon", "N": "n_steps", "S0": "s0", "R0": "r0", "E0": "e0"},
}
SOLVER_KEYS = ("method", "adjoint_mode", "tol", "max_iters", "relaxation")
SECTIONS = (*PARAM_KEYS, "solver")
BUILTIN_CONFIGS = ("baseline",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = ModelParams()
    method: str = "direct"
    adjoint_mode: AdjointMode = AdjointMode.CORRECTED
    tol: Optional[float] = None
    max_iters: Optional[int] = None
    relaxation: Optional[float] = None

    def settings(self) -> SolverSettings:
        fbsm = SweepConfig(adjoint_mode=self.adjoint_mode)
        direct = DirectConfig()
        if self.tol is not None:
            fbsm = replace(fbsm, tol_control=self.tol)
            direct = replace(direct, tol_grad=self.tol)
        if self.max_iters is not None:
            fbsm = replace(fbsm, max_iters=self.max_iters)
            direct = replace(direct, max_iters=self.max_iters)
        if self.relaxation is not None:
            fbsm = replace(fbsm, relaxation=self.relaxation)
        return SolverSettings(fbsm, direct)

    def scenario(self, name: str = "run") -> Scenario:
        return Scenario(name, self.params, self.method, self.adjoint_mode)


def _line_of(text: str, key: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), start=1):
        head = line.split("=", 1)[0].split(":", 1)[0].strip()
        if head == key:
            return i
    return None


def _where(text, key):
    line = _line_of(text, key)
    return f"line {line}: " if line else ""


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case: delta_S, p_E, T, N ...
    return cp


def _number(text, section, key, raw, kind=float):
    try:
        value = kind(raw)
    except ValueError:
        raise ConfigError(f"{_where(text, key)}[{section}] {key}: cannot parse {raw!r} "
                          f"as {kind.__name__}") from None
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{_where(text, '[' + section + ']')}unknown section [{section}]; "
                              f"expected one of {', '.join(SECTIONS)}")
    overrides: Dict[str, float] = {}
    for section, keys in PARAM_KEYS.items():
        given = cp[section] if cp.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{_where(text, key)}unknown key {key!r} in [{section}]")
            kind = int if key == "N" else float
            overrides[keys[key]] = _number(text, section, key, given[key], kind)
        for key in keys:
            if key not in given:
                log.info("config %s: [%s] %s not given, using baseline value", source, section, key)
    solver: Dict[str, object] = {}
    if cp.has_section("solver"):
        for key, raw in cp["solver"].items():
            if key not in SOLVER_KEYS:
                raise ConfigError(f"{_where(text, key)}unknown key {key!r} in [solver]")
            if key == "method":
                if raw not in SOLVERS:
                    raise ConfigError(f"{_where(text, key)}[solver] method must be one of {SOLVERS}")
                solver[key] = raw
            elif key == "adjoint_mode":
                try:
                    solver[key] = AdjointMode.parse(raw)
                except ValueError as exc:
                    raise ConfigError(f"{_where(text, key)}[solver] {exc}") from None
            elif key == "max_iters":
                solver[key] = _number(text, "solver", key, raw, int)
            else:
                solver[key] = _number(text, "solver", key, raw)
    try:
        params = ModelParams(**overrides)
        cfg = RunConfig(params, **solver)
        cfg.settings()  # validates tol / max_iters / relaxation
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Read a config file; the name ``baseline`` (or ``None``) gives the defaults."""
    if path is None or str(path) in BUILTIN_CONFIGS:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def load_scenario_file(path: Union[str, Path], base: RunConfig = RunConfig()) -> List[Scenario]:
    """Scenarios from an INI file: one section per scenario, keys override the baseline.

    Parameter keys use the config-file names (``theta``, ``T``, ``p_E`` ...);
    ``method`` and ``adjoint_mode`` are also accepted.
    """
    text = Path(path).read_text()
    cp = _parser()
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    lookup = {k: (sec, f) for sec, keys in PARAM_KEYS.items() for k, f in keys.items()}
    scenarios = []
    for name in cp.sections():
        overrides, method, mode = {}, base.method, base.adjoint_mode
        for key, raw in cp[name].items():
            if key == "method":
                method = raw
            elif key == "adjoint_mode":
                mode = raw
            elif key in lookup:
                kind = int if key == "N" else float
                overrides[lookup[key][1]] = _number(text, name, key, raw, kind)
            else:
                raise ConfigError(f"{_where(text, key)}unknown key {key!r} in scenario [{name}]")
        try:
            scenarios.append(Scenario(name, base.params.with_(**overrides), method, mode))
        except (ModelError, ValueError) as exc:
            raise ConfigError(f"{path}: scenario [{name}]: {exc}") from None
    if not scenarios:
        raise ConfigError(f"{path}: no scenarios defined")
    return scenarios


def _fmt(x) -> str:
    return repr(float(x))


def trajectory_rows(traj: Trajectory, p: ModelParams) -> List[List[str]]:
    t = traj.t
    u = traj.node_controls()
    rows = []
    if traj.adjoints is not None:
        lam = traj.adjoints
        lam_hat = discount_weights(t, p)[:, None] * lam
        raw = switching_coefficient(lam, p) * traj.states[:, 1] - p.c1
        clamped = np.clip(raw, -SWITCH_CLAMP, SWITCH_CLAMP)
    for k in range(t.size):
        row = [_fmt(t[k]), *map(_fmt, traj.states[k]), _fmt(u[k])]
        if traj.adjoints is None:
            row += [""] * 8
        else:
            row += [*map(_fmt, lam[k]), *map(_fmt, lam_hat[k]), _fmt(raw[k]), _fmt(clamped[k])]
        rows.append(row)
    return rows


def trajectory_csv(traj: Trajectory, p: ModelParams) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    writer.writerows(trajectory_rows(traj, p))
    return buf.getvalue()


def write_trajectory(path: Union[str, Path], traj: Trajectory, p: ModelParams) -> None:
    Path(path).write_text(trajectory_csv(traj, p))


@dataclass
class TrajectoryTable:
    """Columns of a trajectory CSV as float arrays (empty cells become NaN)."""

    columns: Dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def controls(self) -> ControlPath:
        """Interval controls (the terminal row repeats the last interval)."""
        return ControlPath(self.columns["u"][:-1])


def read_trajectory(path: Union[str, Path]) -> TrajectoryTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        data = [[float(c) if c else np.nan for c in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return TrajectoryTable({name: arr[:, i] for i, name in enumerate(header)})


def read_control_csv(path: Union[str, Path], n: int) -> ControlPath:
    """Control values from a CSV: a ``u`` column (trajectory files included) or a
    bare single column.  ``n`` or ``n + 1`` values are accepted."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no control values")
    col = 0
    try:
        float(rows[0][0])
    except ValueError:
        header = [c.strip() for c in rows[0]]
        if "u" not in header:
            raise ValueError(f"{path}: header has no 'u' column") from None
        col = header.index("u")
        rows = rows[1:]
    values = np.array([float(r[col]) for r in rows])
    if values.size == n + 1:
        values = values[:-1]
    if values.size != n:
        raise ValueError(f"{path}: {values.size} control values for {n} intervals")
    return ControlPath(values)
