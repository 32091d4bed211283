"""Fixed-step integration of the state and costate systems.

Controls are piecewise constant and left-aligned: ``controls[k]`` acts on
``[t_k, t_{k+1})``.  Because the dynamics are linear in the state for a frozen
control, a Crank-Nicolson (trapezoidal) step is a single 3x3 linear solve.
For this system with piecewise-constant control the trapezoidal rule and the
implicit midpoint rule produce identical iterates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelError, ModelParams, check_control, control_matrix, state_rhs, system_matrix
from .pmp import AdjointMode, adjoint_forcing, adjoint_matrix, adjoint_rhs, switching_function


class Scheme(enum.Enum):
    RK4 = "rk4"
    CRANK_NICOLSON = "cn"


class SingularStepError(ArithmeticError):
    pass


class IntegrationError(ArithmeticError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    t0: float
    t1: float
    n: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ModelError(f"grid end {self.t1} must exceed start {self.t0}")
        if int(self.n) != self.n or self.n < 2:
            raise ModelError(f"grid needs n >= 2 steps, got {self.n}")

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n + 1)

    @classmethod
    def from_params(cls, p: ModelParams) -> "Grid":
        return cls(0.0, p.horizon, p.n_steps)


@dataclass(frozen=True)
class ControlPath:
    """``n`` admissible control values, one per grid interval."""

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(check_control(self.values))
        if v.ndim != 1:
            raise ModelError("control path must be one-dimensional")
        object.__setattr__(self, "values", _frozen(v))

    def __len__(self):
        return self.values.size

    @classmethod
    def constant(cls, u: float, n: int) -> "ControlPath":
        return cls(np.full(n, float(u)))

    def resample(self, n: int) -> "ControlPath":
        """Map onto ``n`` equal intervals by sampling at interval midpoints."""
        if n == len(self):
            return self
        mids = (np.arange(n) + 0.5) / n
        idx = np.minimum((mids * len(self)).astype(int), len(self) - 1)
        return ControlPath(self.values[idx])


@dataclass(frozen=True)
class Trajectory:
    grid: Grid
    states: np.ndarray
    controls: ControlPath
    adjoints: Optional[np.ndarray] = None
    switching: Optional[np.ndarray] = None
    adjoint_mode: Optional[AdjointMode] = field(default=None, compare=False)

    def __post_init__(self):
        n = self.grid.n
        object.__setattr__(self, "states", _frozen(self.states))
        if self.states.shape != (n + 1, 3):
            raise ModelError(f"states shape {self.states.shape} != {(n + 1, 3)}")
        if len(self.controls) != n:
            raise ModelError(f"{len(self.controls)} controls for {n} intervals")
        if self.adjoints is not None:
            object.__setattr__(self, "adjoints", _frozen(self.adjoints))
            if self.adjoints.shape != (n + 1, 3):
                raise ModelError(f"adjoints shape {self.adjoints.shape} != {(n + 1, 3)}")
        if self.switching is not None:
            object.__setattr__(self, "switching", _frozen(self.switching))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def u(self) -> np.ndarray:
        return self.controls.values

    def node_controls(self) -> np.ndarray:
        """Control value at each node; the terminal node repeats the last interval."""
        return np.append(self.u, self.u[-1])


def rk4_step(x, u: float, h: float, p: ModelParams) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step with the control held fixed."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    k1 = state_rhs(x, u, p)
    k2 = state_rhs(x + 0.5 * h * k1, u, p)
    k3 = state_rhs(x + 0.5 * h * k2, u, p)
    k4 = state_rhs(x + h * k3, u, p)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"RK4 step produced non-finite state from {x} (h={h})")
    return out


def crank_nicolson_step(x, u: float, h: float, p: ModelParams) -> np.ndarray:
    """Solve ``x' = x + h/2 (A x + A x')`` exactly for ``x'``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    u = float(check_control(u))
    A = system_matrix(u, p)
    I = np.eye(3)
    try:
        return np.linalg.solve(I - 0.5 * h * A, (I + 0.5 * h * A) @ np.asarray(x, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularStepError(f"Crank-Nicolson matrix singular at step size h={h}") from exc


def system_matrices(u, p: ModelParams) -> np.ndarray:
    """Stacked ``A(u_k)`` for an array of controls, shape (n, 3, 3)."""
    u = np.asarray(u, dtype=float)
    A = np.broadcast_to(system_matrix(0.0, p), u.shape + (3, 3)).copy()
    A += u[..., None, None] * control_matrix(p)
    return A


def cn_matrices(u, h: float, p: ModelParams):
    """Per-interval ``(M_k, P_k)`` with ``M_k x_{k+1} = P_k x_k``."""
    A = system_matrices(u, p)
    I = np.eye(3)
    return I - 0.5 * h * A, I + 0.5 * h * A


def _cn_forward(x0, u, h, p):
    M, P = cn_matrices(u, h, p)
    try:
        Phi = np.linalg.solve(M, P)
    except np.linalg.LinAlgError as exc:
        raise SingularStepError(f"Crank-Nicolson matrix singular at step size h={h}") from exc
    states = np.empty((u.size + 1, 3))
    x = np.asarray(x0, dtype=float)
    states[0] = x
    for k in range(u.size):
        x = Phi[k] @ x
        states[k + 1] = x
    return states


def integrate_forward(controls, p: ModelParams, scheme=Scheme.CRANK_NICOLSON) -> Trajectory:
    """Integrate the states from ``(s0, r0, e0)`` over the grid defined by ``p``."""
    if not isinstance(controls, ControlPath):
        controls = ControlPath(controls)
    grid = Grid.from_params(p)
    if len(controls) != grid.n:
        raise ModelError(f"{len(controls)} controls for {grid.n} intervals")
    u = controls.values
    h = grid.h
    scheme = Scheme(scheme)
    if scheme is Scheme.CRANK_NICOLSON:
        states = _cn_forward(p.x0, u, h, p)
    else:
        states = np.empty((grid.n + 1, 3))
        states[0] = p.x0
        for k in range(grid.n):
            states[k + 1] = rk4_step(states[k], u[k], h, p)
    if not np.all(np.isfinite(states)):
        raise IntegrationError("state trajectory became non-finite")
    return Trajectory(grid, states, controls)


def backward_costates(u, h: float, p: ModelParams, mode) -> np.ndarray:
    """Crank-Nicolson costates, run backward from ``lam(T) = 0``.

    On interval ``k`` the costate ODE is ``dlam/dt = K_k lam - q_k``; the
    step ``(I + h/2 K_k) lam_k = (I - h/2 K_k) lam_{k+1} + h q_k`` is the
    trapezoidal rule read in reverse time.
    """
    mode = AdjointMode.parse(mode)
    u = np.asarray(u, dtype=float)
    n = u.size
    base = adjoint_matrix(0.0, p, mode)
    dK = adjoint_matrix(1.0, p, mode) - base
    K = base + u[:, None, None] * dK
    q = adjoint_forcing(u, p, mode)
    I = np.eye(3)
    try:
        L = np.linalg.solve(I + 0.5 * h * K, I - 0.5 * h * K)
        c = np.linalg.solve(I + 0.5 * h * K, h * q[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularStepError(f"costate step matrix singular at step size h={h}") from exc
    lam = np.zeros((n + 1, 3))
    for k in range(n - 1, -1, -1):
        lam[k] = L[k] @ lam[k + 1] + c[k]
    return lam


def integrate_adjoint_backward(traj: Trajectory, p: ModelParams,
                               mode=AdjointMode.CORRECTED) -> Trajectory:
    """Attach current-value costates and the switching series to ``traj``."""
    mode = AdjointMode.parse(mode)
    lam = backward_costates(traj.u, traj.grid.h, p, mode)
    if not np.all(np.isfinite(lam)):
        raise IntegrationError("costate trajectory became non-finite")
    switching = switching_function(lam, traj.states, p)
    return Trajectory(traj.grid, traj.states, traj.controls, lam, switching, mode)


def adjoint_step_residuals(traj: Trajectory, p: ModelParams, mode=None) -> np.ndarray:
    """Per-interval residual of the trapezoidal costate step, recomputed from
    :func:`~residue_ocp.pmp.adjoint_rhs`."""
    if traj.adjoints is None:
        raise ValueError("trajectory carries no costates")
    mode = AdjointMode.parse(mode or traj.adjoint_mode or AdjointMode.CORRECTED)
    lam, x, u, h = traj.adjoints, traj.states, traj.u, traj.grid.h
    f_left = adjoint_rhs(x[:-1], u, lam[:-1], p, mode)
    f_right = adjoint_rhs(x[1:], u, lam[1:], p, mode)
    return lam[1:] - lam[:-1] - 0.5 * h * (f_left + f_right)
