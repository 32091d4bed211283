"""Problem data, state dynamics and the discounted objective.

The three-state system tracks soil organic matter ``s``, residue biomass ``r``
and cumulative energy ``e``.  A single control ``u`` in [0, 1] is the fraction
of residue diverted to energy production.  For a fixed control the dynamics
are linear in the state::

    ds/dt = alpha (1 - u) r - delta_S s + theta e
    dr/dt = eta(s) - gamma r
    de/dt = beta u r - delta_E e

with ``eta(s) = rho s``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

U_TOL = 1e-12


class ModelError(ValueError):
    """Invalid parameters or inputs handed to the model."""


class ProductivityKind(enum.Enum):
    LINEAR = "linear"


@dataclass(frozen=True)
class ProductivityFn:
    """Residue productivity as a function of soil fertility.

    Only the linear form ``eta(s) = rho * s`` is available; the kind field
    leaves room for saturating variants.
    """

    rho: float
    kind: ProductivityKind = ProductivityKind.LINEAR

    def __call__(self, s):
        return self.rho * s

    def derivative(self, s):
        return self.rho + 0.0 * np.asarray(s, dtype=float)


class State(NamedTuple):
    s: float
    r: float
    e: float


@dataclass(frozen=True)
class ModelParams:
    """Biophysical and economic coefficients plus horizon and grid size.

    Defaults reproduce the baseline calibration (25-year horizon, 2000 steps,
    initial state ``(1.0, 0.5, 0.0)``).
    """

    alpha: float = 0.25
    delta_S: float = 0.05
    rho: float = 0.5
    gamma: float = 0.2
    beta: float = 0.35
    delta_E: float = 0.03
    theta: float = 0.2
    discount: float = 0.02
    p_E: float = 1.0
    p_S: float = 0.8
    c1: float = 0.8
    c2: float = 1.0
    horizon: float = 25.0
    n_steps: int = 2000
    s0: float = 1.0
    r0: float = 0.5
    e0: float = 0.0

    def __post_init__(self):
        positive = ("alpha", "delta_S", "rho", "gamma", "beta", "discount",
                    "p_E", "p_S", "c1", "c2", "horizon")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ModelError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("theta", "delta_E", "e0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ModelError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("s0", "r0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ModelError(f"{name} must be finite and > 0, got {value!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ModelError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def productivity(self) -> ProductivityFn:
        return ProductivityFn(self.rho)

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def x0(self) -> np.ndarray:
        return np.array([self.s0, self.r0, self.e0])

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def check_control(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ModelError("control contains non-finite values")
    if np.any(u < -U_TOL) or np.any(u > 1 + U_TOL):
        raise ModelError(f"control outside [0, 1]: range [{u.min()}, {u.max()}]")
    return np.clip(u, 0.0, 1.0)


def _check_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ModelError("state contains non-finite values")
    return x


def system_matrix(u: float, p: ModelParams) -> np.ndarray:
    """3x3 matrix ``A(u)`` with ``dx/dt = A(u) x`` for the linear productivity."""
    return np.array([
        [-p.delta_S, p.alpha * (1.0 - u), p.theta],
        [p.rho, -p.gamma, 0.0],
        [0.0, p.beta * u, -p.delta_E],
    ])


def control_matrix(p: ModelParams) -> np.ndarray:
    """Derivative of ``A(u)`` with respect to ``u``."""
    return np.array([
        [0.0, -p.alpha, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, p.beta, 0.0],
    ])


def state_rhs(x, u, p: ModelParams) -> np.ndarray:
    """Time derivative ``(ds, dr, de)``.

    ``x`` may be a single state of shape (3,) or a batch of shape (..., 3)
    with ``u`` broadcasting against the leading dimensions.
    """
    x = _check_state(x)
    u = check_control(u)
    s, r, e = x[..., 0], x[..., 1], x[..., 2]
    ds = p.alpha * (1.0 - u) * r - p.delta_S * s + p.theta * e
    dr = p.productivity(s) - p.gamma * r
    de = p.beta * u * r - p.delta_E * e
    return np.stack(np.broadcast_arrays(ds, dr, de), axis=-1)


def cost(u, p: ModelParams):
    """Operating cost ``c1 u + c2 u^2`` of diverting residue."""
    return p.c1 * u + p.c2 * u * u


def running_reward(x, u, p: ModelParams):
    """Undiscounted reward rate with the energy rate substituted from the dynamics."""
    x = _check_state(x)
    u = check_control(u)
    s, r, e = x[..., 0], x[..., 1], x[..., 2]
    energy_rate = p.beta * u * r - p.delta_E * e
    return p.p_E * energy_rate + p.p_S * s - cost(u, p)


def reward_state_gradient(u, p: ModelParams) -> np.ndarray:
    """Gradient of the running reward with respect to ``(s, r, e)``."""
    u = np.asarray(u, dtype=float)
    return np.stack(np.broadcast_arrays(
        np.full_like(u, p.p_S), p.p_E * p.beta * u, np.full_like(u, -p.p_E * p.delta_E)
    ), axis=-1)


def reward_control_gradient(x, u, p: ModelParams):
    """Partial derivative of the running reward with respect to ``u``."""
    r = np.asarray(x)[..., 1]
    return p.p_E * p.beta * r - p.c1 - 2.0 * p.c2 * u


def discount_weights(t, p: ModelParams) -> np.ndarray:
    return np.exp(-p.discount * np.asarray(t, dtype=float))


def objective_from_arrays(t, states, controls, p: ModelParams) -> float:
    """Trapezoidal discounted objective for left-aligned piecewise-constant controls.

    Each interval ``[t_k, t_{k+1}]`` is integrated with its own control value at
    both end nodes, which mirrors the Crank-Nicolson step equations.
    """
    t = np.asarray(t, dtype=float)
    states = np.asarray(states, dtype=float)
    controls = check_control(controls)
    if states.shape != (t.size, 3) or controls.shape != (t.size - 1,):
        raise ModelError(
            f"grid mismatch: {t.size} nodes, states {states.shape}, controls {controls.shape}")
    w = discount_weights(t, p)
    dt = np.diff(t)
    left = w[:-1] * running_reward(states[:-1], controls, p)
    right = w[1:] * running_reward(states[1:], controls, p)
    return float(np.sum(0.5 * dt * (left + right)))


def objective(traj, p: ModelParams) -> float:
    """Discounted objective of a :class:`~residue_ocp.integrate.Trajectory`."""
    if traj.states.shape[0] != p.n_steps + 1:
        raise ModelError(
            f"grid mismatch: trajectory has {traj.states.shape[0]} nodes, "
            f"params expect {p.n_steps + 1}")
    return objective_from_arrays(traj.grid.nodes, traj.states, traj.controls.values, p)
