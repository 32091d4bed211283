"""Direct method: piecewise-constant transcription with discrete-adjoint gradients.

The discretized objective is the trapezoidal sum over Crank-Nicolson states.
Its gradient with respect to every interval control is obtained by
reverse accumulation through the step equations ``M_k x_{k+1} = P_k x_k``.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .fbsm import SolveReport, classify_regimes
from .integrate import (ControlPath, Grid, SingularStepError, cn_matrices,
                        integrate_adjoint_backward, integrate_forward)
from .model import (ModelParams, check_control, control_matrix, discount_weights,
                    objective_from_arrays, reward_control_gradient, reward_state_gradient)
from .pmp import AdjointMode

log = logging.getLogger(__name__)

MAX_BRUTE_FORCE = 10 ** 7


class CombinatorialBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class DirectConfig:
    max_iters: int = 5000
    tol_grad: float = 1e-6
    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_guess: Optional[ControlPath] = None

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.tol_grad > 0 or not self.initial_step > 0:
            raise ValueError("tol_grad and initial_step must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink factor must lie in (0, 1), got {self.shrink}")
        if not 0.0 < self.sufficient_decrease <= 0.5:
            raise ValueError(
                f"sufficient-decrease constant must lie in (0, 0.5], got {self.sufficient_decrease}")


@dataclass(frozen=True)
class GradientReport:
    objective: float
    gradient: np.ndarray
    projected_gradient_norm: float
    states: np.ndarray


def projected_gradient(u, g) -> np.ndarray:
    """Ascent components not blocked by an active bound."""
    pg = np.array(g, dtype=float)
    pg[(u <= 0.0) & (pg < 0.0)] = 0.0
    pg[(u >= 1.0) & (pg > 0.0)] = 0.0
    return pg


def project(u) -> np.ndarray:
    return np.clip(u, 0.0, 1.0)


def _forward(u, p):
    grid = Grid.from_params(p)
    h = grid.h
    M, P = cn_matrices(u, h, p)
    try:
        Phi = np.linalg.solve(M, P)
    except np.linalg.LinAlgError as exc:
        raise SingularStepError(f"Crank-Nicolson matrix singular at step size h={h}") from exc
    x = np.empty((u.size + 1, 3))
    x[0] = p.x0
    for k in range(u.size):
        x[k + 1] = Phi[k] @ x[k]
    return grid, M, Phi, x


def objective_and_gradient(controls, p: ModelParams) -> GradientReport:
    """Discrete objective and its exact gradient per interval control."""
    u = np.asarray(getattr(controls, "values", controls), dtype=float)
    u = check_control(u)
    grid, M, Phi, x = _forward(u, p)
    t, h = grid.nodes, grid.h
    J = objective_from_arrays(t, x, u, p)

    w = discount_weights(t, p)
    gx = reward_state_gradient(u, p)
    explicit = np.zeros_like(x)
    explicit[:-1] += 0.5 * h * w[:-1, None] * gx
    explicit[1:] += 0.5 * h * w[1:, None] * gx

    xbar = np.empty_like(x)
    xbar[-1] = explicit[-1]
    for k in range(u.size - 1, -1, -1):
        xbar[k] = Phi[k].T @ xbar[k + 1] + explicit[k]
    # mu_k solves M_k^T mu_k = xbar_{k+1}
    mu = np.linalg.solve(np.swapaxes(M, 1, 2), xbar[1:, :, None])[..., 0]
    B = control_matrix(p)
    through_state = 0.5 * h * np.einsum("ki,ij,kj->k", mu, B, x[:-1] + x[1:])
    direct_term = 0.5 * h * (w[:-1] * reward_control_gradient(x[:-1], u, p)
                             + w[1:] * reward_control_gradient(x[1:], u, p))
    g = through_state + direct_term
    pg = projected_gradient(u, g)
    return GradientReport(J, g, float(np.max(np.abs(pg))), x)


def solve_direct(p: ModelParams, cfg: DirectConfig = DirectConfig(),
                 costate_mode=AdjointMode.CORRECTED):
    """Projected gradient ascent with Armijo backtracking on the box [0, 1]^N.

    Trial steps start from a Barzilai-Borwein estimate (capped below by
    ``cfg.initial_step``) and shrink until the sufficient-increase condition
    holds, so accepted objectives never decrease.
    """
    started = time.perf_counter()
    n = p.n_steps
    if cfg.initial_guess is None:
        u = np.full(n, 0.5)
    else:
        u = project(np.asarray(cfg.initial_guess.resample(n).values, dtype=float))
    rep = objective_and_gradient(u, p)
    history = [rep.objective]
    step = cfg.initial_step
    converged = rep.projected_gradient_norm <= cfg.tol_grad
    message = "converged" if converged else "maximum iterations reached"
    it = 0
    while not converged and it < cfg.max_iters:
        it += 1
        g = rep.gradient
        trial_step = step
        accepted = False
        while trial_step > 1e-16 * max(1.0, step):
            u_trial = project(u + trial_step * g)
            d = u_trial - u
            if not np.any(d):
                break
            trial = objective_and_gradient(u_trial, p)
            if trial.objective >= rep.objective + cfg.sufficient_decrease * float(g @ d):
                accepted = True
                break
            trial_step *= cfg.shrink
        if not accepted:
            message = f"line search failed (last step {trial_step:.3e})"
            break
        s_vec = u_trial - u
        y_vec = trial.gradient - g
        sy = float(s_vec @ y_vec)
        # ascent on a concave-ish objective: curvature -s.y > 0 gives the BB step
        step = float(s_vec @ s_vec) / -sy if sy < 0 else cfg.initial_step * 10.0
        step = min(max(step, cfg.initial_step), 1e8)
        u, rep = u_trial, trial
        history.append(rep.objective)
        converged = rep.projected_gradient_norm <= cfg.tol_grad
        if converged:
            message = "converged"
    if not converged:
        log.warning("direct solve stopped: %s (projected gradient %.3e)",
                    message, rep.projected_gradient_norm)
    traj = integrate_adjoint_backward(integrate_forward(ControlPath(u), p), p, costate_mode)
    report = SolveReport(
        method="direct",
        objective=rep.objective,
        iterations=it,
        converged=converged,
        final_control_delta=rep.projected_gradient_norm,
        regimes=classify_regimes(traj),
        wall_time=time.perf_counter() - started,
        message=message,
        history=history,
    )
    return traj, report


def segment_bounds(n: int, n_segments: int) -> np.ndarray:
    """Node indices splitting ``n`` intervals into ``n_segments`` near-equal pieces."""
    return np.rint(np.linspace(0, n, n_segments + 1)).astype(int)


def _segment_operator(a, b, u, M, P, w, h, p):
    """Affine objective contribution and state transition of one constant-control segment."""
    Phi = np.linalg.solve(M, P)
    c = reward_state_gradient(np.asarray(u), p)
    d = -(p.c1 * u + p.c2 * u * u)
    X = np.eye(3)
    coef = np.zeros(3)
    const = 0.0
    for k in range(a, b):
        Xn = Phi @ X
        coef += 0.5 * h * (w[k] * (c @ X) + w[k + 1] * (c @ Xn))
        const += 0.5 * h * (w[k] + w[k + 1]) * d
        X = Xn
    return coef, const, X


def brute_force(p: ModelParams, n_segments: int, levels: int):
    """Exhaustive search over piecewise-constant controls with uniform levels.

    Evaluates the same discretized objective as :func:`objective_and_gradient`
    for every control that is constant on each of ``n_segments`` equal pieces
    of the fine grid and takes values ``linspace(0, 1, levels)``.
    """
    if n_segments < 1 or levels < 2:
        raise ValueError("need at least one segment and two levels")
    if levels ** n_segments > MAX_BRUTE_FORCE:
        raise CombinatorialBudgetError(
            f"{levels}^{n_segments} candidates exceed the budget of {MAX_BRUTE_FORCE}")
    grid = Grid.from_params(p)
    h = grid.h
    w = discount_weights(grid.nodes, p)
    bounds = segment_bounds(grid.n, n_segments)
    values = np.linspace(0.0, 1.0, levels)
    ops = []
    for i in range(n_segments):
        a, b = bounds[i], bounds[i + 1]
        row = []
        for v in values:
            M, P = cn_matrices(np.array(v), h, p)
            row.append(_segment_operator(a, b, v, M, P, w, h, p))
        ops.append(row)

    # breadth-first expansion over segments: every candidate keeps its state and value
    x = p.x0[None, :]
    J = np.zeros(1)
    for i in range(n_segments):
        coefs = np.stack([op[0] for op in ops[i]])
        consts = np.array([op[1] for op in ops[i]])
        trans = np.stack([op[2] for op in ops[i]])
        J = (J[:, None] + x @ coefs.T + consts[None, :]).reshape(-1)
        x = np.einsum("lij,cj->cli", trans, x).reshape(-1, 3)
    best = int(np.argmax(J))
    choice = np.unravel_index(best, (levels,) * n_segments)
    u = np.empty(grid.n)
    for i, lev in enumerate(choice):
        u[bounds[i]:bounds[i + 1]] = values[lev]
    return ControlPath(u), float(J[best])


def enumerate_controls(n_segments: int, levels: int):
    """Yield every segment-level tuple in lexicographic order."""
    values = np.linspace(0.0, 1.0, levels)
    for combo in itertools.product(range(levels), repeat=n_segments):
        yield tuple(values[i] for i in combo)
