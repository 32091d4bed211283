"""Current-value Hamiltonian, switching coefficient and the optimal control map.

Two costate systems are available through :class:`AdjointMode`:

``PAPER_EQ9``
    The published costate equations taken verbatim.  Their residue line
    carries ``-lam_s * alpha * (1 - u)`` and their energy line has no
    ``p_E * delta_E`` forcing, so they are not the exact stationarity system
    of the objective being maximized.
``CORRECTED``
    ``dlam/dt = discount * lam - dH/dx`` for the Hamiltonian of the full
    objective, in which the running payoff includes ``-p_E * delta_E * e``.

The switching coefficient and the control law are shared by both modes.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .model import ModelParams, check_control, cost, system_matrix


class AdjointMode(enum.Enum):
    PAPER_EQ9 = "paper"
    CORRECTED = "corrected"

    @classmethod
    def parse(cls, value) -> "AdjointMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown adjoint mode {value!r}; expected 'paper' or 'corrected'") from None


class Adjoint(NamedTuple):
    lam_s: float
    lam_r: float
    lam_e: float


class HamiltonianParts(NamedTuple):
    """``H(u) = h_base + h_tilde * u * r - C(u)``."""

    h_base: float
    h_tilde: float


def switching_coefficient(lam, p: ModelParams):
    """Marginal value multiplier ``p_E beta - lam_s alpha + lam_e beta``.

    Vectorized over a trailing costate axis of length 3.
    """
    lam = np.asarray(lam, dtype=float)
    return p.p_E * p.beta - lam[..., 0] * p.alpha + lam[..., 2] * p.beta


def optimal_control(h_tilde, r, p: ModelParams):
    """Maximizer of the Hamiltonian over ``u`` in [0, 1].

    The Hamiltonian is a concave quadratic in ``u``; its stationary point
    ``(h_tilde r - c1) / (2 c2)`` clamped to the box is the exact argmax.
    Returns 0 whenever ``h_tilde * r <= c1``.
    """
    signal = np.asarray(h_tilde, dtype=float) * np.asarray(r, dtype=float) - p.c1
    u = np.where(signal <= 0.0, 0.0, np.minimum(signal / (2.0 * p.c2), 1.0))
    return u if u.ndim else float(u)


def switching_function(lam, x, p: ModelParams):
    """``h_tilde * r - c1``; positive exactly where some residue is diverted."""
    x = np.asarray(x, dtype=float)
    return switching_coefficient(lam, p) * x[..., 1] - p.c1


def _payoff(x, u, p: ModelParams, mode: AdjointMode):
    s, r, e = x[..., 0], x[..., 1], x[..., 2]
    payoff = p.p_E * p.beta * u * r + p.p_S * s - cost(u, p)
    if mode is AdjointMode.CORRECTED:
        payoff = payoff - p.p_E * p.delta_E * e
    return payoff


def hamiltonian(x, u, lam, p: ModelParams, mode=AdjointMode.CORRECTED):
    """Current-value Hamiltonian.

    Paper mode is the published expression; corrected mode adds the
    ``-p_E delta_E e`` running-payoff term implied by the objective.
    """
    mode = AdjointMode.parse(mode)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = check_control(u)
    s, r, e = x[..., 0], x[..., 1], x[..., 2]
    ls, lr, le = lam[..., 0], lam[..., 1], lam[..., 2]
    dyn = (ls * (p.alpha * (1.0 - u) * r - p.delta_S * s + p.theta * e)
           + lr * (p.productivity(s) - p.gamma * r)
           + le * (p.beta * u * r - p.delta_E * e))
    return _payoff(x, u, p, mode) + dyn


def hamiltonian_parts(x, lam, p: ModelParams, mode=AdjointMode.PAPER_EQ9) -> HamiltonianParts:
    """Split ``H`` into its control-free part and the switching coefficient.

    ``h_base`` is defined as ``H(u=0) + C(0)``, so the decomposition is exact.
    """
    h_base = hamiltonian(x, 0.0, lam, p, mode) + cost(0.0, p)
    return HamiltonianParts(h_base, switching_coefficient(lam, p))


def adjoint_matrix(u: float, p: ModelParams, mode: AdjointMode) -> np.ndarray:
    """Matrix ``K`` with ``dlam/dt = K lam - q`` (see :func:`adjoint_forcing`)."""
    mode = AdjointMode.parse(mode)
    K = p.discount * np.eye(3) - system_matrix(u, p).T
    if mode is AdjointMode.PAPER_EQ9:
        # published residue line: + lam_s alpha (1 - u) instead of - lam_s alpha (1 - u)
        K[1, 0] = -K[1, 0]
    return K


def adjoint_forcing(u, p: ModelParams, mode: AdjointMode) -> np.ndarray:
    """Constant part ``q`` of the costate right-hand side (the payoff gradient)."""
    mode = AdjointMode.parse(mode)
    u = np.asarray(u, dtype=float)
    e_term = -p.p_E * p.delta_E if mode is AdjointMode.CORRECTED else 0.0
    return np.stack(np.broadcast_arrays(
        np.full_like(u, p.p_S), p.p_E * p.beta * u, np.full_like(u, e_term)
    ), axis=-1)


def adjoint_rhs(x, u, lam, p: ModelParams, mode=AdjointMode.CORRECTED) -> np.ndarray:
    """Costate time derivative in current-value form."""
    mode = AdjointMode.parse(mode)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = check_control(u)
    ls, lr, le = lam[..., 0], lam[..., 1], lam[..., 2]
    eta_prime = p.productivity.derivative(x[..., 0])
    d = p.discount
    d_s = d * ls - (p.p_S - ls * p.delta_S + lr * eta_prime)
    if mode is AdjointMode.PAPER_EQ9:
        d_r = d * lr - ((p.p_E + le) * p.beta * u - ls * p.alpha * (1.0 - u) - lr * p.gamma)
        d_e = d * le - (p.theta * ls - le * p.delta_E)
    else:
        d_r = d * lr - ((p.p_E + le) * p.beta * u + ls * p.alpha * (1.0 - u) - lr * p.gamma)
        d_e = d * le - (-p.p_E * p.delta_E + ls * p.theta - le * p.delta_E)
    return np.stack(np.broadcast_arrays(d_s, d_r, d_e), axis=-1)
