"""Optimal allocation of crop residue between soil return and bioenergy.

Three-state soil / residue / energy dynamics with energy reinvestment into
soil, solved by a forward-backward sweep on the Pontryagin conditions and by
a direct projected-gradient method with exact discrete-adjoint gradients.
"""

from .direct import DirectConfig, GradientReport, brute_force, objective_and_gradient, solve_direct
from .fbsm import (NonConvergence, Regime, RegimeKind, SolveReport, SweepConfig,
                   classify_regimes, match_regimes, solve_fbsm)
from .integrate import (ControlPath, Grid, Scheme, Trajectory, crank_nicolson_step,
                        integrate_adjoint_backward, integrate_forward, rk4_step)
from .model import (ModelError, ModelParams, ProductivityFn, State, objective,
                    running_reward, state_rhs)
from .pmp import (Adjoint, AdjointMode, HamiltonianParts, adjoint_rhs, hamiltonian,
                  hamiltonian_parts, optimal_control, switching_coefficient)
from .scenarios import Scenario, SolverSettings, builtin_scenarios, run_scenarios, sweep

__version__ = "0.1.0"
