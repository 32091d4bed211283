import numpy as np
import pytest
from scipy.linalg import expm

from residue_ocp import (AdjointMode, ControlPath, Grid, ModelError, ModelParams, Scheme,
                         crank_nicolson_step, integrate_adjoint_backward, integrate_forward, rk4_step)
from residue_ocp.integrate import SingularStepError, adjoint_step_residuals, system_matrices
from residue_ocp.model import state_rhs, system_matrix
from residue_ocp.pmp import adjoint_forcing, adjoint_matrix, adjoint_rhs

X1 = np.array([1.0, 0.5, 0.0])


def exact_flow(u, T, p, x0):
    return expm(system_matrix(u, p) * T) @ x0


def test_grid():
    g = Grid(0.0, 25.0, 2000)
    assert g.h == 0.0125
    nodes = g.nodes
    assert nodes.size == 2001 and nodes[0] == 0.0 and nodes[-1] == pytest.approx(25.0, abs=1e-12)
    np.testing.assert_allclose(np.diff(nodes), 0.0125, rtol=1e-12)
    with pytest.raises(ModelError):
        Grid(1.0, 1.0, 10)
    with pytest.raises(ModelError):
        Grid(0.0, 1.0, 1)


def test_control_path_validation():
    with pytest.raises(ModelError):
        ControlPath([0.2, 1.5])
    path = ControlPath([0.0, 1.0 + 1e-14])
    assert path.values[1] == 1.0
    with pytest.raises(ValueError):
        path.values[0] = 0.3


def test_control_path_resample():
    path = ControlPath([0.0, 1.0])
    np.testing.assert_array_equal(path.resample(4).values, [0, 0, 1, 1])


@pytest.mark.parametrize("step", [rk4_step, crank_nicolson_step])
def test_origin_is_fixed(base, step):
    for u in (0.0, 0.7, 1.0):
        assert np.all(step(np.zeros(3), u, 0.1, base) == 0.0)


def test_rk4_step_against_fine_euler(base):
    h = 0.0125
    y = X1.copy()
    n_sub = 10000
    for _ in range(n_sub):
        y = y + (h / n_sub) * state_rhs(y, 0.0, base)
    assert np.max(np.abs(rk4_step(X1, 0.0, h, base) - y)) < 1e-8
    np.testing.assert_allclose(rk4_step(X1, 0.0, h, base), exact_flow(0.0, h, base, X1), atol=1e-13)


def test_rk4_global_order(base):
    ref = exact_flow(0.5, base.horizon, base, base.x0)
    errs = []
    for n in (50, 100):
        traj = integrate_forward(ControlPath.constant(0.5, n), base.with_(n_steps=n), Scheme.RK4)
        errs.append(np.max(np.abs(traj.states[-1] - ref)))
    assert 14.0 < errs[0] / errs[1] < 18.0


def test_cn_local_consistency_with_rk4(base):
    gaps = [np.max(np.abs(crank_nicolson_step(X1, 0.3, h, base) - rk4_step(X1, 0.3, h, base)))
            for h in (0.4, 0.2, 0.1)]
    # local difference O(h^3): halving h divides by ~8
    for a, b in zip(gaps, gaps[1:]):
        assert 7.0 < a / b < 9.0


def test_cn_step_solves_trapezoid_equation(base):
    h = 0.3
    x_new = crank_nicolson_step(X1, 0.4, h, base)
    resid = x_new - X1 - 0.5 * h * (state_rhs(X1, 0.4, base) + state_rhs(x_new, 0.4, base))
    assert np.max(np.abs(resid)) < 1e-14


def test_cn_singular_step():
    # A(0) has the exact eigenvalue 0.5, so I - (h/2) A is singular at h = 4
    p = ModelParams(alpha=1.0, rho=1.0, delta_S=0.5, gamma=0.5, theta=0.0)
    with pytest.raises(SingularStepError, match="h=4"):
        crank_nicolson_step(X1, 0.0, 4.0, p)


def test_system_matrix_at_full_diversion(base):
    A = system_matrix(1.0, base)
    np.testing.assert_allclose(A[0], [-0.05, 0.0, 0.2])
    np.testing.assert_allclose(A[1], [0.5, -0.2, 0.0])
    np.testing.assert_allclose(A[2], [0.0, 0.35, -0.03])
    np.testing.assert_allclose(system_matrices(np.array([1.0, 0.0]), base)[0], A)


def test_forward_zero_control_keeps_energy_zero(base):
    traj = integrate_forward(ControlPath.constant(0.0, base.n_steps), base)
    assert np.all(traj.states[:, 2] == 0.0)
    assert traj.states.shape == (base.n_steps + 1, 3)


def test_forward_soil_direction(base):
    up = integrate_forward(ControlPath.constant(0.0, base.n_steps), base).states
    down = integrate_forward(ControlPath.constant(1.0, base.n_steps), base).states
    assert up[1, 0] > up[0, 0]
    assert down[1, 0] < down[0, 0]


def test_cn_vs_rk4_trajectories(base):
    cn = integrate_forward(ControlPath.constant(0.5, base.n_steps), base).states
    rk = integrate_forward(ControlPath.constant(0.5, base.n_steps), base, Scheme.RK4).states
    # node 0 is shared exactly (and E(0) = 0)
    assert np.max(np.abs(cn[1:] - rk[1:]) / np.abs(rk[1:])) < 1e-5


def test_forward_length_mismatch(base):
    with pytest.raises(ModelError):
        integrate_forward(ControlPath.constant(0.5, 10), base)


def test_cn_second_order_globally(base):
    ref = exact_flow(0.5, base.horizon, base, base.x0)
    errs = [np.linalg.norm(integrate_forward(ControlPath.constant(0.5, n),
                                             base.with_(n_steps=n)).states[-1] - ref)
            for n in (250, 500, 1000)]
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


def test_forward_invariance_random_controls(base, rng):
    for _ in range(40):
        k = rng.integers(1, 40)
        pieces = rng.uniform(0, 1, k)
        u = np.repeat(pieces, -(-base.n_steps // k))[:base.n_steps]
        x = integrate_forward(ControlPath(u), base).states
        assert np.all(np.isfinite(x)) and x.min() >= -1e-10


@pytest.mark.parametrize("mode", list(AdjointMode))
def test_adjoint_terminal_condition(base, mode, rng):
    traj = integrate_forward(ControlPath(rng.uniform(0, 1, base.n_steps)), base)
    out = integrate_adjoint_backward(traj, base, mode)
    assert np.all(out.adjoints[-1] == 0.0)
    assert out.adjoint_mode is mode
    assert out.switching.shape == (base.n_steps + 1,)


def test_adjoint_terminal_slopes(base):
    x = np.array([3.0, 2.0, 1.0])
    corrected = adjoint_rhs(x, 0.4, np.zeros(3), base, AdjointMode.CORRECTED)
    paper = adjoint_rhs(x, 0.4, np.zeros(3), base, AdjointMode.PAPER_EQ9)
    assert corrected[0] == pytest.approx(-0.8)
    assert corrected[2] == pytest.approx(0.03)
    assert paper[2] == 0.0


@pytest.mark.parametrize("mode", list(AdjointMode))
def test_adjoint_step_residuals(base, mode, rng):
    traj = integrate_forward(ControlPath(rng.uniform(0, 1, base.n_steps)), base)
    out = integrate_adjoint_backward(traj, base, mode)
    assert np.max(np.abs(adjoint_step_residuals(out, base))) < 1e-10


def test_adjoint_converges_to_exact_costate(base):
    # constant control: lam' = K lam - q has a closed-form backward solution
    u = 0.5
    K = adjoint_matrix(u, base, AdjointMode.CORRECTED)
    q = adjoint_forcing(u, base, AdjointMode.CORRECTED)
    lam_star = np.linalg.solve(K, q)  # equilibrium
    exact0 = lam_star - expm(-K * base.horizon) @ lam_star
    errs = []
    for n in (500, 1000):
        p = base.with_(n_steps=n)
        traj = integrate_adjoint_backward(integrate_forward(ControlPath.constant(u, n), p), p)
        errs.append(np.max(np.abs(traj.adjoints[0] - exact0)))
    assert errs[1] < 1e-3 * np.max(np.abs(exact0))
    assert 3.5 < errs[0] / errs[1] < 4.5
