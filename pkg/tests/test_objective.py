import numpy as np
import pytest

import fpctrl as fp
from conftest import random_feasible_control, random_problem
from fpctrl.trajectories import control_inner


def decoupled_problem(n=8, nt=16, gamma=1.0, beta=0.0, alpha_Q=0.0, alpha_Omega=0.0,
                      bounds=(-10.0, 10.0), T=1.0):
    """b = 0: the state never sees the control, so F is closed-form in u."""
    grid = fp.Grid((1.0,), (n,))
    spec = fp.ProblemSpec(nu=0.1, extent=(1.0,), T=T, c_field="0", b_field="0",
                          rho0=np.ones(n), rho_Q=np.ones(n), rho_Omega=np.ones(n),
                          alpha_Q=alpha_Q, alpha_Omega=alpha_Omega,
                          gamma=[gamma], beta=[beta], u_min=bounds[0], u_max=bounds[1])
    return fp.ControlProblem.from_spec(spec, grid, nt)


def straight_loop_cost(problem, rho, u):
    """Independent reimplementation of the cost quadratures, plain loops."""
    dt = problem.dt
    vol = problem.ops.grid.cell_volume
    total = 0.0
    for k in range(1, problem.n_steps + 1):
        if problem.alpha_Q != 0.0:
            r = rho.values[:, k] - problem.rho_Q[:, k - 1]
            total += 0.5 * problem.alpha_Q * dt * sum(vol * ri * ri for ri in r)
    if problem.alpha_Omega != 0.0:
        r = rho.values[:, -1] - problem.rho_Omega
        total += 0.5 * problem.alpha_Omega * sum(vol * ri * ri for ri in r)
    for i in range(problem.n_controls):
        for k in range(problem.n_steps):
            total += problem.gamma[i] * dt * u.values[i, k] ** 2
            total += problem.beta[i] * dt * u.values[i, k]
    return total


def test_cost_zero_at_exact_tracking():
    problem = decoupled_problem(alpha_Q=1.0, alpha_Omega=1.0)
    exact = fp.StateTrajectory(np.ones((8, problem.n_steps + 1)), dt=problem.dt)
    assert problem.cost(exact, problem.zero_control()) == 0.0
    # through the solver the uniform density is stationary up to LU roundoff
    assert problem.reduced_cost(problem.zero_control()) <= 1e-30


def test_pure_quadratic_control_cost():
    # gamma=1, u=2 on [0,1]: J = sum_k dt * 4 = 4
    problem = decoupled_problem(gamma=1.0)
    u = problem.control(2.0)
    rho = problem.solve_state(u)
    assert problem.cost(rho, u) == pytest.approx(4.0, rel=1e-14)
    assert problem.reduced_cost(u) == pytest.approx(4.0, rel=1e-14)


def test_cost_matches_straight_loop_oracle():
    rng = np.random.default_rng(20)
    for _ in range(4):
        problem = random_problem(rng, n=14, nt=9)
        u = random_feasible_control(problem, rng)
        rho = problem.solve_state(u)
        fast = problem.cost(rho, u)
        slow = straight_loop_cost(problem, rho, u)
        assert fast == pytest.approx(slow, rel=1e-14)


def test_gradient_decoupled_is_tikhonov_slope():
    # b = 0, beta = 0, gamma = 1: phi = 2u exactly
    problem = decoupled_problem(gamma=1.0)
    rng = np.random.default_rng(21)
    u = problem.control(rng.standard_normal((1, problem.n_steps)))
    phi = problem.gradient(u).values
    np.testing.assert_allclose(phi, 2.0 * u.values, rtol=0, atol=1e-15)


def test_gradient_linear_cost_only():
    # u = 0, alpha_Q = alpha_Omega = 0: the adjoint vanishes and phi = beta
    problem = decoupled_problem(gamma=1.0, beta=0.7)
    phi = problem.gradient(problem.zero_control()).values
    np.testing.assert_allclose(phi, np.full_like(phi, 0.7), rtol=0, atol=1e-15)


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_gradient_matches_central_differences(theta):
    rng = np.random.default_rng(22)
    eps = 1e-5
    for _ in range(4):
        problem = random_problem(rng, n=20, nt=16, theta=theta)
        u = random_feasible_control(problem, rng)
        phi = problem.gradient(u).values
        for _ in range(3):
            v = problem.control(rng.standard_normal(u.values.shape))
            exact = control_inner(phi, v.values, problem.dt)
            fd = (problem.reduced_cost(u.replace(u.values + eps * v.values))
                  - problem.reduced_cost(u.replace(u.values - eps * v.values))) / (2 * eps)
            assert abs(fd - exact) <= 1e-7 * max(abs(fd), 1e-3)


def test_fd_error_v_shape():
    # truncation error falls, then roundoff takes over: the error against the
    # exact gradient is V-shaped in eps
    rng = np.random.default_rng(23)
    problem = random_problem(rng, n=20, nt=16)
    u = random_feasible_control(problem, rng)
    v = problem.control(rng.standard_normal(u.values.shape))
    exact = control_inner(problem.gradient(u).values, v.values, problem.dt)
    errors = []
    for eps in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        fd = (problem.reduced_cost(u.replace(u.values + eps * v.values))
              - problem.reduced_cost(u.replace(u.values - eps * v.values))) / (2 * eps)
        errors.append(abs(fd - exact) / abs(exact))
    best = int(np.argmin(errors))
    assert 0 < best < len(errors) - 1
    assert errors[0] > errors[best] and errors[-1] > errors[best]


def test_first_order_expansion_remainder_is_second_order():
    rng = np.random.default_rng(24)
    problem = random_problem(rng, n=20, nt=16)
    u = random_feasible_control(problem, rng)
    v = problem.control(rng.standard_normal(u.values.shape))
    f0 = problem.reduced_cost(u)
    slope = control_inner(problem.gradient(u).values, v.values, problem.dt)
    remainders = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        f_eps = problem.reduced_cost(u.replace(u.values + eps * v.values))
        remainders.append(abs(f_eps - f0 - eps * slope))
    # halving eps quarters the remainder (slope-2 decay), up to ~20% slack
    assert remainders[1] <= 0.3 * remainders[0]
    assert remainders[2] <= 0.3 * remainders[1]


def test_quadratic_form_tikhonov_only():
    problem = decoupled_problem(gamma=0.8)
    rng = np.random.default_rng(25)
    u = problem.control(rng.standard_normal((1, problem.n_steps)))
    v1 = problem.control(rng.standard_normal((1, problem.n_steps)))
    v2 = problem.control(rng.standard_normal((1, problem.n_steps)))
    expected = 2 * 0.8 * problem.dt * np.sum(v1.values * v2.values)
    assert problem.quadratic_form(u, v1, v2) == pytest.approx(expected, rel=1e-14)


def test_quadratic_form_symmetry():
    rng = np.random.default_rng(26)
    problem = random_problem(rng, n=18, nt=14)
    u = random_feasible_control(problem, rng)
    v1 = problem.control(rng.standard_normal(u.values.shape))
    v2 = problem.control(rng.standard_normal(u.values.shape))
    q12 = problem.quadratic_form(u, v1, v2)
    q21 = problem.quadratic_form(u, v2, v1)
    assert q12 == pytest.approx(q21, rel=1e-12)


def test_quadratic_form_bilinearity():
    rng = np.random.default_rng(27)
    problem = random_problem(rng, n=16, nt=10)
    u = random_feasible_control(problem, rng)
    v1 = problem.control(rng.standard_normal(u.values.shape))
    v2 = problem.control(rng.standard_normal(u.values.shape))
    w = problem.control(rng.standard_normal(u.values.shape))
    lhs = problem.quadratic_form(u, w, v1.replace(2.0 * v1.values + v2.values))
    rhs = 2.0 * problem.quadratic_form(u, w, v1) + problem.quadratic_form(u, w, v2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_quadratic_form_matches_second_differences(theta):
    rng = np.random.default_rng(28)
    problem = random_problem(rng, n=20, nt=16, theta=theta)
    u = random_feasible_control(problem, rng)
    v = problem.control(rng.standard_normal(u.values.shape))
    eps = 1e-3
    qvv = problem.quadratic_form(u, v, v)
    f0 = problem.reduced_cost(u)
    fp_ = problem.reduced_cost(u.replace(u.values + eps * v.values))
    fm_ = problem.reduced_cost(u.replace(u.values - eps * v.values))
    fd2 = (fp_ - 2 * f0 + fm_) / eps**2
    assert fd2 == pytest.approx(qvv, rel=1e-4)


def test_coercivity_floor_without_tracking():
    # alpha = 0: the form reduces to 2*sum_i gamma_i ||v_i||^2 exactly
    problem = decoupled_problem(gamma=0.3)
    rng = np.random.default_rng(29)
    u = problem.control(rng.standard_normal((1, problem.n_steps)))
    for _ in range(5):
        v = problem.control(rng.standard_normal((1, problem.n_steps)))
        norm2 = control_inner(v.values, v.values, problem.dt)
        value = problem.quadratic_form(u, v, v)
        assert value == pytest.approx(2 * 0.3 * norm2, rel=1e-13)
        assert value >= 2 * 0.3 * norm2 * (1 - 1e-13)


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_hessian_vector_consistent_with_quadratic_form(theta):
    rng = np.random.default_rng(30)
    problem = random_problem(rng, n=18, nt=12, theta=theta)
    u = random_feasible_control(problem, rng)
    v1 = problem.control(rng.standard_normal(u.values.shape))
    v2 = problem.control(rng.standard_normal(u.values.shape))
    hv = problem.hessian_vector(u, v2)
    paired = control_inner(v1.values, hv, problem.dt)
    assert paired == pytest.approx(problem.quadratic_form(u, v1, v2), rel=1e-12)


def test_gradient_and_hessian_2d():
    rng = np.random.default_rng(32)
    grid = fp.Grid((1.0, 1.2), (6, 5))
    profile = 1 + 0.3 * np.cos(np.pi * grid.cell_centers[:, 0]) * np.cos(np.pi * grid.cell_centers[:, 1] / 1.2)
    spec = fp.ProblemSpec(
        nu=0.06, extent=(1.0, 1.2), T=0.8,
        c_field=["0.2*sin(pi*x1)", "0"],
        b_field=["x1*(1-x1)", "x2*(1.2-x2)"],
        rho0=profile / (profile.sum() * grid.cell_volume),
        rho_Q=np.ones(30), rho_Omega=np.ones(30),
        alpha_Q=1.0, alpha_Omega=0.5, gamma=[0.02, 0.05], beta=[0.01, -0.02],
        u_min=-1.0, u_max=1.0,
    )
    problem = fp.ControlProblem.from_spec(spec, grid, 10)
    u = problem.control(rng.uniform(-1, 1, size=(2, 10)))
    v = problem.control(rng.standard_normal((2, 10)))
    phi = problem.gradient(u).values
    exact = control_inner(phi, v.values, problem.dt)
    eps = 1e-5
    fd = (problem.reduced_cost(u.replace(u.values + eps * v.values))
          - problem.reduced_cost(u.replace(u.values - eps * v.values))) / (2 * eps)
    assert fd == pytest.approx(exact, rel=1e-7)
    w = problem.control(rng.standard_normal((2, 10)))
    paired = control_inner(w.values, problem.hessian_vector(u, v), problem.dt)
    assert paired == pytest.approx(problem.quadratic_form(u, w, v), rel=1e-12)


def test_evaluation_reuse_matches_fresh_computation():
    rng = np.random.default_rng(31)
    problem = random_problem(rng, n=16, nt=10)
    u = random_feasible_control(problem, rng)
    ev = problem.evaluate(u, need_gradient=False)
    assert ev.phi is None
    problem.complete_gradient(ev)
    np.testing.assert_array_equal(ev.phi, problem.gradient(u).values)
    assert ev.value == problem.reduced_cost(u)


def test_control_wrapping_shapes():
    rng = np.random.default_rng(33)
    problem = random_problem(rng, n=8, nt=6)
    assert problem.control(0.5).values.shape == (1, 6)
    # a length-n_steps vector on a single-channel problem is one trajectory
    traj = problem.control(np.arange(6.0))
    np.testing.assert_array_equal(traj.values, np.arange(6.0).reshape(1, -1))
    with pytest.raises(ValueError, match="cannot interpret"):
        problem.control(np.zeros(4))
