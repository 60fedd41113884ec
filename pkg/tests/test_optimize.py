import numpy as np
import pytest

import fpctrl as fp
from conftest import inverse_crime_setup, random_feasible_control, random_problem
from fpctrl.optimize import ACTIVE_LOWER, ACTIVE_UPPER, INACTIVE
from test_objective import decoupled_problem


def test_project_behaviour():
    u = fp.ControlTrajectory(np.array([[0.5, 5.0, -3.0]]), dt=0.1)
    p = fp.project(u, -1.0, 1.0)
    np.testing.assert_array_equal(p.values, [[0.5, 1.0, -1.0]])
    # idempotence on random data
    rng = np.random.default_rng(40)
    w = fp.ControlTrajectory(rng.standard_normal((2, 7)) * 4, dt=0.1)
    lo, hi = np.array([-1.0, 0.0]), np.array([1.0, 2.0])
    once = fp.project(w, lo, hi)
    twice = fp.project(once, lo, hi)
    np.testing.assert_array_equal(once.values, twice.values)
    assert np.all(once.values >= lo.reshape(-1, 1)) and np.all(once.values <= hi.reshape(-1, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        fp.OptimizerConfig(method="bfgs")
    with pytest.raises(ValueError):
        fp.OptimizerConfig(armijo_c=1.5)
    with pytest.raises(ValueError):
        fp.OptimizerConfig(backtrack=0.0)
    with pytest.raises(ValueError):
        fp.OptimizerConfig(tol_pg=-1.0)


def test_pgd_decoupled_quadratic_reaches_origin():
    problem = decoupled_problem(gamma=1.0, bounds=(-1.0, 1.0))
    report = fp.solve_pgd(problem, problem.control(0.5))
    assert report.termination == "converged"
    assert np.abs(report.u.values).max() <= 1e-8
    assert report.f_history == sorted(report.f_history, reverse=True)


def test_pgd_linear_term_shifts_minimizer():
    # min u^2 + 2u -> u = -1 on every step
    problem = decoupled_problem(gamma=1.0, beta=2.0, bounds=(-10.0, 10.0))
    report = fp.solve_pgd(problem, problem.zero_control())
    assert report.termination == "converged"
    assert np.abs(report.u.values + 1.0).max() <= 1e-8


def test_pgd_iterates_stay_feasible():
    rng = np.random.default_rng(41)
    problem = random_problem(rng, n=16, nt=12, bounds=(-0.3, 0.3))
    report = fp.solve_pgd(problem, problem.control(5.0), fp.OptimizerConfig(max_iters=15))
    assert np.all(report.u.values >= problem.u_min - 0.0)
    assert np.all(report.u.values <= problem.u_max + 0.0)
    # monotone descent on accepted steps
    diffs = np.diff(report.f_history)
    assert np.all(diffs < 0)


def test_kkt_interior_optimum():
    problem = decoupled_problem(gamma=1.0, beta=2.0, bounds=(-10.0, 10.0))
    report = fp.solve_pgd(problem, problem.zero_control())
    kkt = report.kkt
    assert np.all(kkt.classification == INACTIVE)
    assert kkt.stationarity_residual <= 1e-8
    assert kkt.complementarity_violation == 0.0


def test_kkt_pinned_at_upper_bound():
    problem = decoupled_problem(gamma=0.0, beta=-1.0, bounds=(-1.0, 1.0))
    # beta < 0 drives u to the upper bound; phi = beta < 0 everywhere
    u = problem.control(1.0)
    kkt = fp.kkt_report(problem, u)
    assert np.all(kkt.classification == ACTIVE_UPPER)
    assert kkt.complementarity_violation == 0.0
    assert kkt.projected_gradient_norm == 0.0


def test_kkt_wrong_sign_counts_as_violation():
    problem = decoupled_problem(gamma=0.0, beta=1.0, bounds=(-1.0, 1.0))
    # at the upper bound with phi = beta > 0 the switching rule is violated
    kkt = fp.kkt_report(problem, problem.control(1.0))
    assert np.all(kkt.classification == ACTIVE_UPPER)
    assert kkt.complementarity_violation == pytest.approx(1.0)


def test_fixed_point_characterization():
    # u = P(u - s*phi) for every s>0 iff the switching structure holds
    problem = decoupled_problem(gamma=1.0, beta=2.0, bounds=(-0.5, 10.0))
    # constrained stationary point: unconstrained minimizer -1 clips to -0.5
    u = problem.control(-0.5)
    phi = problem.gradient(u).values
    for s in (0.5, 1.0, 7.0):
        proj = np.clip(u.values - s * phi, problem.u_min, problem.u_max)
        np.testing.assert_allclose(proj, u.values, atol=1e-15)
    kkt = fp.kkt_report(problem, u)
    assert np.all(kkt.classification == ACTIVE_LOWER)
    assert kkt.complementarity_violation == 0.0
    assert kkt.projected_gradient_norm <= 1e-15


def test_pncg_newton_solves_quadratic_in_one_step():
    problem = decoupled_problem(gamma=1.0, bounds=(-1.0, 1.0))
    report = fp.solve_pncg(problem, problem.control(0.5))
    assert report.termination == "converged"
    assert len(report.step_history) == 1  # one accepted Newton step
    assert np.abs(report.u.values).max() <= 1e-12


def test_pncg_requires_positive_tikhonov():
    problem = decoupled_problem(gamma=0.0)
    with pytest.raises(ValueError, match="gamma"):
        fp.solve_pncg(problem, problem.zero_control())


def test_pncg_fully_active_face():
    # large positive linear cost with bounds [0, 1]: everything pins at the
    # lower bound and the Newton set empties out
    problem = decoupled_problem(gamma=1.0, beta=5.0, bounds=(0.0, 1.0))
    report = fp.solve_pncg(problem, problem.control(0.5))
    assert report.termination == "converged"
    assert np.all(report.u.values == 0.0)
    assert np.all(report.kkt.classification == ACTIVE_LOWER)
    assert report.kkt.complementarity_violation == 0.0


def test_small_inverse_crime_recovery_and_method_agreement():
    problem, u_star, f_star = inverse_crime_setup(n=16, nt=24, gamma=1e-6)
    config = fp.OptimizerConfig(max_iters=500, tol_pg=1e-9)
    pgd = fp.solve_pgd(problem, problem.zero_control(), config)
    assert pgd.termination == "converged"
    assert pgd.f_final <= f_star + 1e-10
    assert pgd.kkt.stationarity_residual <= 1e-6
    pncg = fp.solve_pncg(problem, problem.zero_control(), config)
    assert pncg.termination == "converged"
    assert pncg.f_final == pytest.approx(pgd.f_final, abs=1e-9)
    assert pncg.n_iters < pgd.n_iters


def test_sonc_probe_tikhonov_only_is_positive():
    problem = decoupled_problem(gamma=0.5, bounds=(-1.0, 1.0))
    report = fp.solve_pgd(problem, problem.control(0.3))
    probe = fp.sonc_probe(problem, report.u, n_samples=25, rng_seed=1)
    assert not probe.degenerate
    # every unit direction evaluates to exactly 2*gamma
    np.testing.assert_allclose(probe.values, 2 * 0.5, rtol=1e-12)
    assert probe.min_value >= 2 * 0.5 * (1 - 1e-12)


def test_sonc_probe_degenerate_cone():
    # fully pinned with |phi| > eps everywhere: the critical cone is {0}
    problem = decoupled_problem(gamma=0.0, beta=1.0, bounds=(0.0, 1.0))
    probe = fp.sonc_probe(problem, problem.zero_control(), n_samples=5, rng_seed=2)
    assert probe.degenerate
    assert probe.min_value == np.inf


def test_sonc_probe_signs_respect_cone():
    problem = decoupled_problem(gamma=1.0, beta=2.0, bounds=(-0.5, 10.0))
    u = problem.control(-0.5)  # active lower face, phi = 2u+beta = 1 > 0 there
    probe = fp.sonc_probe(problem, u, n_samples=10, rng_seed=3)
    # phi = 1 > eps everywhere: all coordinates are forced to zero
    assert probe.degenerate


def test_sonc_probe_determinism():
    rng = np.random.default_rng(44)
    problem = random_problem(rng, n=14, nt=10, gamma=[0.05])
    u = random_feasible_control(problem, rng)
    a = fp.sonc_probe(problem, u, n_samples=8, rng_seed=9)
    b = fp.sonc_probe(problem, u, n_samples=8, rng_seed=9)
    np.testing.assert_array_equal(a.values, b.values)


def test_sonc_probe_at_recovery_optimum_matches_fd_oracle():
    problem, _, _ = inverse_crime_setup(n=16, nt=24, gamma=1e-6)
    report = fp.solve_pgd(problem, problem.zero_control(),
                          fp.OptimizerConfig(max_iters=500, tol_pg=1e-9))
    probe = fp.sonc_probe(problem, report.u, n_samples=20, rng_seed=5)
    assert not probe.degenerate
    # tracking curvature dominates, so the Tikhonov floor holds with room
    assert probe.min_value >= 2 * 1e-6 * (1 - 1e-6)
    # each probe value is a true second derivative: second differences agree
    u_bar = report.u
    f0 = problem.reduced_cost(u_bar)
    eps = 1e-3
    v = probe.argmin_direction
    fd2 = (problem.reduced_cost(u_bar.replace(u_bar.values + eps * v.values)) - 2 * f0
           + problem.reduced_cost(u_bar.replace(u_bar.values - eps * v.values))) / eps**2
    assert fd2 == pytest.approx(probe.min_value, rel=1e-3)
