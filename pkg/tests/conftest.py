"""Shared scenario builders for the test suite.

Everything is seeded; the random scenarios are smooth desk-scale problems
on the unit interval (or a small rectangle) with boundary-compatible
control channels, so the theory-backed invariants are expected to hold to
the stated tolerances.
"""

import dataclasses

import numpy as np
import pytest

import fpctrl as fp

# Expression pools for random scenarios; all b choices vanish on the boundary
# of [0, 1] so the control channels do not push mass through it.
C_POOL = ["0", "0.3*sin(pi*x)", "0.5*x*(1-x)", "-0.4*sin(pi*x)"]
B_POOL = ["x*(1-x)", "sin(pi*x)", "2*x*(1-x)*(1-x)"]


def normalized_density(grid, profile):
    values = np.asarray(profile, dtype=float)
    values = np.maximum(values, 0.0)
    return values / (values.sum() * grid.cell_volume)


def smooth_positive_profile(grid, rng):
    x = grid.cell_centers
    base = np.ones(grid.n_cells)
    for axis in range(grid.dim):
        L = grid.extent[axis]
        base = base * (1.0 + rng.uniform(-0.6, 0.6) * np.cos(np.pi * x[:, axis] / L)
                       + rng.uniform(-0.3, 0.3) * np.sin(2 * np.pi * x[:, axis] / L) ** 2)
    return normalized_density(grid, base + 0.2)


def random_problem(rng, n=24, nt=32, theta=1.0, scheme="central",
                   tracking=True, gamma=None, beta=None, bounds=(-2.0, 2.0)):
    """Random smooth 1-D control problem on [0, 1]."""
    grid = fp.Grid((1.0,), (n,))
    rho0 = smooth_positive_profile(grid, rng)
    x = grid.cell_centers[:, 0]
    target = 1.0 + rng.uniform(-0.4, 0.4) * np.sin(np.pi * x) + rng.uniform(-0.2, 0.2) * np.cos(2 * np.pi * x)
    spec = fp.ProblemSpec(
        nu=rng.uniform(0.03, 0.15),
        extent=(1.0,),
        T=rng.uniform(0.4, 1.0),
        c_field=str(rng.choice(C_POOL)),
        b_field=str(rng.choice(B_POOL)),
        rho0=rho0,
        rho_Q=target if tracking else None,
        rho_Omega=target if tracking else None,
        alpha_Q=rng.uniform(0.5, 2.0) if tracking else 0.0,
        alpha_Omega=rng.uniform(0.0, 1.0) if tracking else 0.0,
        gamma=[rng.uniform(1e-3, 0.1)] if gamma is None else gamma,
        beta=[rng.uniform(-0.1, 0.1)] if beta is None else beta,
        u_min=bounds[0],
        u_max=bounds[1],
    )
    return fp.ControlProblem.from_spec(spec, grid, nt, theta=theta, flux_scheme=scheme)


def random_feasible_control(problem, rng):
    lo = np.where(np.isfinite(problem.u_min), problem.u_min, -1.0)
    hi = np.where(np.isfinite(problem.u_max), problem.u_max, 1.0)
    return problem.control(lo + rng.random(lo.shape) * (hi - lo))


def random_forward_scenario(rng, dim=1, scheme="central", max_cells=64, max_steps=256,
                            sign_definite_bounds=False):
    """Random forward-solve scenario: returns (ops, control, rho0, theta).

    2-D grids are kept small enough that a full march stays fast; control
    bound intervals are sign-definite when the caller asks for the upwind
    monotonicity guarantees.
    """
    if dim == 1:
        cells = (int(rng.integers(8, max_cells + 1)),)
        extent = (float(rng.uniform(0.5, 2.0)),)
    else:
        cells = tuple(int(n) for n in rng.integers(4, 17, size=2))
        extent = tuple(float(L) for L in rng.uniform(0.5, 1.5, size=2))
    grid = fp.Grid(extent, cells)
    rho0 = smooth_positive_profile(grid, rng)
    nt = int(rng.integers(8, (max_steps if dim == 1 else 64) + 1))
    T = float(rng.uniform(0.3, 1.0))
    theta = float(rng.choice([1.0, 0.5, 0.75]))

    c_parts, b_parts = [], []
    for axis in range(dim):
        L = extent[axis]
        var = "x1" if axis == 0 else "x2"
        c_parts.append(str(rng.choice(["0", f"0.4*sin(pi*{var}/{L})", f"0.3*{var}*({L}-{var})"])))
        b_parts.append(str(rng.choice([f"{var}*({L}-{var})", f"sin(pi*{var}/{L})"])))
    if sign_definite_bounds:
        lo, hi = (0.0, float(rng.uniform(0.5, 2.0))) if rng.random() < 0.5 else (float(-rng.uniform(0.5, 2.0)), 0.0)
    else:
        lo, hi = -1.5, 1.5
    spec = fp.ProblemSpec(nu=float(rng.uniform(0.02, 0.2)), extent=extent, T=T,
                          c_field=c_parts if dim > 1 else c_parts[0],
                          b_field=b_parts if dim > 1 else b_parts[0],
                          rho0=rho0, u_min=lo, u_max=hi)
    report = fp.validate_assumptions(spec, grid)
    ops = fp.assemble(spec, grid, scheme)
    dt = T / nt
    u = fp.ControlTrajectory(rng.uniform(lo, hi, size=(dim, nt)), dt=dt)
    return ops, u, report.rho0, theta


def inverse_crime_setup(n=32, nt=64, gamma=1e-6):
    """Tracking problem whose targets come from a known interior control.

    Returns ``(problem, u_star, f_star)``; by construction the optimal
    value satisfies ``F(min) <= f_star``.
    """
    grid = fp.Grid((1.0,), (n,))
    x = grid.cell_centers[:, 0]
    rho0 = normalized_density(grid, 1.0 + 0.5 * np.cos(np.pi * x))
    base = fp.ProblemSpec(
        nu=0.1, extent=(1.0,), T=1.0, c_field="0", b_field="x*(1-x)",
        rho0=rho0, gamma=[gamma], beta=[0.0], u_min=-1.0, u_max=1.0,
    )
    generator = fp.ControlProblem.from_spec(base, grid, nt)
    t = generator.dt * np.arange(1, nt + 1)
    u_star = generator.control((0.4 + 0.25 * np.sin(2 * np.pi * t)).reshape(1, -1))
    rho_star = generator.solve_state(u_star)
    spec = dataclasses.replace(
        base,
        rho_Q=rho_star.values[:, 1:],
        rho_Omega=rho_star.values[:, -1],
        alpha_Q=1.0,
        alpha_Omega=1.0,
    )
    problem = fp.ControlProblem.from_spec(spec, grid, nt)
    f_star = problem.reduced_cost(u_star)
    return problem, u_star, f_star


@pytest.fixture(scope="session")
def inverse_crime():
    return inverse_crime_setup()


@pytest.fixture(scope="session")
def inverse_crime_solution(inverse_crime):
    problem, u_star, f_star = inverse_crime
    config = fp.OptimizerConfig(max_iters=500, tol_pg=1e-9)
    report = fp.solve_pgd(problem, problem.zero_control(), config)
    return problem, u_star, f_star, report
