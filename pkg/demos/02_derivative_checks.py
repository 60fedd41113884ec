"""Why the gradients here survive finite-difference interrogation.

The reduced cost F(u) composes a time-stepped PDE solve with tracking
quadratures.  Because the adjoint sweep is the literal matrix transpose of
the forward march (not a separate discretization of the dual equation),
the computed gradient is the exact derivative of the discrete F; central
differences agree with it to the limits of floating point, and the error
curve over step sizes shows the classic V of an exact gradient.

Run:  python3 demos/02_derivative_checks.py
"""

import numpy as np

import fpctrl as fp
from fpctrl.trajectories import control_inner

rng = np.random.default_rng(1)

grid = fp.Grid((1.0,), (32,))
x = grid.cell_centers[:, 0]
rho0 = 1 + 0.4 * np.cos(np.pi * x)
spec = fp.ProblemSpec(
    nu=0.08, extent=(1.0,), T=0.75,
    c_field="0.3*sin(pi*x)", b_field="x*(1-x)",
    rho0=rho0 / (rho0.sum() * grid.cell_volume),
    rho_Q=1 + 0.2 * np.sin(np.pi * x),
    rho_Omega=np.ones(32),
    alpha_Q=1.0, alpha_Omega=0.5, gamma=[0.05], beta=[0.01],
    u_min=-2.0, u_max=2.0,
)
problem = fp.ControlProblem.from_spec(spec, grid, n_steps=48)

u = problem.control(rng.uniform(-1, 1, size=(1, 48)))
v = problem.control(rng.standard_normal((1, 48)))

phi = problem.gradient(u).values
slope = control_inner(phi, v.values, problem.dt)
print(f"directional derivative from the adjoint sweep:  {slope:+.15e}\n")

print("central differences against it:")
print(f"  {'eps':>8}  {'finite difference':>24}  {'rel. error':>12}")
for eps in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
    up = u.replace(u.values + eps * v.values)
    dn = u.replace(u.values - eps * v.values)
    fd = (problem.reduced_cost(up) - problem.reduced_cost(dn)) / (2 * eps)
    print(f"  {eps:8.0e}  {fd:+24.15e}  {abs(fd - slope) / abs(slope):12.2e}")
print("the error falls with eps^2, bottoms out, then roundoff takes over: a V.\n")

# The same exactness carries to second order.  The quadratic form never
# solves a second-order sensitivity equation: it pairs two linearized
# states with the adjoint, which is algebraically identical.
v2 = problem.control(rng.standard_normal((1, 48)))
q = problem.quadratic_form(u, v, v2)
q_t = problem.quadratic_form(u, v2, v)
hv = problem.hessian_vector(u, v2)
print(f"F''(u)[v1,v2]                    {q:+.15e}")
print(f"F''(u)[v2,v1]  (symmetry)        {q_t:+.15e}")
print(f"<v1, H v2>     (adjoint action)  {control_inner(v.values, hv, problem.dt):+.15e}")

f0 = problem.reduced_cost(u)
eps = 1e-3
fdd = (problem.reduced_cost(u.replace(u.values + eps * v.values)) - 2 * f0
       + problem.reduced_cost(u.replace(u.values - eps * v.values))) / eps**2
print(f"second central difference        {fdd:+.15e}")
print(f"F''(u)[v1,v1]                    {problem.quadratic_form(u, v, v):+.15e}")

# The pairing identity underneath all of this: tracking residuals against
# the linearized state equal the adjoint against the control direction.
ev = problem.evaluate(u)
z = fp.solve_linearized(problem.ops, u, ev.rho, v, problem.theta, ev.stepper)
m = problem.ops.mass_vector
lhs = problem.alpha_Q * problem.dt * np.einsum(
    "c,ck,ck->", m, ev.rho.values[:, 1:] - problem.rho_Q, z.values[:, 1:])
lhs += problem.alpha_Omega * float(m @ ((ev.rho.values[:, -1] - problem.rho_Omega) * z.values[:, -1]))
from fpctrl.forward import theta_weighted
rho_star = theta_weighted(ev.rho.values, problem.theta)
rhs = -problem.dt * np.sum(v.values[0] * np.einsum(
    "ck,ck->k", ev.p.values[:, 1:], problem.ops.D_b[0] @ rho_star))
print(f"\npairing identity, residual side  {lhs:+.15e}")
print(f"pairing identity, adjoint side   {rhs:+.15e}")
print(f"relative mismatch                {abs(lhs - rhs) / abs(lhs):.2e}")
