"""Discrete tracking cost, reduced functional, and its first two derivatives.

The cost uses the right-endpoint rectangle rule in time, aligned with the
implicit march and the adjoint source quadrature:

    J(rho, u) = alpha_Q/2 * sum_k dt*||rho^k - rhoQ^k||_M^2
              + alpha_Om/2 * ||rho^Nt - rhoOm||_M^2
              + sum_i ( gamma_i * sum_k dt*(u_i^k)^2 + beta_i * sum_k dt*u_i^k ).

Note the Tikhonov term carries no 1/2, so its derivative contributes
``2*gamma_i*u_i`` to the gradient and ``2*gamma_i`` to the quadratic form.

The reduced functional is F(u) = J(rho(u), u) with rho(u) the forward
solution.  Its gradient density is

    phi_i^k = -(p^k . D_b[i] rho*^k) + 2*gamma_i*u_i^k + beta_i,

the transpose-exact realization of "-int rho b_i dp/dx_i dx + ...": the
spatial pairing runs through the assembled drift operator rather than any
separate derivative of p, so no second, inconsistent discretization enters.
The second derivative is evaluated without ever solving the second-order
sensitivity equation; testing that equation against the adjoint state
eliminates it exactly and leaves

    F''(u)[v1,v2] = alpha_Q * sum_k dt*<z1^k, z2^k>_M
                  - sum_k dt * sum_i ( v1_i^k * (p^k . D_b[i] z2*^k)
                                     + v2_i^k * (p^k . D_b[i] z1*^k) )
                  + sum_i 2*gamma_i * sum_k dt*v1_i^k*v2_i^k
                  + alpha_Om * <z1^Nt, z2^Nt>_M,

with z_j the linearized states and the starred quantities theta-weighted as
in the forward linearization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import solve_adjoint, _target_columns
from .forward import ThetaStepper, solve_forward, solve_linearized, theta_weighted
from .operators import DiscreteOperators, assemble
from .problem import Grid, ProblemSpec, validate_assumptions
from .trajectories import ControlTrajectory, GradientTrajectory, StateTrajectory

__all__ = ["ControlProblem", "Evaluation"]


@dataclass
class Evaluation:
    """One reduced-cost evaluation with reusable intermediates."""

    u: ControlTrajectory
    value: float
    rho: StateTrajectory
    stepper: ThetaStepper
    p: StateTrajectory | None = None
    phi: np.ndarray | None = None  # gradient density, shape (n_controls, n_steps)


@dataclass
class ControlProblem:
    """Discrete optimal control problem bound to assembled operators.

    Couples the operator family with the cost data and the time grid; all
    reduced-functional evaluations, derivatives and the optimizer run
    through this object.  Instances are immutable in practice (arrays are
    read-only) and safe to share between concurrent evaluations.
    """

    ops: DiscreteOperators
    rho0: np.ndarray
    n_steps: int
    T: float
    alpha_Q: float = 0.0
    alpha_Omega: float = 0.0
    rho_Q: np.ndarray | None = None       # (n_cells, n_steps), columns at t_1..t_Nt
    rho_Omega: np.ndarray | None = None
    gamma: np.ndarray = None  # type: ignore[assignment]
    beta: np.ndarray = None  # type: ignore[assignment]
    u_min: np.ndarray = None  # type: ignore[assignment]
    u_max: np.ndarray = None  # type: ignore[assignment]
    theta: float = 1.0

    def __post_init__(self):
        d = self.ops.n_controls
        self.n_steps = int(self.n_steps)
        if self.n_steps < 1:
            raise ValueError("need at least one time step")
        self.rho0 = np.asarray(self.rho0, dtype=float).ravel()
        if self.rho0.size != self.ops.n_cells:
            raise ValueError("rho0 does not match the grid")
        self.gamma = np.broadcast_to(np.asarray(0.0 if self.gamma is None else self.gamma, float), (d,)).copy()
        self.beta = np.broadcast_to(np.asarray(0.0 if self.beta is None else self.beta, float), (d,)).copy()
        if self.alpha_Q != 0.0:
            self.rho_Q = _target_columns(self.rho_Q, self.ops.n_cells, self.n_steps)
        if self.rho_Omega is not None:
            self.rho_Omega = np.asarray(self.rho_Omega, dtype=float).ravel()
        lo = -np.inf if self.u_min is None else self.u_min
        hi = np.inf if self.u_max is None else self.u_max
        self.u_min = self._bound(lo)
        self.u_max = self._bound(hi)
        if np.any(self.u_min > self.u_max):
            raise ValueError("u_min exceeds u_max")

    def _bound(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        return np.array(np.broadcast_to(b, (self.ops.n_controls, self.n_steps)))

    @classmethod
    def from_spec(cls, spec: ProblemSpec, grid: Grid, n_steps: int,
                  theta: float = 1.0, flux_scheme: str = "central") -> "ControlProblem":
        """Assemble operators, validate/normalize the data, and bind the problem."""
        report = validate_assumptions(spec, grid)
        ops = assemble(spec, grid, flux_scheme)
        u_min, u_max = spec.bound_arrays(n_steps)
        if np.any(u_min > u_max):
            raise ValueError("u_min exceeds u_max")
        return cls(
            ops=ops,
            rho0=report.rho0,
            n_steps=int(n_steps),
            T=spec.T,
            alpha_Q=spec.alpha_Q,
            alpha_Omega=spec.alpha_Omega,
            rho_Q=spec.rho_Q,
            rho_Omega=spec.rho_Omega,
            gamma=spec.gamma,
            beta=spec.beta,
            u_min=u_min,
            u_max=u_max,
            theta=theta,
        )

    # -- shapes and constructors -------------------------------------------------

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def n_controls(self) -> int:
        return self.ops.n_controls

    def control(self, values) -> ControlTrajectory:
        """Wrap an array (or scalar) as a control trajectory on this time grid.

        1-D input of length ``n_controls`` gives per-channel constants;
        length ``n_steps`` (single-channel problems) gives one trajectory.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            return ControlTrajectory.constant(values, self.n_controls, self.n_steps, self.dt)
        if values.ndim == 1:
            if values.size == self.n_controls:
                values = np.broadcast_to(values.reshape(-1, 1), (self.n_controls, self.n_steps))
            elif values.size == self.n_steps and self.n_controls == 1:
                values = values.reshape(1, -1)
            else:
                raise ValueError(
                    f"cannot interpret a length-{values.size} vector as a control "
                    f"({self.n_controls} channels, {self.n_steps} steps)")
        return ControlTrajectory(values, self.dt)

    def zero_control(self) -> ControlTrajectory:
        return self.control(0.0)

    def _check(self, u: ControlTrajectory):
        if u.values.shape != (self.n_controls, self.n_steps):
            raise ValueError(
                f"control shape {u.values.shape} does not match ({self.n_controls}, {self.n_steps})"
            )
        if abs(u.dt - self.dt) > 1e-12 * self.dt:
            raise ValueError("control dt does not match the problem time grid")

    def stepper(self, u: ControlTrajectory) -> ThetaStepper:
        self._check(u)
        return ThetaStepper(self.ops, u, self.dt, self.theta)

    # -- cost and state ----------------------------------------------------------

    def solve_state(self, u: ControlTrajectory, stepper: ThetaStepper | None = None) -> StateTrajectory:
        self._check(u)
        return solve_forward(self.ops, u, self.rho0, self.theta, stepper)

    def cost(self, rho: StateTrajectory, u: ControlTrajectory) -> float:
        """Discrete cost of a state/control pair (no forward solve)."""
        self._check(u)
        if rho.values.shape != (self.ops.n_cells, self.n_steps + 1):
            raise ValueError("state shape does not match the problem")
        dt = self.dt
        m = self.ops.mass_vector
        total = 0.0
        if self.alpha_Q != 0.0:
            r = rho.values[:, 1:] - self.rho_Q
            total += 0.5 * self.alpha_Q * dt * float(np.einsum("c,ck,ck->", m, r, r))
        if self.alpha_Omega != 0.0:
            r = rho.values[:, -1] - (0.0 if self.rho_Omega is None else self.rho_Omega)
            total += 0.5 * self.alpha_Omega * float(m @ (r * r))
        total += dt * float(self.gamma @ np.sum(u.values**2, axis=1))
        total += dt * float(self.beta @ np.sum(u.values, axis=1))
        return total

    def reduced_cost(self, u: ControlTrajectory) -> float:
        """F(u): forward solve followed by the cost."""
        return self.cost(self.solve_state(u), u)

    # -- first derivative ----------------------------------------------------------

    def evaluate(self, u: ControlTrajectory, need_gradient: bool = True) -> Evaluation:
        """Evaluate F (and optionally its gradient) sharing one factorization set."""
        stepper = self.stepper(u)
        rho = self.solve_state(u, stepper)
        value = self.cost(rho, u)
        ev = Evaluation(u=u, value=value, rho=rho, stepper=stepper)
        if need_gradient:
            ev.p = self._adjoint(u, rho, stepper)
            ev.phi = self._gradient_density(u, rho, ev.p)
        return ev

    def _adjoint(self, u, rho, stepper) -> StateTrajectory:
        if self.alpha_Q == 0.0 and self.alpha_Omega == 0.0:
            return StateTrajectory(np.zeros_like(rho.values), self.dt, role="adjoint")
        return solve_adjoint(self.ops, u, rho, self.rho_Q, self.rho_Omega,
                             self.alpha_Q, self.alpha_Omega, self.theta, stepper)

    def _pairings(self, p_values: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Channel pairings ``p^k . D_b[i] s^k`` for all steps, shape (d, Nt).

        ``states`` holds one column per step (already theta-weighted);
        ``p_values`` are the adjoint slices at steps 1..Nt.
        """
        return np.stack([np.einsum("ck,ck->k", p_values, Db @ states) for Db in self.ops.D_b])

    def _gradient_density(self, u, rho, p) -> np.ndarray:
        rho_star = theta_weighted(rho.values, self.theta)
        phi = -self._pairings(p.values[:, 1:], rho_star)
        phi += 2.0 * self.gamma[:, None] * u.values + self.beta[:, None]
        return phi

    def complete_gradient(self, ev: Evaluation) -> Evaluation:
        """Fill in the adjoint and gradient density of a cost-only evaluation."""
        if ev.phi is None:
            if ev.p is None:
                ev.p = self._adjoint(ev.u, ev.rho, ev.stepper)
            ev.phi = self._gradient_density(ev.u, ev.rho, ev.p)
        return ev

    def gradient(self, u: ControlTrajectory) -> GradientTrajectory:
        """Exact gradient density of the discrete reduced cost."""
        ev = self.evaluate(u, need_gradient=True)
        return GradientTrajectory(ev.phi, self.dt)

    # -- second derivative ---------------------------------------------------------

    def quadratic_form(self, u: ControlTrajectory, v1: ControlTrajectory,
                       v2: ControlTrajectory, ev: Evaluation | None = None) -> float:
        """Exact second derivative F''(u)[v1, v2] of the discrete reduced cost."""
        if ev is None:
            ev = self.evaluate(u, need_gradient=True)
        elif ev.p is None:
            ev.p = self._adjoint(u, ev.rho, ev.stepper)
        self._check(v1)
        self._check(v2)
        z1 = solve_linearized(self.ops, u, ev.rho, v1, self.theta, ev.stepper)
        z2 = z1 if v2 is v1 else solve_linearized(self.ops, u, ev.rho, v2, self.theta, ev.stepper)
        dt = self.dt
        m = self.ops.mass_vector
        p_slices = ev.p.values[:, 1:]

        total = 2.0 * dt * float(self.gamma @ np.sum(v1.values * v2.values, axis=1))
        if self.alpha_Q != 0.0:
            total += self.alpha_Q * dt * float(np.einsum("c,ck,ck->", m, z1.values[:, 1:], z2.values[:, 1:]))
        if self.alpha_Omega != 0.0:
            total += self.alpha_Omega * float(m @ (z1.values[:, -1] * z2.values[:, -1]))
        cross = np.sum(v1.values * self._pairings(p_slices, theta_weighted(z2.values, self.theta)))
        cross += np.sum(v2.values * self._pairings(p_slices, theta_weighted(z1.values, self.theta)))
        total -= dt * float(cross)
        return total

    def hessian_vector(self, u: ControlTrajectory, v: ControlTrajectory,
                       ev: Evaluation | None = None) -> np.ndarray:
        """Hessian action on ``v`` as a gradient-shaped density, shape (d, Nt).

        Obtained by differentiating the gradient sweep: one linearized
        forward solve for ``z`` and one backward sweep for the adjoint
        sensitivity ``q``, then

            (Hv)_i^k = -(q^k . D_b[i] rho*^k) - (p^k . D_b[i] z*^k) + 2*gamma_i*v_i^k.

        Agrees with :meth:`quadratic_form` through
        ``F''(u)[w, v] = sum_k dt * sum_i w_i^k (Hv)_i^k``.
        """
        if ev is None:
            ev = self.evaluate(u, need_gradient=True)
        elif ev.p is None:
            ev.p = self._adjoint(u, ev.rho, ev.stepper)
        self._check(v)
        stepper = ev.stepper
        dt, theta = self.dt, self.theta
        m = self.ops.mass_vector
        n = self.n_steps
        z = solve_linearized(self.ops, u, ev.rho, v, theta, stepper)
        z_star = theta_weighted(z.values, theta)
        rho_star = theta_weighted(ev.rho.values, theta)
        p = ev.p.values

        def drift_T(v_k, p_k):
            out = np.zeros(self.ops.n_cells)
            for vi, Db in zip(v_k, self.ops.D_b):
                if vi != 0.0:
                    out += vi * (Db.T @ p_k)
            return out

        q = np.zeros((self.ops.n_cells, n + 1))
        rhs = (dt * self.alpha_Q + self.alpha_Omega) * m * z.values[:, n]
        rhs -= dt * theta * drift_T(v.values[:, n - 1], p[:, n])
        q[:, n] = stepper.solve(n, rhs, transpose=True)
        for k in range(n - 1, 0, -1):
            rhs = stepper.explicit(k + 1, q[:, k + 1], transpose=True)
            rhs += dt * self.alpha_Q * m * z.values[:, k]
            rhs -= dt * theta * drift_T(v.values[:, k - 1], p[:, k])
            if theta != 1.0:
                rhs -= dt * (1.0 - theta) * drift_T(v.values[:, k], p[:, k + 1])
            q[:, k] = stepper.solve(k, rhs, transpose=True)

        hv = -self._pairings(q[:, 1:], rho_star)
        hv -= self._pairings(p[:, 1:], z_star)
        hv += 2.0 * self.gamma[:, None] * v.values
        return hv
