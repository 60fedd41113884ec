"""Backward adjoint sweep, transpose-exact for the discrete forward scheme.

The adjoint state is defined through the discrete Lagrangian of the
tracking cost against the theta-scheme constraints, which makes it the
algebraic transpose of the forward march rather than a separate
discretization of the continuous dual equation:

    E_Nt^T p^Nt = dt*alpha_Q*M*(rho^Nt - rhoQ^Nt) + alpha_Om*M*(rho^Nt - rhoOm),
    E_k^T  p^k  = C_{k+1}^T p^{k+1} + dt*alpha_Q*M*(rho^k - rhoQ^k),   k = Nt-1..1,

with ``E_k = M + dt*theta*A(u^k)`` and ``C_k = M - dt*(1-theta)*A(u^k)``.
The continuous drift term ``B[u] . grad p`` is realized by ``A(u)^T``; no
separate operator is assembled.  Source terms use the right-endpoint
rectangle rule, matching the cost quadrature and the implicit march, so
for every direction ``v`` the pairing identity

    alpha_Q*sum_k dt*<rho^k - rhoQ^k, z^k>_M + alpha_Om*<rho^Nt - rhoOm, z^Nt>_M
        = -sum_k dt * sum_i v_i^k * (p^k . D_b[i] rho*^k)

holds to roundoff, where ``z`` is the linearized state for ``v``.  That
identity is what turns the backward sweep into exact reduced-cost
gradients.

Slot 0 of the returned trajectory holds the natural backward continuation
``M^{-1} C_1^T p^1`` (equal to ``p^1`` for implicit Euler); the gradient
formulas only read slots 1..Nt.
"""

from __future__ import annotations

import numpy as np

from .forward import ThetaStepper
from .operators import DiscreteOperators
from .trajectories import ControlTrajectory, StateTrajectory

__all__ = ["solve_adjoint"]


def solve_adjoint(ops: DiscreteOperators, u: ControlTrajectory, rho: StateTrajectory,
                  rho_Q, rho_Omega, alpha_Q: float, alpha_Omega: float,
                  theta: float = 1.0, stepper: ThetaStepper | None = None) -> StateTrajectory:
    """Solve the backward adjoint sweep for a forward solution ``rho``.

    Parameters
    ----------
    rho_Q
        Running target: ``None``, a cell vector, or a ``(n_cells, Nt)``
        array with column ``k-1`` the target at ``t_k``.  Ignored when
        ``alpha_Q`` is zero.
    rho_Omega
        Terminal target (cell vector); ignored when ``alpha_Omega`` is zero.
    """
    stepper = stepper or ThetaStepper(ops, u, u.dt, theta)
    n_steps = u.n_steps
    if rho.values.shape != (ops.n_cells, n_steps + 1):
        raise ValueError("state does not match operators/control")
    dt = u.dt
    m = ops.mass_vector

    residual_Q = None
    if alpha_Q != 0.0:
        target = _target_columns(rho_Q, ops.n_cells, n_steps)
        residual_Q = rho.values[:, 1:] - target
    terminal = np.zeros(ops.n_cells)
    if alpha_Omega != 0.0:
        omega = np.zeros(ops.n_cells) if rho_Omega is None else np.asarray(rho_Omega, float).ravel()
        terminal = alpha_Omega * m * (rho.values[:, -1] - omega)

    p = np.zeros((ops.n_cells, n_steps + 1))
    rhs = terminal
    if residual_Q is not None:
        rhs = rhs + dt * alpha_Q * m * residual_Q[:, -1]
    p[:, n_steps] = stepper.solve(n_steps, rhs, transpose=True)
    for k in range(n_steps - 1, 0, -1):
        rhs = stepper.explicit(k + 1, p[:, k + 1], transpose=True)
        if residual_Q is not None:
            rhs = rhs + dt * alpha_Q * m * residual_Q[:, k - 1]
        p[:, k] = stepper.solve(k, rhs, transpose=True)
    p[:, 0] = stepper.explicit(1, p[:, 1], transpose=True) / m
    return StateTrajectory(p, dt, role="adjoint")


def _target_columns(rho_Q, n_cells: int, n_steps: int) -> np.ndarray:
    """Normalize a running target to shape ``(n_cells, n_steps)``.

    Accepts ``None`` (zero target), a single cell vector (constant in
    time), an ``(n_cells, n_steps)`` array of values at ``t_1..t_Nt``, or an
    ``(n_cells, n_steps + 1)`` trajectory whose initial slice is dropped.
    """
    if rho_Q is None:
        return np.zeros((n_cells, n_steps))
    target = np.asarray(rho_Q, dtype=float)
    if target.ndim == 0:
        return np.full((n_cells, n_steps), float(target))
    if target.ndim == 1:
        if target.size != n_cells:
            raise ValueError(f"running target has {target.size} cells, expected {n_cells}")
        return np.repeat(target[:, None], n_steps, axis=1)
    if target.shape == (n_cells, n_steps):
        return target
    if target.shape == (n_cells, n_steps + 1):
        return target[:, 1:]
    raise ValueError(f"running target shape {target.shape} incompatible with ({n_cells}, {n_steps})")
