"""Time stepping for the density equation and its control linearization.

One theta step of ``M drho/dt + A(u) rho = 0`` reads

    (M + dt*theta*A(u^k)) rho^k = (M - dt*(1-theta)*A(u^k)) rho^{k-1},

with ``u^k`` the control on ``(t_{k-1}, t_k]`` held at the step's right
endpoint.  ``theta = 1`` is implicit Euler (default; unconditionally stable
and, combined with upwind fluxes, positivity preserving), ``theta = 1/2``
is the trapezoidal rule for accuracy studies.

Differentiating the step map with respect to the control gives the
linearized sweep solved by :func:`solve_linearized`: the same step
matrices, driven by ``-dt * sum_i v_i^k D_b[i] rho*^k`` where
``rho*^k = theta*rho^k + (1-theta)*rho^{k-1}`` is exactly the
theta-weighted density the step map differentiates into.  Keeping this
sweep the literal Jacobian action of the discrete flow is what makes the
adjoint-based gradients exact to roundoff.

All systems are solved by direct sparse LU; factorizations are shared
through a :class:`ThetaStepper`, which deduplicates equal control values
across steps and is reused by the adjoint and Hessian sweeps.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .operators import DiscreteOperators
from .trajectories import ControlTrajectory, StateTrajectory

__all__ = ["SolverFailure", "ThetaStepper", "solve_forward", "solve_linearized", "mass", "theta_weighted"]


class SolverFailure(RuntimeError):
    """A linear step could not be solved or produced non-finite values."""


class ThetaStepper:
    """Factorized theta-step matrices for one (operators, control, theta) triple.

    Provides the implicit solve ``E_k x = rhs`` and its transpose together
    with the explicit-side product ``C_k y``; factorizations are cached per
    distinct control value, so controls that are constant in time cost a
    single LU.
    """

    #: above this system size, keep only a few factorizations alive at a time
    _LARGE_SYSTEM = 2048
    _LARGE_CACHE = 16

    def __init__(self, ops: DiscreteOperators, u: ControlTrajectory, dt: float, theta: float):
        if not 0.5 <= theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if u.n_controls != ops.n_controls:
            raise ValueError(f"control has {u.n_controls} channels, operators expect {ops.n_controls}")
        if dt <= 0 or not np.isfinite(dt):
            raise ValueError("dt must be positive and finite")
        self.ops = ops
        self.u = u
        self.dt = float(dt)
        self.theta = float(theta)
        self.n_steps = u.n_steps
        self._cache: dict[bytes, tuple] = {}
        self._max_cached = None if ops.n_cells <= self._LARGE_SYSTEM else self._LARGE_CACHE

    def _factors(self, k: int):
        """LU of E_k and the explicit matrix C_k (k in 1..n_steps)."""
        u_k = self.u.values[:, k - 1]
        key = u_k.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            A = self.ops.A(u_k)
            E = (self.ops.M + self.dt * self.theta * A).tocsc()
            C = self.ops.M if self.theta == 1.0 else (self.ops.M - self.dt * (1.0 - self.theta) * A).tocsr()
            try:
                lu = spla.splu(E)
            except RuntimeError as exc:  # singular factorization
                raise SolverFailure(f"step {k}: factorization failed ({exc})") from None
            hit = (lu, C, A)
            if self._max_cached is not None and len(self._cache) >= self._max_cached:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        return hit

    def solve(self, k: int, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        lu, _, _ = self._factors(k)
        x = lu.solve(rhs, trans="T" if transpose else "N")
        if not np.all(np.isfinite(x)):
            raise SolverFailure(f"step {k}: non-finite solution")
        return x

    def explicit(self, k: int, y: np.ndarray, transpose: bool = False) -> np.ndarray:
        _, C, _ = self._factors(k)
        return (C.T @ y) if transpose else (C @ y)

    def drift_channels(self, state: np.ndarray) -> np.ndarray:
        """Stack of ``D_b[i] @ state`` for every control channel."""
        return np.stack([Db @ state for Db in self.ops.D_b])


def solve_forward(ops: DiscreteOperators, u: ControlTrajectory, rho0: np.ndarray,
                  theta: float = 1.0, stepper: ThetaStepper | None = None) -> StateTrajectory:
    """March the density forward from ``rho0`` under control ``u``.

    Mass ``1^T M rho^k`` is conserved step by step up to solver roundoff,
    because the ones vector annihilates ``A(u)`` from the left on both
    sides of the update.
    """
    stepper = stepper or ThetaStepper(ops, u, u.dt, theta)
    rho0 = np.asarray(rho0, dtype=float).ravel()
    if rho0.size != ops.n_cells:
        raise ValueError(f"rho0 has {rho0.size} entries, grid has {ops.n_cells} cells")
    values = np.empty((ops.n_cells, u.n_steps + 1))
    values[:, 0] = rho0
    for k in range(1, u.n_steps + 1):
        rhs = stepper.explicit(k, values[:, k - 1])
        values[:, k] = stepper.solve(k, rhs)
    return StateTrajectory(values, u.dt, role="density")


def solve_linearized(ops: DiscreteOperators, u: ControlTrajectory, rho: StateTrajectory,
                     v: ControlTrajectory, theta: float = 1.0,
                     stepper: ThetaStepper | None = None) -> StateTrajectory:
    """Directional derivative of the density with respect to the control.

    ``rho`` must be the forward solution for the same ``(ops, u, theta)``;
    the result is the exact Jacobian action of the discrete flow applied to
    the control direction ``v``.
    """
    stepper = stepper or ThetaStepper(ops, u, u.dt, theta)
    if v.values.shape != u.values.shape:
        raise ValueError("direction v must have the control's shape")
    if rho.values.shape != (ops.n_cells, u.n_steps + 1):
        raise ValueError("state does not match operators/control")
    dt = u.dt
    rho_star = theta_weighted(rho.values, stepper.theta)
    z = np.zeros((ops.n_cells, u.n_steps + 1))
    for k in range(1, u.n_steps + 1):
        rhs = stepper.explicit(k, z[:, k - 1])
        v_k = v.values[:, k - 1]
        if np.any(v_k != 0.0):
            rhs = rhs - dt * np.einsum("i,ic->c", v_k, stepper.drift_channels(rho_star[:, k - 1]))
        z[:, k] = stepper.solve(k, rhs)
    return StateTrajectory(z, dt, role="linearized")


def theta_weighted(state_values: np.ndarray, theta: float) -> np.ndarray:
    """Per-step weights ``theta*rho^k + (1-theta)*rho^{k-1}``, shape (cells, Nt)."""
    if theta == 1.0:
        return state_values[:, 1:]
    return theta * state_values[:, 1:] + (1.0 - theta) * state_values[:, :-1]


def mass(state: StateTrajectory, ops_or_volume, k: int | None = None):
    """Total mass ``1^T M rho^k``; all steps when ``k`` is omitted.

    ``ops_or_volume`` is either the assembled operators or the scalar cell
    volume.
    """
    if isinstance(ops_or_volume, DiscreteOperators):
        w = ops_or_volume.mass_vector
    else:
        w = np.full(state.n_cells, float(ops_or_volume))
    if k is None:
        return w @ state.values
    if not 0 <= k <= state.n_steps:
        raise IndexError(f"step index {k} outside 0..{state.n_steps}")
    return float(w @ state.values[:, k])
