"""Control, state and gradient trajectories.

Time is discretized into ``Nt`` steps of width ``dt``; controls are
piecewise constant with ``u[:, k-1]`` active on the interval
``(t_{k-1}, t_k]``, states carry ``Nt + 1`` slices with slice 0 the initial
condition.  The discrete-in-time L2 inner product used throughout for
control-space quantities is ``<v, w> = sum_k dt * sum_i v[i,k] w[i,k]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ControlTrajectory",
    "StateTrajectory",
    "GradientTrajectory",
    "control_inner",
    "control_norm",
]


def _frozen_array(values, shape_hint: str) -> np.ndarray:
    a = np.array(values, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{shape_hint} contains non-finite entries")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ControlTrajectory:
    """Piecewise-constant control values, shape ``(n_controls, n_steps)``."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        a = _frozen_array(np.atleast_2d(self.values), "control trajectory")
        if a.ndim != 2 or a.shape[1] < 1:
            raise ValueError("control trajectory must be a (n_controls, n_steps) array")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", a)

    @property
    def n_controls(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        """Right endpoints t_k of the control intervals."""
        return self.dt * np.arange(1, self.n_steps + 1)

    def replace(self, values) -> "ControlTrajectory":
        return ControlTrajectory(values, self.dt)

    @classmethod
    def constant(cls, value, n_controls: int, n_steps: int, dt: float) -> "ControlTrajectory":
        return cls(np.broadcast_to(np.asarray(value, float).reshape(-1, 1), (n_controls, n_steps)), dt)


@dataclass(frozen=True)
class StateTrajectory:
    """Grid function over time, shape ``(n_cells, n_steps + 1)``.

    ``role`` records what the trajectory represents: a density, a
    linearization of the density with respect to the control, or an adjoint
    state.
    """

    values: np.ndarray
    dt: float
    role: str = "density"

    _ROLES = ("density", "linearized", "adjoint")

    def __post_init__(self):
        a = _frozen_array(np.atleast_2d(self.values), f"{self.role} trajectory")
        if a.ndim != 2 or a.shape[1] < 2:
            raise ValueError("state trajectory must be a (n_cells, n_steps + 1) array")
        if self.role not in self._ROLES:
            raise ValueError(f"role must be one of {self._ROLES}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", a)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def initial(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


@dataclass(frozen=True)
class GradientTrajectory:
    """Reduced-cost gradient density, same layout as a control trajectory.

    Entry ``[i, k-1]`` is the gradient component against which control
    variations pair as ``F'(u) v = sum_k dt * sum_i phi[i,k] v[i,k]``.
    """

    values: np.ndarray
    dt: float

    def __post_init__(self):
        a = _frozen_array(np.atleast_2d(self.values), "gradient trajectory")
        if a.ndim != 2:
            raise ValueError("gradient trajectory must be a (n_controls, n_steps) array")
        object.__setattr__(self, "values", a)

    @property
    def n_controls(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


def control_inner(a, b, dt: float) -> float:
    """Discrete L2 pairing ``sum_k dt * sum_i a[i,k] b[i,k]``."""
    av = a.values if hasattr(a, "values") else np.asarray(a)
    bv = b.values if hasattr(b, "values") else np.asarray(b)
    return float(dt * np.sum(av * bv))


def control_norm(a, dt: float) -> float:
    """Discrete L2 norm induced by :func:`control_inner`."""
    return float(np.sqrt(max(control_inner(a, a, dt), 0.0)))
