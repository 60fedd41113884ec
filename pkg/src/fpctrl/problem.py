"""Problem data: rectangular grid, continuous problem specification, and
standing-assumption checks.

The density lives on a uniform cell-centered tensor grid over the box
``[0, L_1] x ... x [0, L_d]`` with ``d in {1, 2}``.  A :class:`ProblemSpec`
collects the diffusion coefficient, drift fields, initial density, tracking
targets and weights, and the control bounds; :func:`validate_assumptions`
checks the structural conditions the solver and its optimality diagnostics
rely on (unit probability mass, vanishing control drift through the
boundary, positive Tikhonov weights for second-order work).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fields import as_component_fields, evaluate_field

__all__ = ["Grid", "ProblemSpec", "AssumptionReport", "ValidationError", "validate_assumptions"]

#: Relative mass defect below which the initial density is silently renormalized.
MASS_TOLERANCE = 1e-6

#: Boundary normal-trace tolerance for the drift-field checks.
BOUNDARY_TOLERANCE = 1e-12


class ValidationError(ValueError):
    """Problem data violates a hard requirement (negative or non-finite data,
    mass defect beyond tolerance, inconsistent shapes)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered tensor grid on ``[0, L_1] x ... x [0, L_d]``.

    Cells are indexed in C order: in 2D the flat index of cell ``(i1, i2)``
    is ``i1 * N_2 + i2``.
    """

    extent: tuple[float, ...]
    cells_per_axis: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(float(L) for L in np.atleast_1d(self.extent)))
        object.__setattr__(self, "cells_per_axis", tuple(int(n) for n in np.atleast_1d(self.cells_per_axis)))
        if len(self.extent) != len(self.cells_per_axis):
            raise ValidationError("extent and cells_per_axis must have the same length")
        if len(self.extent) not in (1, 2):
            raise ValidationError("only 1-D and 2-D grids are supported")
        if any(L <= 0 or not np.isfinite(L) for L in self.extent):
            raise ValidationError("axis extents must be positive and finite")
        if any(n < 2 for n in self.cells_per_axis):
            raise ValidationError("need at least 2 cells per axis")

    @property
    def dim(self) -> int:
        return len(self.extent)

    @property
    def cell_width(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extent, self.cells_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_width))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @cached_property
    def axis_centers(self) -> tuple[np.ndarray, ...]:
        """Per-axis cell-center coordinates."""
        return tuple(
            _readonly((np.arange(n) + 0.5) * h)
            for n, h in zip(self.cells_per_axis, self.cell_width)
        )

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """All cell centers as an ``(n_cells, dim)`` array in C order."""
        mesh = np.meshgrid(*self.axis_centers, indexing="ij")
        return _readonly(np.column_stack([m.ravel(order="C") for m in mesh]))

    def interior_face_centers(self, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Interior faces orthogonal to ``axis``.

        Returns ``(points, left, right)`` where ``points`` is the
        ``(n_faces, dim)`` array of face centers and ``left``/``right`` the
        flat indices of the adjacent cells on the lower/upper side.
        """
        n = self.cells_per_axis[axis]
        h = self.cell_width[axis]
        coords = [np.asarray(c) for c in self.axis_centers]
        coords[axis] = (np.arange(1, n)) * h
        mesh = np.meshgrid(*coords, indexing="ij")
        points = np.column_stack([m.ravel(order="C") for m in mesh])

        # Slices along `axis`; ravel in C order so they pair with `points`.
        index = np.arange(self.n_cells).reshape(self.cells_per_axis)
        sl_left = [slice(None)] * self.dim
        sl_right = [slice(None)] * self.dim
        sl_left[axis] = slice(0, n - 1)
        sl_right[axis] = slice(1, n)
        left = index[tuple(sl_left)].ravel(order="C")
        right = index[tuple(sl_right)].ravel(order="C")
        return points, left, right

    def boundary_face_centers(self, axis: int) -> np.ndarray:
        """Centers of the two boundary face sheets orthogonal to ``axis``."""
        coords = [np.asarray(c) for c in self.axis_centers]
        points = []
        for position in (0.0, self.extent[axis]):
            c = list(coords)
            c[axis] = np.array([position])
            mesh = np.meshgrid(*c, indexing="ij")
            points.append(np.column_stack([m.ravel(order="C") for m in mesh]))
        return np.vstack(points)


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the control problem for a drift-diffusion density.

    The drift is ``B[u](x) = c(x) + b(x) * u`` with componentwise product,
    ``u(t)`` a time-dependent control with as many components as space has
    axes.  The cost tracks a running target ``rho_Q`` and a terminal target
    ``rho_Omega`` and charges ``gamma_i * ||u_i||_2^2 + beta_i * int u_i dt``
    for each control component, subject to ``u_min <= u <= u_max``.

    ``rho0`` (and the targets, when given as arrays) are cell samples on the
    grid the spec will be used with.  ``u_min``/``u_max`` may be scalars,
    per-component vectors, or full ``(dim, Nt)`` bound trajectories.
    """

    nu: float
    extent: tuple[float, ...]
    T: float
    c_field: tuple = (0.0,)
    b_field: tuple = (0.0,)
    rho0: np.ndarray | None = None
    rho_Q: np.ndarray | float | None = None
    rho_Omega: np.ndarray | float | None = None
    alpha_Q: float = 0.0
    alpha_Omega: float = 0.0
    gamma: np.ndarray = field(default=None)  # type: ignore[assignment]
    beta: np.ndarray = field(default=None)  # type: ignore[assignment]
    u_min: np.ndarray = field(default=None)  # type: ignore[assignment]
    u_max: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(float(L) for L in np.atleast_1d(self.extent)))
        dim = len(self.extent)
        if dim not in (1, 2):
            raise ValidationError("only 1-D and 2-D problems are supported")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValidationError("nu must be positive and finite")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError("T must be positive and finite")
        object.__setattr__(self, "c_field", as_component_fields(self.c_field, dim))
        object.__setattr__(self, "b_field", as_component_fields(self.b_field, dim))

        gamma = np.zeros(dim) if self.gamma is None else np.broadcast_to(np.asarray(self.gamma, float), (dim,))
        beta = np.zeros(dim) if self.beta is None else np.broadcast_to(np.asarray(self.beta, float), (dim,))
        if np.any(gamma < 0):
            raise ValidationError("Tikhonov weights gamma must be nonnegative")
        if self.alpha_Q < 0 or self.alpha_Omega < 0:
            raise ValidationError("tracking weights must be nonnegative")
        object.__setattr__(self, "gamma", _readonly(gamma))
        object.__setattr__(self, "beta", _readonly(beta))

        u_min = np.asarray(-np.inf if self.u_min is None else self.u_min, dtype=float)
        u_max = np.asarray(np.inf if self.u_max is None else self.u_max, dtype=float)
        object.__setattr__(self, "u_min", _readonly(u_min))
        object.__setattr__(self, "u_max", _readonly(u_max))

        def as_column(b):
            return b.reshape(-1, 1) if b.ndim == 1 else b
        try:
            ordered = not np.any(as_column(u_min) > as_column(u_max))
        except ValueError:
            ordered = True  # mixed shapes are re-checked once the step count is known
        if not ordered:
            raise ValidationError("u_min must not exceed u_max")

        if self.rho0 is not None:
            rho0 = np.asarray(self.rho0, dtype=float).ravel()
            if not np.all(np.isfinite(rho0)):
                raise ValidationError("rho0 contains non-finite samples")
            object.__setattr__(self, "rho0", _readonly(rho0))
        for name in ("rho_Q", "rho_Omega"):
            value = getattr(self, name)
            if value is not None and np.ndim(value) > 0:
                object.__setattr__(self, name, _readonly(value))

    @property
    def dim(self) -> int:
        return len(self.extent)

    def grid(self, cells_per_axis) -> Grid:
        return Grid(self.extent, cells_per_axis)

    def bound_arrays(self, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounds broadcast to full ``(dim, n_steps)`` trajectories."""
        shape = (self.dim, n_steps)

        def expand(bound):
            # Scalars apply everywhere, 1-D vectors per component, 2-D as given.
            b = bound if bound.ndim != 1 else bound.reshape(-1, 1)
            try:
                return np.array(np.broadcast_to(b, shape))
            except ValueError:
                raise ValidationError(f"control bounds do not broadcast to {shape}") from None

        return expand(self.u_min), expand(self.u_max)


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of :func:`validate_assumptions`.

    Only the mass/nonnegativity check is enforced; the remaining flags are
    advisory and describe whether the problem sits inside the regime the
    optimality theory covers.
    """

    rho0: np.ndarray
    mass_before: float
    renormalized: bool
    b_boundary_flux_ok: bool
    b_boundary_violation: float
    c_boundary_flux_ok: bool
    c_boundary_violation: float
    gamma_min: float
    gamma_positive: bool

    def summary(self) -> str:
        lines = [
            f"initial mass            : {self.mass_before:.12g}"
            + ("  (renormalized to 1)" if self.renormalized else "  (accepted)"),
            f"b normal trace on bdry  : max |b.n| = {self.b_boundary_violation:.3e}  "
            + ("ok" if self.b_boundary_flux_ok else "VIOLATED (advisory)"),
            f"c normal trace on bdry  : max |c.n| = {self.c_boundary_violation:.3e}  "
            + ("ok" if self.c_boundary_flux_ok else "VIOLATED (advisory)"),
            f"min Tikhonov weight     : {self.gamma_min:.3e}  "
            + ("ok for second-order diagnostics" if self.gamma_positive else "second-order diagnostics unavailable (advisory)"),
        ]
        return "\n".join(lines)


def _boundary_normal_trace(components, grid: Grid) -> float:
    """Largest |g_j . n| over boundary faces, nearest-cell values for tables."""
    worst = 0.0
    for axis, comp in enumerate(components):
        if isinstance(comp, np.ndarray):
            table = comp.reshape(grid.cells_per_axis)
            first = np.moveaxis(table, axis, 0)[0]
            last = np.moveaxis(table, axis, 0)[-1]
            values = np.concatenate([np.ravel(first), np.ravel(last)])
        else:
            points = grid.boundary_face_centers(axis)
            values = evaluate_field(comp, points)
        if values.size:
            worst = max(worst, float(np.max(np.abs(values))))
    return worst


def validate_assumptions(spec: ProblemSpec, grid: Grid, mass_tol: float = MASS_TOLERANCE) -> AssumptionReport:
    """Check the structural assumptions and normalize the initial density.

    Hard requirements (raise :class:`ValidationError`): ``rho0`` finite,
    nonnegative up to ``-1e-12 * max(rho0)``, and of unit mass up to
    ``mass_tol`` (relative).  A mass defect below the tolerance is repaired
    by renormalization, with a warning; the normalized samples are returned
    in the report.

    Advisory flags: the control channels must not push mass through the
    boundary (``b . n = 0`` on the boundary, within 1e-12), and the
    uncontrolled drift ideally satisfies the same (``c . n = 0``); the
    second-order diagnostics additionally need ``min_i gamma_i > 0``.
    """
    if spec.rho0 is None:
        raise ValidationError("rho0 is required")
    if spec.dim != grid.dim or spec.extent != grid.extent:
        raise ValidationError("grid does not match the problem domain")
    rho0 = np.asarray(spec.rho0, dtype=float).copy()
    if rho0.size != grid.n_cells:
        raise ValidationError(f"rho0 has {rho0.size} samples, grid has {grid.n_cells} cells")
    if not np.all(np.isfinite(rho0)):
        raise ValidationError("rho0 contains non-finite samples")
    scale = float(np.max(rho0, initial=0.0))
    if np.any(rho0 < -1e-12 * max(scale, 1.0)):
        raise ValidationError("rho0 has negative samples")
    rho0 = np.maximum(rho0, 0.0)

    mass = float(np.sum(rho0) * grid.cell_volume)
    if mass <= 0:
        raise ValidationError("rho0 has zero mass")
    if abs(mass - 1.0) > mass_tol:
        raise ValidationError(f"rho0 mass {mass:.9g} deviates from 1 beyond tolerance {mass_tol:g}")
    if mass != 1.0:
        rho0 = rho0 / mass
    # roundoff-level defects are rescaled silently; anything larger is reported
    renormalized = abs(mass - 1.0) > 1e-12
    if renormalized:
        warnings.warn(f"initial density renormalized (mass was {mass:.12g})", stacklevel=2)

    b_violation = _boundary_normal_trace(spec.b_field, grid)
    c_violation = _boundary_normal_trace(spec.c_field, grid)
    gamma_min = float(np.min(spec.gamma))

    return AssumptionReport(
        rho0=_readonly(rho0),
        mass_before=mass,
        renormalized=renormalized,
        b_boundary_flux_ok=b_violation <= BOUNDARY_TOLERANCE,
        b_boundary_violation=b_violation,
        c_boundary_flux_ok=c_violation <= BOUNDARY_TOLERANCE,
        c_boundary_violation=c_violation,
        gamma_min=gamma_min,
        gamma_positive=gamma_min > 0,
    )
