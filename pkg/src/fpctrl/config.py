"""Scenario configuration: flat ``section.key = value`` text files.

The format is deliberately schema-free and diff-friendly: one assignment
per line, ``#`` comments, optional quotes around values.  Component lists
use ``;`` (e.g. ``fields.b = x1*(1-x1) ; x2*(1-x2)``), per-axis integer or
float lists use ``,``.  Values starting with ``@`` reference CSV tables
relative to the config file's directory.

Example::

    problem.nu     = 0.1
    problem.extent = 1.0
    problem.T      = 0.5
    fields.c       = "0"
    fields.b       = "x*(1-x)"
    init.rho0      = 1 + cos(pi*x)
    grid.cells     = 64
    grid.steps     = 256
    scheme.theta   = 1.0
    scheme.flux    = central
    optimizer.method = "pgd"
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .fields import Expression, ExpressionError
from .objective import ControlProblem
from .optimize import OptimizerConfig
from .problem import Grid, ProblemSpec, ValidationError
from .trajectories import ControlTrajectory
from . import csvio

__all__ = ["ConfigError", "Scenario", "load_scenario", "parse_config_text"]


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


_METHOD_NAMES = {
    "pgd": "projected_gradient",
    "projected_gradient": "projected_gradient",
    "pncg": "projected_newton_cg",
    "projected_newton_cg": "projected_newton_cg",
}

#: every recognized key -> required flag
_KNOWN_KEYS = {
    "problem.nu": True,
    "problem.extent": True,
    "problem.T": True,
    "fields.c": False,
    "fields.b": False,
    "init.rho0": True,
    "targets.rho_Q": False,
    "targets.rho_Omega": False,
    "weights.alpha_Q": False,
    "weights.alpha_Omega": False,
    "weights.gamma": False,
    "weights.beta": False,
    "bounds.u_min": False,
    "bounds.u_max": False,
    "grid.cells": True,
    "grid.steps": True,
    "scheme.theta": False,
    "scheme.flux": False,
    "optimizer.method": False,
    "optimizer.max_iters": False,
    "optimizer.tol_pg": False,
    "optimizer.armijo_c": False,
    "optimizer.backtrack": False,
    "optimizer.step0": False,
    "optimizer.active_tol": False,
    "optimizer.cg_max": False,
    "optimizer.cg_tol": False,
    "optimizer.u0": False,
    "run.seed": False,
    "sonc.samples": False,
}


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1].strip()
    return value


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Parse assignments into a key -> raw value map, rejecting unknown keys."""
    values: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        values[key] = _unquote(value)
    missing = [k for k, required in _KNOWN_KEYS.items() if required and k not in values]
    if missing:
        raise ConfigError(f"{origin}: missing required key(s) {', '.join(missing)}")
    return values


def _parse_float(values: dict, key: str, default=None) -> float:
    if key not in values:
        return default
    try:
        out = float(values[key])
    except ValueError:
        raise ConfigError(f"{key}: not a number: {values[key]!r}") from None
    if not np.isfinite(out):
        raise ConfigError(f"{key}: must be finite")
    return out


def _parse_int(values: dict, key: str, default=None) -> int:
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {values[key]!r}") from None


def _parse_float_list(values: dict, key: str, default=None):
    if key not in values:
        return default
    parts = [p for p in values[key].replace(";", ",").split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{key}: not a number list: {values[key]!r}") from None


@dataclasses.dataclass
class Scenario:
    """A parsed scenario: problem data plus run options."""

    spec: ProblemSpec
    grid: Grid
    n_steps: int
    theta: float
    flux_scheme: str
    optimizer: OptimizerConfig
    seed: int
    sonc_samples: int
    u0_source: str | None
    base_dir: Path

    def problem(self) -> ControlProblem:
        return ControlProblem.from_spec(self.spec, self.grid, self.n_steps,
                                        theta=self.theta, flux_scheme=self.flux_scheme)

    def initial_control(self, problem: ControlProblem) -> ControlTrajectory:
        """Initial control from ``optimizer.u0``: number, expression in t, or CSV."""
        source = self.u0_source
        if source is None:
            return problem.zero_control()
        if source.startswith("@"):
            _, u_values = csvio.read_control_csv(self._resolve(source))
            if u_values.shape != (problem.n_controls, problem.n_steps):
                raise ConfigError(
                    f"optimizer.u0: control table has shape {u_values.shape}, "
                    f"expected ({problem.n_controls}, {problem.n_steps})")
            return problem.control(u_values)
        try:
            return problem.control(float(source))
        except ValueError:
            pass
        try:
            expr = Expression(source)
            t = problem.dt * np.arange(1, problem.n_steps + 1)
            row = expr(t=t)
        except ExpressionError as exc:
            raise ConfigError(f"optimizer.u0: {exc}") from None
        return problem.control(np.broadcast_to(row, (problem.n_controls, problem.n_steps)).copy())

    def _resolve(self, ref: str) -> Path:
        path = self.base_dir / ref[1:]
        if not path.exists():
            raise ConfigError(f"referenced file not found: {path}")
        return path


def _field_components(values: dict, key: str, dim: int, scenario_dir: Path, grid: Grid):
    """fields.c / fields.b: ';'-separated expressions or one @table reference."""
    if key not in values:
        return "0" if dim == 1 else ["0"] * dim
    raw = values[key]
    if raw.startswith("@"):
        path = scenario_dir / raw[1:]
        if not path.exists():
            raise ConfigError(f"{key}: referenced file not found: {path}")
        table = csvio.read_table(path)
        return [table] if dim == 1 else list(table.reshape(dim, -1))
    parts = [p.strip() for p in raw.split(";")]
    if len(parts) == 1 and dim == 1:
        return parts[0]
    if len(parts) != dim:
        raise ConfigError(f"{key}: expected {dim} components, got {len(parts)}")
    return parts


def _cell_values(values: dict, key: str, grid: Grid, scenario_dir: Path, n_steps=None):
    """Expression or @table evaluated per cell (optionally per step)."""
    if key not in values:
        return None
    raw = values[key]
    if raw.startswith("@"):
        path = scenario_dir / raw[1:]
        if not path.exists():
            raise ConfigError(f"{key}: referenced file not found: {path}")
        table = csvio.read_table(path)
        if table.ndim == 1 and table.size != grid.n_cells:
            raise ConfigError(f"{key}: table has {table.size} values, grid has {grid.n_cells} cells")
        if table.ndim == 2 and table.shape[0] != grid.n_cells:
            raise ConfigError(f"{key}: table has {table.shape[0]} rows, grid has {grid.n_cells} cells")
        return table
    try:
        expr = Expression(raw)
        coords = {"x1": grid.cell_centers[:, 0]}
        if grid.dim > 1:
            coords["x2"] = grid.cell_centers[:, 1]
        return expr(**coords)
    except ExpressionError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _bound_values(values: dict, key: str, dim: int, n_steps: int, dt: float,
                  scenario_dir: Path, default: float):
    if key not in values:
        return default
    raw = values[key]
    if raw.startswith("@"):
        path = scenario_dir / raw[1:]
        if not path.exists():
            raise ConfigError(f"{key}: referenced file not found: {path}")
        _, table = csvio.read_control_csv(path)
        if table.shape != (dim, n_steps):
            raise ConfigError(f"{key}: bound table has shape {table.shape}, expected ({dim}, {n_steps})")
        return table
    parts = [p.strip() for p in raw.split(";")]
    if len(parts) not in (1, dim):
        raise ConfigError(f"{key}: expected 1 or {dim} components, got {len(parts)}")
    rows = []
    t = dt * np.arange(1, n_steps + 1)
    for part in parts:
        try:
            rows.append(np.full(n_steps, float(part)))
            continue
        except ValueError:
            pass
        try:
            rows.append(np.broadcast_to(Expression(part)(t=t), (n_steps,)).copy())
        except ExpressionError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if len(rows) == 1 and dim > 1:
        rows = rows * dim
    return np.vstack(rows)


def load_scenario(path) -> Scenario:
    """Read, parse and cross-validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("file not found")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    values = parse_config_text(text, origin=str(path))
    base_dir = path.parent

    extent = _parse_float_list(values, "problem.extent")
    if not extent or len(extent) > 2:
        raise ConfigError("problem.extent: need 1 or 2 axis lengths")
    dim = len(extent)
    cells = _parse_int_list(values, "grid.cells")
    if len(cells) == 1 and dim == 2:
        cells = cells * 2
    if len(cells) != dim:
        raise ConfigError(f"grid.cells: expected {dim} entries, got {len(cells)}")
    n_steps = _parse_int(values, "grid.steps")
    if n_steps is None or n_steps < 1:
        raise ConfigError("grid.steps: need a positive step count")
    T = _parse_float(values, "problem.T")
    theta = _parse_float(values, "scheme.theta", 1.0)
    if not 0.5 <= theta <= 1.0:
        raise ConfigError("scheme.theta: must lie in [0.5, 1]")
    flux = values.get("scheme.flux", "central")
    if flux not in ("central", "upwind"):
        raise ConfigError(f"scheme.flux: unknown scheme {flux!r}")

    try:
        grid = Grid(tuple(extent), tuple(cells))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None

    dt = T / n_steps if T else None
    gamma = _parse_float_list(values, "weights.gamma", [0.0])
    beta = _parse_float_list(values, "weights.beta", [0.0])
    if len(gamma) == 1:
        gamma = gamma * dim
    if len(beta) == 1:
        beta = beta * dim
    try:
        spec = ProblemSpec(
            nu=_parse_float(values, "problem.nu"),
            extent=tuple(extent),
            T=T,
            c_field=_field_components(values, "fields.c", dim, base_dir, grid),
            b_field=_field_components(values, "fields.b", dim, base_dir, grid),
            rho0=_cell_values(values, "init.rho0", grid, base_dir),
            rho_Q=_cell_values(values, "targets.rho_Q", grid, base_dir, n_steps),
            rho_Omega=_cell_values(values, "targets.rho_Omega", grid, base_dir),
            alpha_Q=_parse_float(values, "weights.alpha_Q", 0.0),
            alpha_Omega=_parse_float(values, "weights.alpha_Omega", 0.0),
            gamma=gamma,
            beta=beta,
            u_min=_bound_values(values, "bounds.u_min", dim, n_steps, dt, base_dir, -np.inf),
            u_max=_bound_values(values, "bounds.u_max", dim, n_steps, dt, base_dir, np.inf),
        )
    except (ValidationError, ExpressionError) as exc:
        raise ConfigError(str(exc)) from None

    method = values.get("optimizer.method", "pgd")
    if method not in _METHOD_NAMES:
        raise ConfigError(f"optimizer.method: unknown method {method!r}")
    try:
        optimizer = OptimizerConfig(
            method=_METHOD_NAMES[method],
            max_iters=_parse_int(values, "optimizer.max_iters", 500),
            tol_pg=_parse_float(values, "optimizer.tol_pg", 1e-8),
            armijo_c=_parse_float(values, "optimizer.armijo_c", 1e-4),
            backtrack=_parse_float(values, "optimizer.backtrack", 0.5),
            step0=_parse_float(values, "optimizer.step0", 1.0),
            active_tol=_parse_float(values, "optimizer.active_tol", 1e-8),
            cg_max=_parse_int(values, "optimizer.cg_max", 50),
            cg_tol=_parse_float(values, "optimizer.cg_tol", 1e-2),
        )
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from None

    seed = _parse_int(values, "run.seed", 0)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("run.seed: must fit in an unsigned 64-bit integer")
    sonc_samples = _parse_int(values, "sonc.samples", 200)
    if sonc_samples < 1:
        raise ConfigError("sonc.samples: need at least one sample")

    return Scenario(
        spec=spec,
        grid=grid,
        n_steps=n_steps,
        theta=theta,
        flux_scheme=flux,
        optimizer=optimizer,
        seed=seed,
        sonc_samples=sonc_samples,
        u0_source=values.get("optimizer.u0"),
        base_dir=base_dir,
    )


def _parse_int_list(values: dict, key: str, default=None):
    if key not in values:
        return default
    parts = [p for p in values[key].replace(";", ",").split(",") if p.strip()]
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{key}: not an integer list: {values[key]!r}") from None
