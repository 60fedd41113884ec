"""Deterministic CSV export and import.

Floating-point values are printed with 17 significant digits, which
round-trips IEEE double exactly; rewriting the same data produces
byte-identical files.  Formats:

* density:   ``t,x1[,x2],rho`` -- one row per (time slice, cell)
* control:   ``t,u_1..u_d,phi_1..phi_d,class_1..class_d``
* iterations: ``iter,F,pg_norm,step``
* probe:     ``sample,value``
* plain tables: bare numbers, one row per cell
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .problem import Grid
from .trajectories import ControlTrajectory, StateTrajectory

__all__ = [
    "export_csv",
    "format_float",
    "write_density_csv",
    "write_control_csv",
    "write_iterations_csv",
    "write_probe_csv",
    "write_check_csv",
    "read_control_csv",
    "read_table",
]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _write_lines(path, header: str, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_density_csv(path, state: StateTrajectory, grid: Grid) -> None:
    """Long-format density trajectory: one row per time slice and cell."""
    coords = grid.cell_centers
    axis_names = ["x1", "x2"][: grid.dim]
    header = ",".join(["t", *axis_names, "rho"])
    times = state.times

    def rows():
        for k, t in enumerate(times):
            t_str = format_float(t)
            for c in range(grid.n_cells):
                yield [t_str, *(format_float(coords[c, j]) for j in range(grid.dim)),
                       format_float(state.values[c, k])]

    _write_lines(path, header, rows())


def write_control_csv(path, u: ControlTrajectory, phi: np.ndarray, labels: np.ndarray) -> None:
    """Control trajectory with gradient density and switching classification."""
    d = u.n_controls
    header = ",".join(
        ["t"]
        + [f"u_{i + 1}" for i in range(d)]
        + [f"phi_{i + 1}" for i in range(d)]
        + [f"class_{i + 1}" for i in range(d)]
    )
    times = u.times

    def rows():
        for k in range(u.n_steps):
            yield ([format_float(times[k])]
                   + [format_float(u.values[i, k]) for i in range(d)]
                   + [format_float(phi[i, k]) for i in range(d)]
                   + [str(labels[i, k]) for i in range(d)])

    _write_lines(path, header, rows())


def write_iterations_csv(path, report) -> None:
    """Optimizer history: value, residual and accepted step per iteration."""
    def rows():
        for i, f in enumerate(report.f_history):
            pg = report.pg_history[i] if i < len(report.pg_history) else report.pg_history[-1]
            step = report.step_history[i - 1] if 1 <= i <= len(report.step_history) else 0.0
            yield [str(i), format_float(f), format_float(pg), format_float(step)]

    _write_lines(path, "iter,F,pg_norm,step", rows())


def write_probe_csv(path, values: np.ndarray) -> None:
    _write_lines(path, "sample,value",
                 ([str(i), format_float(v)] for i, v in enumerate(values)))


def write_check_csv(path, rows) -> None:
    """Derivative-check sweeps: (direction, epsilon, reference, estimate, rel_error)."""
    _write_lines(
        path, "direction,epsilon,exact,estimate,rel_error",
        ([str(d), format_float(e), format_float(a), format_float(b), format_float(r)]
         for d, e, a, b, r in rows),
    )


def export_csv(obj, path, *, grid: Grid | None = None, phi: np.ndarray | None = None,
               labels: np.ndarray | None = None) -> None:
    """Type-dispatching export: states need ``grid``, controls need ``phi``
    and ``labels``, optimizer reports need nothing extra."""
    if isinstance(obj, StateTrajectory):
        if grid is None:
            raise ValueError("exporting a state trajectory needs the grid")
        write_density_csv(path, obj, grid)
    elif isinstance(obj, ControlTrajectory):
        if phi is None or labels is None:
            raise ValueError("exporting a control trajectory needs phi and labels")
        write_control_csv(path, obj, phi, labels)
    elif hasattr(obj, "f_history"):
        write_iterations_csv(path, obj)
    else:
        raise TypeError(f"no CSV export for {type(obj).__name__}")


def read_control_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read the ``u_*`` columns of a control CSV; returns (times, values)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        u_cols = [j for j, name in enumerate(header) if name.startswith("u_")]
        t_col = header.index("t") if "t" in header else None
        if not u_cols:
            raise ValueError(f"{path}: no control columns (u_1, u_2, ...) found")
        times, values = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            times.append(float(parts[t_col]) if t_col is not None else np.nan)
            values.append([float(parts[j]) for j in u_cols])
    return np.asarray(times), np.asarray(values).T


def read_table(path) -> np.ndarray:
    """Bare numeric table (comma or whitespace separated)."""
    path = Path(path)
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=1)
    except ValueError:
        table = np.loadtxt(path, ndmin=1)
    if not np.all(np.isfinite(table)):
        raise ValueError(f"{path}: table contains non-finite values")
    return table
