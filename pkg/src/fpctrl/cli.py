"""Batch command-line front end.

Usage::

    fpctrl <subcommand> --config scenario.cfg [--out DIR] [--seed N]

Subcommands: ``solve-forward``, ``optimize``, ``check-gradient``,
``check-hessian``, ``kkt-report``, ``sonc-probe``, ``validate``.

Outputs are deterministic CSV files in the ``--out`` directory (current
directory by default); identical config and seed produce byte-identical
files.  Exit codes: 0 success, 1 validation error, 2 solver failure,
3 config parse error.  Every failure prints one machine-parsable
``category: reason`` line to stderr.  Verbosity is controlled by the
``FPCTRL_LOG`` environment variable (``quiet``, ``info`` or ``debug``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .config import ConfigError, Scenario, load_scenario
from .forward import SolverFailure, mass
from .optimize import kkt_report, solve_pgd, solve_pncg, sonc_probe
from .problem import ValidationError, validate_assumptions
from .trajectories import control_inner

__all__ = ["main", "run"]

log = logging.getLogger("fpctrl")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_CONFIG = 3

EPSILONS_GRADIENT = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
EPSILONS_HESSIAN = (1e-2, 1e-3, 1e-4)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line reason instead of usage dump
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fpctrl", description=__doc__, add_help=True)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve-forward", "optimize", "check-gradient", "check-hessian",
                 "kkt-report", "sonc-probe", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
    return parser


def _setup_logging():
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("FPCTRL_LOG", "info"), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(argv) -> int:
    """Dispatch one subcommand; returns the process exit code."""
    _setup_logging()
    try:
        args = _build_parser().parse_args(argv)
        scenario = load_scenario(args.config)
        seed = scenario.seed if args.seed is None else args.seed
        if seed < 0 or seed >= 2**64:
            raise ConfigError("--seed: must fit in an unsigned 64-bit integer")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = _COMMANDS[args.command]
        return handler(scenario, out_dir, seed)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailure as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"solver: i/o failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:  # inconsistent data caught past config parsing
        print(f"validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run(sys.argv[1:]))


def _cmd_validate(scenario: Scenario, out_dir: Path, seed: int) -> int:
    report = validate_assumptions(scenario.spec, scenario.grid)
    print(report.summary())
    return EXIT_OK


def _cmd_solve_forward(scenario: Scenario, out_dir: Path, seed: int) -> int:
    problem = scenario.problem()
    u = scenario.initial_control(problem)
    rho = problem.solve_state(u)
    csvio.write_density_csv(out_dir / "density.csv", rho, scenario.grid)
    masses = mass(rho, problem.ops)
    drift = float(np.abs(masses - masses[0]).max())
    print(f"solve-forward: steps={problem.n_steps} mass_drift={csvio.format_float(drift)}")
    log.info("density written to %s", out_dir / "density.csv")
    return EXIT_OK


def _cmd_optimize(scenario: Scenario, out_dir: Path, seed: int) -> int:
    problem = scenario.problem()
    u0 = scenario.initial_control(problem)
    solver = solve_pncg if scenario.optimizer.method == "projected_newton_cg" else solve_pgd
    report = solver(problem, u0, scenario.optimizer)
    phi = problem.gradient(report.u).values
    csvio.write_control_csv(out_dir / "control.csv", report.u, phi, report.kkt.labels())
    csvio.write_density_csv(out_dir / "state.csv", problem.solve_state(report.u), scenario.grid)
    csvio.write_iterations_csv(out_dir / "iterations.csv", report)
    print(f"optimize: method={report.method} termination={report.termination} "
          f"iters={report.n_iters} F={csvio.format_float(report.f_final)}")
    print(f"optimize: kkt {report.kkt.summary()}")
    return EXIT_OK


def _cmd_check_gradient(scenario: Scenario, out_dir: Path, seed: int) -> int:
    problem = scenario.problem()
    u = scenario.initial_control(problem)
    phi = problem.gradient(u).values
    rng = np.random.default_rng(seed)
    rows = []
    headline = 0.0
    for direction in range(5):
        v = problem.control(rng.standard_normal(u.values.shape))
        exact = control_inner(phi, v.values, problem.dt)
        for eps in EPSILONS_GRADIENT:
            up = u.replace(u.values + eps * v.values)
            um = u.replace(u.values - eps * v.values)
            fd = (problem.reduced_cost(up) - problem.reduced_cost(um)) / (2 * eps)
            rel = abs(fd - exact) / max(abs(exact), 1e-300)
            rows.append((direction, eps, exact, fd, rel))
            if eps == 1e-5:
                headline = max(headline, rel)
    csvio.write_check_csv(out_dir / "gradient_check.csv", rows)
    print(f"check-gradient: max_rel_error={csvio.format_float(headline)} at eps=1e-05")
    return EXIT_OK


def _cmd_check_hessian(scenario: Scenario, out_dir: Path, seed: int) -> int:
    problem = scenario.problem()
    u = scenario.initial_control(problem)
    f0 = problem.reduced_cost(u)
    rng = np.random.default_rng(seed)
    rows = []
    headline = 0.0
    for direction in range(5):
        v = problem.control(rng.standard_normal(u.values.shape))
        qvv = problem.quadratic_form(u, v, v)
        for eps in EPSILONS_HESSIAN:
            up = u.replace(u.values + eps * v.values)
            um = u.replace(u.values - eps * v.values)
            fd2 = (problem.reduced_cost(up) - 2 * f0 + problem.reduced_cost(um)) / eps**2
            rel = abs(fd2 - qvv) / max(abs(qvv), 1e-300)
            rows.append((direction, eps, qvv, fd2, rel))
            if eps == 1e-3:
                headline = max(headline, rel)
    csvio.write_check_csv(out_dir / "hessian_check.csv", rows)
    print(f"check-hessian: max_rel_error={csvio.format_float(headline)} at eps=1e-03")
    return EXIT_OK


def _cmd_kkt_report(scenario: Scenario, out_dir: Path, seed: int) -> int:
    problem = scenario.problem()
    u = scenario.initial_control(problem)
    phi = problem.gradient(u).values
    report = kkt_report(problem, u, scenario.optimizer.active_tol, phi)
    csvio.write_control_csv(out_dir / "control.csv", u, phi, report.labels())
    print(f"kkt-report: {report.summary()}")
    return EXIT_OK


def _cmd_sonc_probe(scenario: Scenario, out_dir: Path, seed: int) -> int:
    problem = scenario.problem()
    u = scenario.initial_control(problem)
    probe = sonc_probe(problem, u, n_samples=scenario.sonc_samples, rng_seed=seed,
                       active_tol=scenario.optimizer.active_tol)
    csvio.write_probe_csv(out_dir / "probe.csv", probe.values)
    if probe.degenerate:
        print("sonc-probe: degenerate critical cone (every direction forced to zero)")
    else:
        print(f"sonc-probe: samples={probe.n_samples} "
              f"min_value={csvio.format_float(probe.min_value)}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "solve-forward": _cmd_solve_forward,
    "optimize": _cmd_optimize,
    "check-gradient": _cmd_check_gradient,
    "check-hessian": _cmd_check_hessian,
    "kkt-report": _cmd_kkt_report,
    "sonc-probe": _cmd_sonc_probe,
}
