"""Optimal control of a drift-diffusion probability density with
time-dependent, componentwise-bilinear controls.

The package provides a conservative finite-volume forward solver for

    d rho/dt - nu * Lap(rho) - div( rho * (c(x) + b(x) (*) u(t)) ) = 0

with zero total flux through the boundary, the transpose-exact adjoint and
reduced-cost derivatives built on top of it, and projected optimization
under box constraints with first- and second-order optimality diagnostics.
"""

from .fields import Expression, ExpressionError, evaluate_field
from .problem import (
    AssumptionReport,
    Grid,
    ProblemSpec,
    ValidationError,
    validate_assumptions,
)
from .operators import DiscreteOperators, assemble, flux_apply
from .trajectories import (
    ControlTrajectory,
    GradientTrajectory,
    StateTrajectory,
    control_inner,
    control_norm,
)
from .forward import SolverFailure, ThetaStepper, mass, solve_forward, solve_linearized
from .adjoint import solve_adjoint
from .objective import ControlProblem, Evaluation
from .optimize import (
    KKTReport,
    OptimizerConfig,
    OptimizerReport,
    SoncProbe,
    kkt_report,
    project,
    solve_pgd,
    solve_pncg,
    sonc_probe,
)
from .config import ConfigError, Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "ConfigError",
    "ControlProblem",
    "ControlTrajectory",
    "DiscreteOperators",
    "Evaluation",
    "Expression",
    "ExpressionError",
    "GradientTrajectory",
    "Grid",
    "Scenario",
    "KKTReport",
    "OptimizerConfig",
    "OptimizerReport",
    "ProblemSpec",
    "SolverFailure",
    "SoncProbe",
    "StateTrajectory",
    "ThetaStepper",
    "ValidationError",
    "assemble",
    "control_inner",
    "control_norm",
    "evaluate_field",
    "flux_apply",
    "kkt_report",
    "load_scenario",
    "mass",
    "project",
    "solve_adjoint",
    "solve_forward",
    "solve_linearized",
    "solve_pgd",
    "solve_pncg",
    "sonc_probe",
    "validate_assumptions",
    "__version__",
]
