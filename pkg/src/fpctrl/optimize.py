"""Projected optimization over the admissible control box.

Two methods minimize the reduced cost subject to
``u_min <= u <= u_max``:

``solve_pgd``
    Projected gradient along the projection arc, monotone Armijo
    backtracking, spectral (Barzilai-Borwein) initial step after the first
    iteration.  Iterates stay feasible by construction and the cost history
    is nonincreasing.

``solve_pncg``
    Projected Newton: a truncated conjugate-gradient solve of the reduced
    Hessian system on the free coordinates (exact Hessian actions via the
    second-order adjoint), projected Armijo line search, projected-gradient
    fallback whenever CG returns a non-descent direction.  Requires a
    strictly positive Tikhonov weight on every channel.

Both terminate on the fixed-point residual ``||u - P(u - phi)||`` measured
in the time-weighted L2 norm.  First-order optimality is reported through
the switching structure of the gradient: at a box-constrained minimizer
``phi_i > 0`` forces the control to its lower bound, ``phi_i < 0`` to the
upper one, and ``phi_i = 0`` on the strictly interior set.
:func:`sonc_probe` samples the critical cone (sign-constrained at active
bounds, zeroed where the gradient is nonzero) for directions of negative
curvature, a numerical witness of the second-order necessary condition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .objective import ControlProblem, Evaluation
from .trajectories import ControlTrajectory, control_inner, control_norm

__all__ = [
    "ACTIVE_LOWER",
    "INACTIVE",
    "ACTIVE_UPPER",
    "CLASS_LABELS",
    "KKTReport",
    "OptimizerConfig",
    "OptimizerReport",
    "SoncProbe",
    "kkt_report",
    "project",
    "solve_pgd",
    "solve_pncg",
    "sonc_probe",
]

log = logging.getLogger(__name__)

ACTIVE_LOWER = -1
INACTIVE = 0
ACTIVE_UPPER = 1
CLASS_LABELS = {ACTIVE_LOWER: "active_lower", INACTIVE: "inactive", ACTIVE_UPPER: "active_upper"}


def project(u: ControlTrajectory, u_min, u_max) -> ControlTrajectory:
    """Componentwise clamp onto the admissible box; idempotent."""
    lo = np.asarray(u_min, dtype=float)
    hi = np.asarray(u_max, dtype=float)
    if lo.ndim == 1:
        lo = lo.reshape(-1, 1)
    if hi.ndim == 1:
        hi = hi.reshape(-1, 1)
    return u.replace(np.clip(u.values, lo, hi))


@dataclass
class OptimizerConfig:
    """Knobs for the projected methods.

    ``active_tol`` is a relative activity tolerance: a coordinate counts as
    active when its distance to a bound is below ``active_tol`` times the
    local bound range (absolute when the range is unbounded).
    """

    method: str = "projected_gradient"
    max_iters: int = 500
    tol_pg: float = 1e-8
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    step0: float = 1.0
    active_tol: float = 1e-8
    cg_max: int = 50
    cg_tol: float = 1e-2
    max_backtracks: int = 60
    spectral: bool = True
    step_min: float = 1e-12
    step_max: float = 1e12

    METHODS = ("projected_gradient", "projected_newton_cg")

    def __post_init__(self):
        if self.method not in self.METHODS:
            raise ValueError(f"method must be one of {self.METHODS}")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack must lie in (0, 1)")
        if self.tol_pg <= 0 or self.step0 <= 0 or self.active_tol <= 0:
            raise ValueError("tolerances and step0 must be positive")


@dataclass
class KKTReport:
    """Switching structure and first-order residuals at a feasible control.

    ``classification`` holds -1/0/+1 for active-lower/inactive/active-upper
    per control entry.  ``stationarity_residual`` is the largest gradient
    magnitude over inactive entries; ``complementarity_violation`` the
    largest wrong-signed gradient over active entries (an entry at its
    lower bound may not have a negative gradient, and vice versa).
    """

    classification: np.ndarray
    stationarity_residual: float
    complementarity_violation: float
    projected_gradient_norm: float
    active_tol: float

    def labels(self) -> np.ndarray:
        flat = np.array([CLASS_LABELS[int(c)] for c in self.classification.ravel()])
        return flat.reshape(self.classification.shape)

    @property
    def n_active(self) -> int:
        return int(np.sum(self.classification != INACTIVE))

    def summary(self) -> str:
        return (
            f"active_lower={int(np.sum(self.classification == ACTIVE_LOWER))} "
            f"inactive={int(np.sum(self.classification == INACTIVE))} "
            f"active_upper={int(np.sum(self.classification == ACTIVE_UPPER))} "
            f"stationarity={self.stationarity_residual:.3e} "
            f"complementarity={self.complementarity_violation:.3e} "
            f"pg_norm={self.projected_gradient_norm:.3e}"
        )


@dataclass
class OptimizerReport:
    """Iteration history and final diagnostics of one optimization run."""

    u: ControlTrajectory
    f_history: list[float]
    pg_history: list[float]
    step_history: list[float]
    kkt: KKTReport
    termination: str
    n_iters: int
    method: str
    cg_iterations: list[int] = field(default_factory=list)

    @property
    def f_final(self) -> float:
        return self.f_history[-1]


def _activity_eps(problem: ControlProblem, active_tol: float) -> np.ndarray:
    span = problem.u_max - problem.u_min
    eps = np.where(np.isfinite(span), np.maximum(span, 1.0e-300) * active_tol, active_tol)
    return eps


def _classify(problem: ControlProblem, u_values: np.ndarray, active_tol: float) -> np.ndarray:
    eps = _activity_eps(problem, active_tol)
    dist_lo = u_values - problem.u_min
    dist_hi = problem.u_max - u_values
    classification = np.zeros(u_values.shape, dtype=np.int8)
    near_lo = dist_lo <= eps
    near_hi = dist_hi <= eps
    # Degenerate boxes: pick the nearer bound.
    classification[near_lo & (~near_hi | (dist_lo <= dist_hi))] = ACTIVE_LOWER
    classification[near_hi & (~near_lo | (dist_hi < dist_lo))] = ACTIVE_UPPER
    return classification


def _pg_residual(problem: ControlProblem, u_values: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Fixed-point residual u - P(u - phi) of the unit projected-gradient map."""
    return u_values - np.clip(u_values - phi, problem.u_min, problem.u_max)


def kkt_report(problem: ControlProblem, u: ControlTrajectory,
               active_tol: float | None = None, phi: np.ndarray | None = None) -> KKTReport:
    """Classify every control entry and measure the first-order residuals."""
    if phi is None:
        phi = problem.gradient(u).values
    active_tol = OptimizerConfig().active_tol if active_tol is None else active_tol
    classification = _classify(problem, u.values, active_tol)
    inactive = classification == INACTIVE
    stationarity = float(np.max(np.abs(phi[inactive]), initial=0.0))
    comp_lo = np.maximum(0.0, -phi[classification == ACTIVE_LOWER])
    comp_hi = np.maximum(0.0, phi[classification == ACTIVE_UPPER])
    complementarity = float(max(np.max(comp_lo, initial=0.0), np.max(comp_hi, initial=0.0)))
    pg_norm = control_norm(_pg_residual(problem, u.values, phi), problem.dt)
    return KKTReport(
        classification=classification,
        stationarity_residual=stationarity,
        complementarity_violation=complementarity,
        projected_gradient_norm=pg_norm,
        active_tol=active_tol,
    )


def _armijo_arc(problem: ControlProblem, ev: Evaluation, phi: np.ndarray,
                step: float, config: OptimizerConfig):
    """Backtrack along u(s) = P(u - s*phi) until sufficient decrease holds.

    Accepts when F(u(s)) <= F(u) - (armijo_c / s) * ||u(s) - u||^2, the
    projection-arc form of the Armijo rule.
    """
    u = ev.u
    s = step
    for _ in range(config.max_backtracks):
        trial_values = np.clip(u.values - s * phi, problem.u_min, problem.u_max)
        du = trial_values - u.values
        norm2 = control_inner(du, du, problem.dt)
        if norm2 == 0.0:
            return None, s, 0.0  # stationary: the arc does not move
        trial = u.replace(trial_values)
        trial_ev = problem.evaluate(trial, need_gradient=False)
        if trial_ev.value <= ev.value - config.armijo_c / s * norm2:
            return trial_ev, s, norm2
        s *= config.backtrack
    return None, s, None


def solve_pgd(problem: ControlProblem, u0: ControlTrajectory,
              config: OptimizerConfig | None = None) -> OptimizerReport:
    """Projected gradient descent with monotone Armijo backtracking.

    The initial iterate is projected onto the box; afterwards every
    accepted step keeps ``F`` strictly decreasing.  The spectral step
    reuses the last curvature estimate ``<du, du>/<du, dphi>`` as the next
    trial step (clamped to ``[step_min, step_max]``), which is what makes
    plain projected gradient practical on stiff tracking problems.
    """
    config = config or OptimizerConfig()
    u = project(u0, problem.u_min, problem.u_max)
    ev = problem.evaluate(u, need_gradient=True)
    f_hist, pg_hist, step_hist = [ev.value], [], []
    termination = "max_iters"
    step = config.step0
    n_iters = 0

    for n_iters in range(1, config.max_iters + 1):
        phi = ev.phi
        pg_norm = control_norm(_pg_residual(problem, ev.u.values, phi), problem.dt)
        pg_hist.append(pg_norm)
        if pg_norm <= config.tol_pg:
            termination = "converged"
            break

        trial_ev, s_used, _ = _armijo_arc(problem, ev, phi, step, config)
        if trial_ev is None:
            termination = "line_search_failure"
            break
        problem.complete_gradient(trial_ev)

        if config.spectral:
            du = trial_ev.u.values - ev.u.values
            dphi = trial_ev.phi - phi
            curvature = control_inner(du, dphi, problem.dt)
            if curvature > 0.0:
                step = float(np.clip(control_inner(du, du, problem.dt) / curvature,
                                     config.step_min, config.step_max))
            else:
                step = config.step0
        else:
            step = config.step0

        ev = trial_ev
        f_hist.append(ev.value)
        step_hist.append(s_used)
        log.debug("pgd iter %d: F=%.12e pg=%.3e step=%.3e", n_iters, ev.value, pg_norm, s_used)
    else:
        pg_hist.append(control_norm(_pg_residual(problem, ev.u.values, ev.phi), problem.dt))

    kkt = kkt_report(problem, ev.u, config.active_tol, ev.phi)
    return OptimizerReport(
        u=ev.u, f_history=f_hist, pg_history=pg_hist, step_history=step_hist,
        kkt=kkt, termination=termination, n_iters=n_iters, method="projected_gradient",
    )


def _truncated_cg(hess_vec, g_free: np.ndarray, config: OptimizerConfig) -> tuple[np.ndarray, int]:
    """Conjugate gradients on H d = -g, stopped on the forcing tolerance or
    nonpositive curvature (returning the best direction found so far)."""
    d = np.zeros_like(g_free)
    r = -g_free.copy()
    p = r.copy()
    rr = float(r @ r)
    tol2 = (config.cg_tol * np.sqrt(rr)) ** 2
    n_matvec = 0
    for _ in range(config.cg_max):
        if rr <= tol2:
            break
        Hp = hess_vec(p)
        n_matvec += 1
        curved = float(p @ Hp)
        if curved <= 0.0:
            if not d.any():
                d = r.copy()  # steepest descent when the very first direction curves down
            break
        alpha = rr / curved
        d = d + alpha * p
        r = r - alpha * Hp
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d, n_matvec


def solve_pncg(problem: ControlProblem, u0: ControlTrajectory,
               config: OptimizerConfig | None = None) -> OptimizerReport:
    """Projected Newton with truncated CG on the free coordinates.

    The free set keeps every entry except those pinned at a bound with a
    gradient pushing outward; the Newton direction is zero on the pinned
    set, so projected steps cannot leave the box through it.  Falls back to
    a projected gradient step whenever CG fails to deliver descent.
    """
    config = config or OptimizerConfig()
    if float(np.min(problem.gamma)) <= 0.0:
        raise ValueError("projected Newton-CG requires min gamma > 0")
    u = project(u0, problem.u_min, problem.u_max)
    ev = problem.evaluate(u, need_gradient=True)
    f_hist, pg_hist, step_hist, cg_hist = [ev.value], [], [], []
    termination = "max_iters"
    n_iters = 0

    for n_iters in range(1, config.max_iters + 1):
        phi = ev.phi
        pg_norm = control_norm(_pg_residual(problem, ev.u.values, phi), problem.dt)
        pg_hist.append(pg_norm)
        if pg_norm <= config.tol_pg:
            termination = "converged"
            break

        classification = _classify(problem, ev.u.values, config.active_tol)
        pinned = ((classification == ACTIVE_LOWER) & (phi > 0)) | ((classification == ACTIVE_UPPER) & (phi < 0))
        free = ~pinned

        d_values = None
        n_cg = 0
        if np.any(free):
            def hess_vec(d_free):
                full = np.zeros_like(phi)
                full[free] = d_free
                hv = problem.hessian_vector(ev.u, ev.u.replace(full), ev)
                return hv[free]

            d_free, n_cg = _truncated_cg(hess_vec, phi[free], config)
            if d_free.any():
                d_values = np.zeros_like(phi)
                d_values[free] = d_free
                if control_inner(d_values, phi, problem.dt) >= 0.0:
                    d_values = None  # non-descent; fall back below
        cg_hist.append(n_cg)

        trial_ev, s_used = None, 0.0
        if d_values is not None:
            trial_ev, s_used = _armijo_direction(problem, ev, phi, d_values, config)
        if trial_ev is None:
            trial_ev, s_used, _ = _armijo_arc(problem, ev, phi, config.step0, config)
            if trial_ev is None:
                termination = "line_search_failure"
                break
        problem.complete_gradient(trial_ev)
        ev = trial_ev
        f_hist.append(ev.value)
        step_hist.append(s_used)
        log.debug("pncg iter %d: F=%.12e pg=%.3e cg=%d", n_iters, ev.value, pg_norm, n_cg)
    else:
        pg_hist.append(control_norm(_pg_residual(problem, ev.u.values, ev.phi), problem.dt))

    kkt = kkt_report(problem, ev.u, config.active_tol, ev.phi)
    return OptimizerReport(
        u=ev.u, f_history=f_hist, pg_history=pg_hist, step_history=step_hist,
        kkt=kkt, termination=termination, n_iters=n_iters, method="projected_newton_cg",
        cg_iterations=cg_hist,
    )


def _armijo_direction(problem: ControlProblem, ev: Evaluation, phi: np.ndarray,
                      direction: np.ndarray, config: OptimizerConfig):
    """Backtrack along u(s) = P(u + s*d) with the directional Armijo test."""
    s = 1.0
    for _ in range(config.max_backtracks):
        trial_values = np.clip(ev.u.values + s * direction, problem.u_min, problem.u_max)
        du = trial_values - ev.u.values
        slope = control_inner(phi, du, problem.dt)
        if not du.any():
            return None, s
        trial = ev.u.replace(trial_values)
        trial_ev = problem.evaluate(trial, need_gradient=False)
        target = ev.value + config.armijo_c * slope if slope < 0.0 else ev.value
        if trial_ev.value <= target and trial_ev.value < ev.value:
            return trial_ev, s
        s *= config.backtrack
    return None, s


@dataclass
class SoncProbe:
    """Sampled lower bound of the quadratic form over the critical cone."""

    min_value: float
    argmin_direction: ControlTrajectory | None
    degenerate: bool
    values: np.ndarray
    n_samples: int

    @property
    def nonnegative(self) -> bool:
        return self.degenerate or self.min_value >= -1e-8


def sonc_probe(problem: ControlProblem, u: ControlTrajectory, n_samples: int = 200,
               rng_seed: int = 0, active_tol: float | None = None) -> SoncProbe:
    """Sample the critical cone at ``u`` and evaluate the quadratic form.

    Directions are drawn standard-normal, projected into the cone (made
    nonnegative at active lower bounds, nonpositive at active upper bounds,
    zeroed wherever the gradient magnitude exceeds the activity tolerance),
    and normalized in the time-weighted L2 norm.  A negative minimum well
    below roundoff at a converged point contradicts second-order necessity
    and indicates a modeling or implementation problem.
    """
    ev = problem.evaluate(u, need_gradient=True)
    report = kkt_report(problem, u, active_tol, ev.phi)
    eps = _activity_eps(problem, report.active_tol)
    forced_zero = np.abs(ev.phi) > eps
    if np.all(forced_zero):
        return SoncProbe(np.inf, None, True, np.zeros(0), n_samples)

    rng = np.random.default_rng(rng_seed)
    values = np.empty(n_samples)
    best = (np.inf, None)
    for j in range(n_samples):
        w = rng.standard_normal(size=ev.phi.shape)
        w[report.classification == ACTIVE_LOWER] = np.abs(w[report.classification == ACTIVE_LOWER])
        w[report.classification == ACTIVE_UPPER] = -np.abs(w[report.classification == ACTIVE_UPPER])
        w[forced_zero] = 0.0
        norm = control_norm(w, problem.dt)
        if norm == 0.0:
            values[j] = np.inf
            continue
        v = u.replace(w / norm)
        values[j] = problem.quadratic_form(u, v, v, ev)
        if values[j] < best[0]:
            best = (values[j], v)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return SoncProbe(np.inf, None, True, values, n_samples)
    return SoncProbe(float(np.min(finite)), best[1], False, values, n_samples)
