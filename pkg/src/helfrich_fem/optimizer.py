"""Penalized Helfrich cost, Riesz shape gradients and the line-search descent loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from .assembly import assemble_divergence, assemble_h1_metric, assemble_mass, assemble_scalar_metric
from .curvature import PhysicalParams, bending_energy, solve_adjoint, solve_state
from .exceptions import ConfigurationError, DegeneracyError
from .fem import ScalarSpace, VectorSpace
from .geometry import DeformationState, measure, reduced_volume
from .shape_derivative import ConstraintParams, penalty_terms, shape_derivative_total
from .solvers import factorize, solve_saddle

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "J", "W", "Estar", "A", "V", "v", "gradnorm", "alpha", "rejects")
GRADIENT_MODES = ("h1", "stokes")


@dataclass
class OptimizerConfig:
    """All physical, penalty and step-size settings of a run.

    Penalty weights are multipliers of the normalized residuals (see
    :class:`ConstraintParams`); the defaults reproduce the equilibrium-shape
    benchmark settings ``c_V = 1/V0``, ``c_A = 2/A0``, ``c_Aloc = 1/|T0|``.
    """

    kb: float = 0.01
    H0: float = 0.0
    spontaneous_sign_flip: bool = False
    cA: float = 2.0
    cV: float = 1.0
    cAloc: float = 1.0
    A0: Optional[float] = None
    V0: Optional[float] = None
    reduced_volume: Optional[float] = None
    normalization: str = "supplementary"
    alpha: float = 0.025
    alpha_max: float = 0.1
    alpha_factor: float = 1.0
    Nmax: int = 1000
    tol_grad: float = 1e-12
    tol_step: float = 1e-11
    tol_cost: float = 1e-10
    M: int = 0
    gradient_mode: str = "h1"
    metric_epsilon: float = 1e-10
    order: int = 1
    derivative_mode: str = "full"
    continuation_rounds: int = 1
    continuation_factor: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.kb > 0:
            raise ConfigurationError("kb must be positive")
        if min(self.cA, self.cV, self.cAloc) < 0:
            raise ConfigurationError("penalty weights must be non-negative")
        if not 0 < self.alpha <= self.alpha_max:
            raise ConfigurationError("alpha must lie in (0, alpha_max]")
        if self.alpha_factor < 1.0:
            raise ConfigurationError("alpha_factor must be >= 1")
        if self.M < 0 or int(self.M) != self.M:
            raise ConfigurationError("M must be a non-negative integer")
        if self.Nmax < 0:
            raise ConfigurationError("Nmax must be non-negative")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigurationError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.order not in (1, 2):
            raise ConfigurationError("order must be 1 or 2")
        if self.gradient_mode == "stokes" and self.order != 2:
            raise ConfigurationError("stokes gradients need quadratic deformation fields (order = 2)")
        if self.normalization not in ("supplementary", "paper"):
            raise ConfigurationError("normalization must be 'supplementary' or 'paper'")
        if not self.metric_epsilon > 0:
            raise ConfigurationError("metric_epsilon must be positive")
        if self.reduced_volume is not None and not 0 < self.reduced_volume <= 1:
            raise ConfigurationError("reduced_volume must lie in (0, 1]")
        if self.continuation_rounds < 1 or self.continuation_factor <= 0:
            raise ConfigurationError("continuation needs rounds >= 1 and a positive factor")
        for name in ("tol_grad", "tol_step", "tol_cost"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.kb, self.H0, self.spontaneous_sign_flip)

    def constraints(self, initial_measures: dict) -> ConstraintParams:
        A0 = initial_measures["total_area"] if self.A0 is None else self.A0
        V0 = self.V0
        if self.reduced_volume is not None:
            V0 = self.reduced_volume * 4.0 * math.pi / 3.0 * (A0 / (4.0 * math.pi)) ** 1.5
        return ConstraintParams(
            self.cA, self.cV, self.cAloc, A0, V0, None, self.normalization
        ).resolved(initial_measures)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class Evaluation:
    state: DeformationState
    kappa: object
    measures: dict
    components: dict
    J: float


class Problem:
    """Spaces and fixed targets of one optimization run."""

    def __init__(self, mesh, config: OptimizerConfig, constraints: Optional[ConstraintParams] = None):
        self.mesh = mesh
        self.config = config
        self.params = config.params
        self.kspace = ScalarSpace(mesh, config.order)
        vorder = max(config.order, mesh.geometry_order)
        self.vspace = VectorSpace.of_order(mesh, vorder)
        if config.gradient_mode == "stokes":
            self.pspace = ScalarSpace(mesh, 1)
        if constraints is None:
            constraints = config.constraints(measure(self.initial_state()))
        self.constraints = constraints

    def initial_state(self) -> DeformationState:
        return DeformationState(self.mesh, space=self.vspace)

    def evaluate(self, state: DeformationState) -> Evaluation:
        mass = assemble_mass(self.kspace, state)
        kappa = solve_state(self.kspace, state, mass)
        kappa.mass = mass
        meas = measure(state)
        comps = cost_components(state, kappa, self.params, self.constraints, meas)
        return Evaluation(state, kappa, meas, comps, comps["J"])

    def load(self, ev: Evaluation):
        sigma = solve_adjoint(self.kspace, ev.state, ev.kappa, self.params, ev.kappa.mass)
        load = shape_derivative_total(
            ev.kappa, sigma, ev.state, self.params, self.constraints,
            self.config.derivative_mode, self.vspace, ev.measures,
        )
        return load, sigma

    def gradient(self, ev: Evaluation):
        load, sigma = self.load(ev)
        if self.config.gradient_mode == "stokes":
            X = riesz_gradient_div_free(load.values, ev.state, self.vspace, self.pspace, self.config.metric_epsilon)
        else:
            X = riesz_gradient(load.values, ev.state, self.vspace, self.config.metric_epsilon)
        return X, load, sigma


def cost_components(state, kappa, params: PhysicalParams, constraints: ConstraintParams, measures=None) -> dict:
    measures = measure(state) if measures is None else measures
    energy = bending_energy(kappa, state, params)
    pen = penalty_terms(constraints, measures)
    J = energy["W"] + pen["area"] + pen["volume"] + pen["local_area"]
    return {
        "J": J,
        "W": energy["W"],
        "E_star": energy["E_star"],
        "area_penalty": pen["area"],
        "volume_penalty": pen["volume"],
        "local_area_penalty": pen["local_area"],
    }


def cost(state, kappa, config: OptimizerConfig, constraints: ConstraintParams) -> dict:
    return cost_components(state, kappa, config.params, constraints)


def riesz_gradient(load, state, vspace: VectorSpace, epsilon: float = 1e-10) -> np.ndarray:
    """Solve ``(X, W)_H = load(W)`` for all ``W``; returns ``X`` with shape ``(dim, 3)``.

    The three components share one scalar block, factorized once.
    """
    load = np.asarray(load).reshape(-1, 3)
    if not np.any(load):
        return np.zeros_like(load)
    block = assemble_scalar_metric(vspace.scalar, state, epsilon)
    return factorize(block)(load)


def riesz_gradient_div_free(load, state, vspace: VectorSpace, pspace: ScalarSpace, epsilon: float = 1e-10):
    """Riesz representative constrained to ``(q, Div^S X) = 0`` for all pressures ``q``."""
    if vspace.order != pspace.order + 1:
        raise ConfigurationError("Taylor-Hood pairing needs velocity order = pressure order + 1")
    load = np.asarray(load).reshape(-1, 3)
    if not np.any(load):
        return np.zeros_like(load)
    A = assemble_h1_metric(vspace, epsilon, state)
    B = assemble_divergence(vspace, pspace, state)
    x, _ = solve_saddle(A, B, vspace.flatten(load))
    return vspace.unflatten(x)


@dataclass
class RunLog:
    rows: list = field(default_factory=list)
    M: int = 0
    stop_reason: str = ""
    final_state: Optional[DeformationState] = None
    final_kappa: object = None
    final_sigma: object = None
    constraints: Optional[ConstraintParams] = None
    area_drift: list = field(default_factory=list)
    divergence_residuals: list = field(default_factory=list)
    round_starts: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def converged(self) -> bool:
        return self.stop_reason in ("gradient", "cost", "step")


def check_acceptance_rule(log: RunLog, M: Optional[int] = None) -> bool:
    """True if every accepted J obeys the (non-)monotone acceptance rule.

    Rows that open a continuation round are compared against nothing, since
    the penalty weights changed there.
    """
    M = log.M if M is None else M
    J = log.column("J")
    start = 0
    restarts = set(log.round_starts)
    for i in range(1, len(J)):
        if i in restarts:
            start = i
            continue
        window = J[max(start, i - max(M, 1)) : i]
        if J[i] > window.max():
            return False
    return True


def _row(it, ev: Evaluation, gradnorm, alpha, rejects):
    A = ev.measures["total_area"]
    V = ev.measures["enclosed_volume"]
    return {
        "iter": it,
        "J": ev.J,
        "W": ev.components["W"],
        "Estar": ev.components["E_star"],
        "A": A,
        "V": V,
        "v": reduced_volume(A, V),
        "gradnorm": gradnorm,
        "alpha": alpha,
        "rejects": rejects,
    }


def line_search_step(problem: Problem, current: Evaluation, X, alpha: float, history, tol_step: float = 0.0):
    """Backtracking along ``-X``.

    Accepts the first candidate with ``J <= reference`` where the reference is
    the current cost (``M = 0``) or the maximum of the last ``M`` accepted
    costs.  Degenerate candidates count as rejections.  Returns
    ``(accepted, evaluation, alpha_used, new_alpha, rejects)``.
    """
    cfg = problem.config
    M = cfg.M
    reference = current.J if M == 0 else max(list(history)[-M:])
    rejects = 0
    while alpha >= tol_step:
        candidate_state = current.state.displaced(X, -alpha)
        try:
            cand = problem.evaluate(candidate_state)
            ok = np.isfinite(cand.J) and cand.J <= reference
        except DegeneracyError as exc:
            logger.debug("candidate rejected: %s", exc)
            ok = False
        if ok:
            return True, cand, alpha, min(cfg.alpha_max, alpha * cfg.alpha_factor), rejects
        rejects += 1
        alpha *= 0.5
    return False, current, alpha, alpha, rejects


def optimize(
    mesh,
    config: OptimizerConfig,
    on_row: Optional[Callable[[dict], None]] = None,
    on_snapshot: Optional[Callable] = None,
    snapshot_every: int = 0,
    constraints: Optional[ConstraintParams] = None,
    initial_displacement=None,
) -> RunLog:
    """Run the gradient descent loop, with optional penalty continuation rounds."""
    problem = Problem(mesh, config, constraints)
    state = problem.initial_state()
    if initial_displacement is not None:
        state = state.with_displacement(initial_displacement)
    try:
        current = problem.evaluate(state)
    except DegeneracyError as exc:
        raise DegeneracyError(f"initial geometry degenerate: {exc}", exc.element) from exc
    log = RunLog(M=config.M, constraints=problem.constraints)
    A0 = problem.constraints.A0

    def emit(row):
        log.rows.append(row)
        log.area_drift.append(abs(row["A"] - A0) / A0)
        if on_row is not None:
            on_row(row)

    emit(_row(0, current, float("nan"), config.alpha, 0))
    it = 0
    sigma = None
    for round_index in range(config.continuation_rounds):
        if round_index > 0:
            f = config.continuation_factor
            c = problem.constraints
            problem.constraints = replace(c, cA=c.cA * f, cV=c.cV * f, cAloc=c.cAloc * f)
            current = problem.evaluate(current.state)
            log.constraints = problem.constraints
            log.round_starts.append(len(log.rows))
        alpha = config.alpha
        history = [current.J]
        g0 = None
        log.stop_reason = "max_iterations"
        for _ in range(config.Nmax):
            if current.J < config.tol_cost:
                log.stop_reason = "cost"
                break
            try:
                X, load, sigma = problem.gradient(current)
            except DegeneracyError as exc:
                raise DegeneracyError(f"iteration {it}: {exc}", exc.element) from exc
            if config.gradient_mode == "stokes":
                log.divergence_residuals.append(_divergence_residual(problem, current.state, X))
            gnorm = float(np.linalg.norm(X))
            g0 = gnorm if g0 is None else g0
            if gnorm == 0.0 or gnorm < config.tol_grad * g0:
                log.stop_reason = "gradient"
                break
            accepted, new, used, alpha, rejects = line_search_step(
                problem, current, X, alpha, history, config.tol_step
            )
            if not accepted:
                log.stop_reason = "step"
                break
            it += 1
            current = new
            history.append(current.J)
            emit(_row(it, current, gnorm, used, rejects))
            if on_snapshot is not None and snapshot_every and it % snapshot_every == 0:
                on_snapshot(current.state, current.kappa, sigma, it)
    log.final_state = current.state
    log.final_kappa = current.kappa
    log.final_sigma = sigma
    return log


def _divergence_residual(problem, state, X) -> float:
    """``|int Div^S X|`` relative to ``||X||_H * area``."""
    B = assemble_divergence(problem.vspace, ScalarSpace(problem.mesh, 1), state)
    ones = np.ones(B.shape[0])
    total = abs(ones @ (B @ problem.vspace.flatten(X)))
    metric = assemble_h1_metric(problem.vspace, problem.config.metric_epsilon, state)
    flat = problem.vspace.flatten(X)
    hnorm = math.sqrt(max(flat @ (metric @ flat), 1e-300))
    return total / (hnorm * measure(state)["total_area"])
