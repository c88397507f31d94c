"""First shape derivative of the penalized bending cost as a vector load.

The load is a ``(dim, 3)`` array ``L`` over a vector Lagrange space: the
derivative in direction ``X`` is ``sum(L * X)``.  Terms follow the Lagrangian
``W + int kappa sigma + sum_T int tr(d^S nu) sigma + sum_dT int arcsin(mu . <nu>) sigma``
plus the penalty constraints, differentiated with fixed (transported) kappa
and sigma coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import interpolate_at_quadrature, scatter_vector
from .curvature import (
    CurvatureField,
    MultiplierField,
    PhysicalParams,
    check_fold,
    edge_jump_terms,
    safe_arcsin,
)
from .exceptions import ConfigurationError, DegeneracyError
from .fem import VectorSpace, contract
from .geometry import (
    DeformationState,
    _basis_tables,
    element_quadrature,
    measure,
    surface_gradients,
)

logger = logging.getLogger(__name__)

JUMP_DENOMINATOR_FLOOR = 1e-8
NORMALIZATIONS = ("supplementary", "paper")


class FloorCounter:
    def __init__(self):
        self.count = 0


denominator_floors = FloorCounter()


@dataclass(frozen=True)
class ConstraintParams:
    """Penalty weights and targets.

    In ``supplementary`` normalization the area, volume and local-area
    residuals are divided by ``A0``, ``V0`` and ``|T0|``; in ``paper`` mode the
    weights are used as given.  Targets left as ``None`` are filled from the
    current geometry by :meth:`resolved`.
    """

    cA: float = 0.0
    cV: float = 0.0
    cAloc: float = 0.0
    A0: Optional[float] = None
    V0: Optional[float] = None
    T0: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    normalization: str = "supplementary"

    def __post_init__(self):
        if min(self.cA, self.cV, self.cAloc) < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.T0 is not None and np.any(np.asarray(self.T0) <= 0):
            raise ValueError("reference element areas must be positive")

    def resolved(self, measures: dict) -> "ConstraintParams":
        return replace(
            self,
            A0=measures["total_area"] if self.A0 is None else self.A0,
            V0=measures["enclosed_volume"] if self.V0 is None else self.V0,
            T0=np.array(measures["per_element_areas"]) if self.T0 is None else np.asarray(self.T0),
        )

    def scales(self):
        if self.normalization == "paper":
            return 1.0, 1.0, np.ones_like(self.T0)
        return 1.0 / self.A0, 1.0 / self.V0, 1.0 / self.T0


def penalty_terms(constraints: ConstraintParams, measures: dict) -> dict:
    """Penalty components and their derivatives with respect to A, V and |T|."""
    c = constraints.resolved(measures)
    nA, nV, nT = c.scales()
    dA = measures["total_area"] - c.A0
    dV = measures["enclosed_volume"] - c.V0
    dT = measures["per_element_areas"] - c.T0
    return {
        "area": c.cA * dA**2 * nA,
        "volume": c.cV * dV**2 * nV,
        "local_area": float(np.sum(c.cAloc * dT**2 * nT)),
        "d_area": 2.0 * c.cA * dA * nA,
        "d_volume": 2.0 * c.cV * dV * nV,
        "d_local": 2.0 * c.cAloc * dT * nT,
    }


@dataclass
class ShapeGradientLoad:
    values: np.ndarray  # (dim, 3)
    space: VectorSpace
    flags: frozenset = frozenset()

    def __call__(self, X) -> float:
        return float(np.sum(self.values * np.asarray(X).reshape(self.values.shape)))

    def __add__(self, other: "ShapeGradientLoad") -> "ShapeGradientLoad":
        return ShapeGradientLoad(self.values + other.values, self.space, self.flags | other.flags)

    def flat(self) -> np.ndarray:
        return self.space.flatten(self.values)


def _coeffs(field_or_array):
    if isinstance(field_or_array, (CurvatureField, MultiplierField)):
        return field_or_array.coeffs
    return np.asarray(field_or_array)


def _vector_space(state, vector_space):
    return state.space if vector_space is None else vector_space


def _check_mode(mode, state, kspace):
    if mode not in ("full", "lowest_order"):
        raise ConfigurationError(f"unknown shape derivative mode {mode!r}")
    if mode == "lowest_order" and (state.geometry_order != 1 or kspace.order != 1):
        raise ConfigurationError("lowest-order shape derivative requires k = 1 on affine geometry")


def assemble_equation_diff(kappa: CurvatureField, sigma, state=None, vector_space=None, mode="full") -> ShapeGradientLoad:
    """Derivative of the state-equation part of the Lagrangian."""
    state = kappa.state if state is None else state
    vspace = _vector_space(state, vector_space)
    kspace = kappa.space
    _check_mode(mode, state, kspace)
    sig = _coeffs(sigma)
    order = max(kspace.order, vspace.order)
    rule, geo = element_quadrature(state, order)
    dA = geo.area * rule.weights
    kq = interpolate_at_quadrature(kspace, kappa.coeffs, rule.points)
    sq = interpolate_at_quadrature(kspace, sig, rule.points)
    _, grads_v, _ = _basis_tables(vspace.order, rule.points)
    sgN = surface_gradients(geo, grads_v)
    density = sq * kq + geo.trace * sq
    local = contract("knac,kn->kac", sgN, density * dA)
    if mode == "full":
        _, grads_k, _ = _basis_tables(kspace.order, rule.points)
        grad_sigma = contract("knbc,kb->knc", surface_gradients(geo, grads_k), sig[kspace.cell_dofs])
        local += contract("knad,knd,knc,kn->kac", sgN, grad_sigma, geo.nu, dA)
        local -= contract("kncd,knad,kn->kac", geo.dnu, sgN, sq * dA)
    out = scatter_vector(vspace.scalar.cell_dofs, local, vspace.scalar.dim)

    edges, pairing = edge_jump_terms(state, kspace.order)
    check_fold(pairing)
    for side in (0, 1):
        sd = edges.sides[side]
        tri = sd.triangles
        vals_k, _, _ = _basis_tables(kspace.order, sd.points)
        _, grads_v, _ = _basis_tables(vspace.order, sd.points)
        sg = surface_gradients(sd.geo, grads_v)
        s_side = contract("kna,ka->kn", vals_k, sig[kspace.cell_dofs[tri]])
        dl = sd.length * edges.weights
        x = pairing[side]
        n = edges.normal
        g_mu = contract("knac,knc->kna", sg, sd.mu)
        g_tau = contract("knac,knc->kna", sg, sd.tau)
        g_n = contract("knac,knc->kna", sg, n)
        root = np.sqrt(np.clip(1.0 - x**2, 0.0, None))
        floored = root < JUMP_DENOMINATOR_FLOOR
        if np.any(floored):
            denominator_floors.count += int(floored.sum())
            logger.warning("floored %d jump denominators", int(floored.sum()))
        root = np.maximum(root, JUMP_DENOMINATOR_FLOOR)
        w = s_side * dl
        loc = contract("kna,knc,kn->kac", g_tau, sd.tau, safe_arcsin(x) * w)
        loc += contract("kna,knc,kn->kac", g_mu, n, w / root)
        loc -= contract("kna,knc,kn->kac", g_n, sd.mu, w / root)
        if mode == "full":
            loc -= contract("kna,knc,kn->kac", g_mu, sd.geo.nu, w)
        out += scatter_vector(vspace.scalar.cell_dofs[tri], loc, vspace.scalar.dim)
    return ShapeGradientLoad(out, vspace, frozenset({"equation", mode}))


def assemble_cost_diff(
    kappa: CurvatureField,
    state: DeformationState,
    params: PhysicalParams,
    constraints: ConstraintParams,
    vector_space=None,
    measures: Optional[dict] = None,
) -> ShapeGradientLoad:
    """Derivative of bending energy (at fixed kappa) and penalty terms."""
    vspace = _vector_space(state, vector_space)
    kspace = kappa.space
    measures = measure(state) if measures is None else measures
    pen = penalty_terms(constraints, measures)
    rule, geo = element_quadrature(state, max(kspace.order, vspace.order))
    dA = geo.area * rule.weights
    kq = interpolate_at_quadrature(kspace, kappa.coeffs, rule.points)
    vals_v, grads_v, _ = _basis_tables(vspace.order, rule.points)
    sgN = surface_gradients(geo, grads_v)
    density = params.energy_density(kq) + pen["d_area"] + pen["d_local"][:, None]
    local = contract("knac,kn->kac", sgN, density * dA)
    if pen["d_volume"] != 0.0:
        local += contract("na,knc,kn->kac", vals_v, geo.nu, pen["d_volume"] * dA)
    out = scatter_vector(vspace.scalar.cell_dofs, local, vspace.scalar.dim)
    flags = {"cost"}
    if constraints.cA or constraints.cV or constraints.cAloc:
        flags.add("constraints")
    return ShapeGradientLoad(out, vspace, frozenset(flags))


def shape_derivative_total(
    kappa: CurvatureField,
    sigma,
    state: DeformationState,
    params: PhysicalParams,
    constraints: ConstraintParams,
    mode: str = "full",
    vector_space=None,
    measures=None,
) -> ShapeGradientLoad:
    eq = assemble_equation_diff(kappa, sigma, state, vector_space, mode)
    cost = assemble_cost_diff(kappa, state, params, constraints, vector_space, measures)
    return eq + cost


def rigid_motion_fields(state: DeformationState) -> list:
    """Three translations and three infinitesimal rotations about the origin."""
    x = state.point_positions
    fields = [np.tile(np.eye(3)[i], (len(x), 1)) for i in range(3)]
    fields += [np.cross(np.eye(3)[i], x) for i in range(3)]
    return fields


def smooth_probe(state: DeformationState, seed: int = 0, n_modes: int = 3) -> np.ndarray:
    """Smooth random displacement: low-order trigonometric modes of the positions."""
    rng = np.random.default_rng(seed)
    x = state.point_positions
    out = np.zeros_like(x)
    for _ in range(n_modes):
        freq = rng.normal(size=3)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.normal(size=3)
        out += np.sin(x @ freq + phase)[:, None] * amp
    return out / max(np.abs(out).max(), 1e-300)


@dataclass
class FDRow:
    t: float
    fd_value: float
    analytic_value: float
    abs_err: float
    observed_order: float
    skipped: bool = False


def finite_difference_check(
    load: ShapeGradientLoad,
    J_evaluator: Callable[[DeformationState], float],
    state: DeformationState,
    X_probe,
    t_ladder: Sequence[float] = (1e-2, 1e-3, 1e-4),
) -> list:
    """Central-difference validation of ``load`` along ``X_probe``."""
    ts = list(t_ladder)
    if any(t <= 0 for t in ts) or any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_ladder must be positive and strictly decreasing")
    analytic = load(X_probe)
    rows = []
    prev = None
    for t in ts:
        try:
            jp = J_evaluator(state.displaced(X_probe, t))
            jm = J_evaluator(state.displaced(X_probe, -t))
        except DegeneracyError as exc:
            logger.warning("skipping t=%g: %s", t, exc)
            rows.append(FDRow(t, np.nan, analytic, np.nan, np.nan, True))
            continue
        fd = (jp - jm) / (2.0 * t)
        err = abs(fd - analytic)
        order = np.nan
        if prev is not None and prev[1] > 0 and err > 0:
            order = np.log(prev[1] / err) / np.log(prev[0] / t)
        rows.append(FDRow(t, fd, analytic, err, order))
        prev = (t, err)
    return rows
