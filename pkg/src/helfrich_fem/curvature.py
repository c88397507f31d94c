"""Lifted distributional mean curvature, its multiplier, and the bending energy.

Sign convention: outward normals and ``kappa = -tr(d^S nu)`` in the lifted
sense, so ``H = kappa / 2`` is negative on convex surfaces (unit sphere:
``kappa = -2``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .assembly import (
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    interpolate_at_quadrature,
    scatter_vector,
)
from .exceptions import DegeneracyError
from .fem import ScalarSpace, contract
from .geometry import (
    DeformationState,
    _basis_tables,
    element_quadrature,
    evaluate_edges,
)
from .solvers import solve_spd

logger = logging.getLogger(__name__)

CLAMP_WARN = 1e-12


class ClampCounter:
    """Counts arcsin arguments that had to be clamped into [-1, 1]."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


arcsin_clamps = ClampCounter()


def safe_arcsin(x):
    x = np.asarray(x, dtype=float)
    over = np.abs(x) - 1.0
    n_bad = int(np.count_nonzero(over > CLAMP_WARN))
    if n_bad:
        arcsin_clamps.count += n_bad
        logger.warning("clamped %d arcsin arguments (max excess %.2e)", n_bad, over.max())
    return np.arcsin(np.clip(x, -1.0, 1.0))


@dataclass(frozen=True)
class PhysicalParams:
    """Bending modulus, spontaneous curvature and the orientation of H.

    With ``sign_flip`` the energy compares ``H0`` against ``-kappa / 2``.
    """

    kb: float = 1.0
    H0: float = 0.0
    sign_flip: bool = False

    def __post_init__(self):
        if not self.kb > 0:
            raise ValueError("bending modulus kb must be positive")

    @property
    def orientation(self) -> float:
        return -1.0 if self.sign_flip else 1.0

    def energy_density(self, kappa):
        return 2.0 * self.kb * (0.5 * self.orientation * kappa - self.H0) ** 2

    def energy_derivative(self, kappa):
        """Derivative of the energy density with respect to kappa."""
        return 2.0 * self.kb * (0.5 * self.orientation * kappa - self.H0) * self.orientation


@dataclass
class CurvatureField:
    space: ScalarSpace
    state: DeformationState
    coeffs: np.ndarray
    rhs: np.ndarray = None

    def at_quadrature(self, points):
        return interpolate_at_quadrature(self.space, self.coeffs, points)


@dataclass
class MultiplierField:
    space: ScalarSpace
    state: DeformationState
    coeffs: np.ndarray


def averaged_normal(state: DeformationState, edge: int, s: float, order: int = 1, project: bool = False):
    """Averaged normal of ``edge`` at parameter ``s`` (measured from its lower endpoint)."""
    from .geometry import averaged_normal_field, evaluate_edge_side, quadrature, quadrature_degree

    rule = quadrature("segment", quadrature_degree(state, order))
    pts = np.concatenate([rule.points, [s]])
    w = np.concatenate([rule.weights, [0.0]])
    left = evaluate_edge_side(state, 0, pts)
    right = evaluate_edge_side(state, 1, pts)
    field = averaged_normal_field(left, right, pts, w, order, project)
    return field[edge, -1]


def edge_jump_terms(state: DeformationState, order: int, project: bool = True):
    """Edge evaluation plus ``arcsin(mu . <nu>)`` per side."""
    edges = evaluate_edges(state, order, project)
    pairing = [edges.angle_pairing(side) for side in (0, 1)]
    return edges, pairing


def assemble_lift_rhs(space: ScalarSpace, state: DeformationState, project: bool = True) -> np.ndarray:
    """Right-hand side of the curvature lifting.

    ``rhs_i = -sum_T int tr(d^S nu) phi_i - sum_{dT} int arcsin(mu . <nu>) phi_i``.
    """
    rhs = np.zeros(space.dim)
    if state.geometry_order > 1:
        rhs -= assemble_load(space, state, lambda geo: geo.trace)
    edges, pairing = edge_jump_terms(state, space.order, project)
    for side in (0, 1):
        sd = edges.sides[side]
        vals, _, _ = _basis_tables(space.order, sd.points)
        dl = sd.length * edges.weights
        local = contract("kna,kn->ka", vals, safe_arcsin(pairing[side]) * dl)
        rhs -= scatter_vector(space.cell_dofs[sd.triangles], local, space.dim)
    return rhs


def solve_state(space: ScalarSpace, state: DeformationState, mass=None, rel_tol: float = 1e-10) -> CurvatureField:
    """Lifted curvature: ``M kappa = rhs``."""
    mass = assemble_mass(space, state) if mass is None else mass
    rhs = assemble_lift_rhs(space, state)
    kappa = solve_spd(mass, rhs, rel_tol)
    return CurvatureField(space, state, kappa, rhs)


def solve_adjoint(space, state, kappa, params: PhysicalParams, mass=None, rel_tol: float = 1e-10) -> MultiplierField:
    """Multiplier ``sigma``: L2 projection of ``-d/dkappa`` of the energy density."""
    coeffs = kappa.coeffs if isinstance(kappa, CurvatureField) else np.asarray(kappa)
    mass = assemble_mass(space, state) if mass is None else mass
    rule, _ = element_quadrature(state, space.order)
    kq = interpolate_at_quadrature(space, coeffs, rule.points)
    load = assemble_load(space, state, -params.energy_derivative(kq))
    return MultiplierField(space, state, solve_spd(mass, load, rel_tol))


def bending_energy(kappa, state: DeformationState, params: PhysicalParams, space=None) -> dict:
    """``W = int 2 kb (kappa/2 - H0)^2`` and ``E* = W / (8 pi kb)``."""
    if isinstance(kappa, CurvatureField):
        space, coeffs = kappa.space, kappa.coeffs
    else:
        coeffs = np.asarray(kappa)
    rule, geo = element_quadrature(state, space.order)
    kq = interpolate_at_quadrature(space, coeffs, rule.points)
    W = float((params.energy_density(kq) * geo.area * rule.weights).sum())
    return {"W": W, "E_star": W / (8.0 * np.pi * params.kb)}


def constant_test_residual(kappa: CurvatureField) -> dict:
    """``int kappa + sum tr + sum angle``: zero up to solver tolerance."""
    state, space = kappa.state, kappa.space
    rule, geo = element_quadrature(state, space.order)
    dA = geo.area * rule.weights
    integral = float((kappa.at_quadrature(rule.points) * dA).sum())
    interior = float((geo.trace * dA).sum())
    edges, pairing = edge_jump_terms(state, space.order)
    jump = 0.0
    scale = float(dA.sum())
    for side in (0, 1):
        dl = edges.sides[side].length * edges.weights
        jump += float((safe_arcsin(pairing[side]) * dl).sum())
        scale += float((np.abs(safe_arcsin(pairing[side])) * dl).sum())
    return {"residual": integral + interior + jump, "scale": scale}


def _reference_values(kappa_ref, geo):
    if callable(kappa_ref):
        return np.asarray(kappa_ref(geo.x), dtype=float)
    return np.full(geo.area.shape, float(kappa_ref))


def curvature_errors(kappa: CurvatureField, kappa_ref, state=None, space_order_l=None, epsilon: float = 1.0) -> dict:
    """L2 and H^-1 errors of ``kappa`` against a pointwise reference.

    The H^-1 norm is ``||u||_{H1}`` with ``(grad u, grad v) + eps (u, v) = <e, v>``
    solved in the scalar space of order ``space_order_l`` (default ``k + 1``).
    """
    state = kappa.state if state is None else state
    k = kappa.space.order
    l_order = k + 1 if space_order_l is None else space_order_l
    if l_order <= k:
        raise ValueError("auxiliary space order must exceed the curvature order")
    rule, geo = element_quadrature(state, max(k, l_order))
    diff = kappa.at_quadrature(rule.points) - _reference_values(kappa_ref, geo)
    dA = geo.area * rule.weights
    l2 = float(np.sqrt((diff**2 * dA).sum()))
    aux = ScalarSpace(state.mesh, l_order)
    vals, _, _ = _basis_tables(l_order, rule.points)
    load = scatter_vector(aux.cell_dofs, contract("na,kn->ka", vals, diff * dA), aux.dim)
    K = assemble_stiffness(aux, state)
    M = assemble_mass(aux, state)
    A = (K + epsilon * M).tocsr()
    u = solve_spd(A, load, 1e-12 if epsilon >= 1e-6 else 1e-10, method="direct")
    hm1 = float(np.sqrt(max(u @ (K @ u) + u @ (M @ u), 0.0)))
    return {"L2": l2, "Hminus1": hm1}


def check_fold(pairing, threshold=1e-10):
    worst = max(float(np.abs(p).max()) for p in pairing)
    if worst >= 1.0 - threshold:
        raise DegeneracyError(f"normal jump reaches a right angle (|mu . <nu>| = {worst:.12f})")
    return worst
