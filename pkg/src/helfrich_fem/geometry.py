"""Deformed surface geometry: ALE displacement states, element and edge evaluation.

The reference mesh is never moved.  A :class:`DeformationState` carries a
vector Lagrange displacement over it; every geometric quantity is computed on
the isoparametric element map ``reference map + displacement``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import DegeneracyError
from .fem import VectorSpace, contract, lagrange_basis, lattice, quadrature
from .mesh import Frame, SurfaceMesh

AREA_COLLAPSE_RATIO = 1e-12
NORMAL_SUM_FLOOR = 1e-10


class DeformationState:
    """Total displacement over a fixed reference mesh.

    ``displacement`` has shape ``(dim, 3)`` in the vector Lagrange space of
    order ``order``.  Element node arrays are cached on first use; states are
    treated as immutable, so build a new one for every geometry change.
    """

    def __init__(self, mesh: SurfaceMesh, order: int = 1, displacement=None, space: Optional[VectorSpace] = None):
        self.mesh = mesh
        self.space = space if space is not None else VectorSpace.of_order(mesh, order)
        self.order = self.space.order
        if displacement is None:
            displacement = np.zeros((self.space.scalar.dim, 3))
        displacement = np.asarray(displacement, dtype=float).reshape(-1, 3)
        if displacement.shape[0] != self.space.scalar.dim:
            raise ValueError(
                f"displacement has {displacement.shape[0]} nodes, space has {self.space.scalar.dim}"
            )
        self.displacement = displacement

    @classmethod
    def zero(cls, mesh, order=1):
        return cls(mesh, order)

    def with_displacement(self, displacement) -> "DeformationState":
        return DeformationState(self.mesh, displacement=displacement, space=self.space)

    def displaced(self, field, t: float = 1.0) -> "DeformationState":
        """State moved by ``t * field`` (same space)."""
        return self.with_displacement(self.displacement + t * np.asarray(field).reshape(-1, 3))

    @property
    def geometry_order(self) -> int:
        return max(self.mesh.geometry_order, self.order)

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """Lattice nodes of the deformed element maps, shape ``(T, n_q, 3)``."""
        q = self.geometry_order
        targets = lagrange_basis(q).nodes
        ref = reference_element_nodes(self.mesh)
        g = self.mesh.geometry_order
        nodes = contract("nb,tbc->tnc", lagrange_basis(g).values(targets), ref)
        if np.any(self.displacement):
            m = self.order
            disp = self.displacement[self.space.scalar.cell_dofs]
            nodes = nodes + contract("nb,tbc->tnc", lagrange_basis(m).values(targets), disp)
        return nodes

    @cached_property
    def point_positions(self) -> np.ndarray:
        """Deformed positions of the displacement-space nodes, ``(dim, 3)``."""
        return dof_coordinates(self.space.scalar) + self.displacement

    def vertex_positions(self) -> np.ndarray:
        return self.mesh.vertices + self.displacement[: self.mesh.n_vertices]


def reference_element_nodes(mesh: SurfaceMesh) -> np.ndarray:
    """Geometry nodes per element in local lattice order."""
    verts = mesh.vertices[mesh.triangles]
    if mesh.geometry_order == 1:
        return verts
    mids = mesh.edge_midpoint_nodes[mesh.edge_table.triangle_edges]
    return np.concatenate([verts, mids], axis=1)


def dof_coordinates(space) -> np.ndarray:
    """Reference-surface positions of the scalar space nodes."""
    mesh = space.mesh
    g = mesh.geometry_order
    local = contract(
        "nb,tbc->tnc", lagrange_basis(g).values(space.basis.nodes), reference_element_nodes(mesh)
    )
    coords = np.empty((space.dim, 3))
    coords[space.cell_dofs.ravel()] = local.reshape(-1, 3)
    return coords


@dataclass
class GeometryEval:
    """Geometry of a batch of element maps at reference points.

    Arrays carry leading axes ``(K, n)``: element batch and point.
    ``pinv_t`` is ``G g^{-1}`` so that surface gradients are ``pinv_t @ grad_ref``.
    ``dnu`` is the surface Jacobian of the normal (rows: components of nu).
    """

    x: np.ndarray
    jacobian: np.ndarray
    area: np.ndarray
    nu: np.ndarray
    pinv_t: np.ndarray
    dnu: np.ndarray

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.dnu, axis1=-2, axis2=-1)

    @property
    def projector(self) -> np.ndarray:
        return np.eye(3) - contract("kni,knj->knij", self.nu, self.nu)


_TABLE_CACHE: dict = {}
_TABLE_CACHE_LIMIT = 64


def _basis_tables(order, points, with_hessian=False):
    """Basis tables at ``points`` of shape ``(n, 2)`` or ``(K, n, 2)``.

    Results are cached (read-only) since the same reference points recur on
    every assembly.
    """
    pts = np.ascontiguousarray(points, dtype=float)
    key = (order, with_hessian, pts.shape, pts.tobytes())
    hit = _TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    basis = lagrange_basis(order)
    flat = pts.reshape(-1, 2)
    lead = pts.shape[:-1]
    vals = basis.values(flat).reshape(*lead, -1)
    grads = basis.gradients(flat).reshape(*lead, -1, 2)
    hess = basis.hessians(flat).reshape(*lead, -1, 2, 2) if with_hessian else None
    for arr in (vals, grads, hess):
        if arr is not None:
            arr.setflags(write=False)
    if len(_TABLE_CACHE) >= _TABLE_CACHE_LIMIT:
        _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
    _TABLE_CACHE[key] = (vals, grads, hess)
    return vals, grads, hess


def _sub(table):
    return "knb" if table.ndim == 3 else "nb"


def _cross(a, b):
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def _dot(a, b):
    return (a * b).sum(axis=-1)


def evaluate_geometry(nodes: np.ndarray, order: int, points) -> GeometryEval:
    """Evaluate element maps with lattice ``nodes`` (K, n_q, 3) at reference ``points``."""
    vals, grads, hess = _basis_tables(order, points, with_hessian=order > 1)
    x = np.matmul(vals, nodes)
    G0 = np.matmul(grads[..., 0], nodes)
    G1 = np.matmul(grads[..., 1], nodes)
    g00, g01, g11 = _dot(G0, G0), _dot(G0, G1), _dot(G1, G1)
    det = g00 * g11 - g01**2
    cross = _cross(G0, G1)
    area = np.sqrt(_dot(cross, cross))
    if np.any(area <= 0):
        k = int(np.argwhere(area <= 0)[0][0])
        raise DegeneracyError(f"vanishing Jacobian in element batch entry {k}", element=k)
    nu = cross / area[..., None]
    # Columns of G g^{-1}: the dual tangent basis.
    d0 = (G0 * g11[..., None] - G1 * g01[..., None]) / det[..., None]
    d1 = (G1 * g00[..., None] - G0 * g01[..., None]) / det[..., None]
    pinv_t = np.stack([d0, d1], axis=-1)
    G = np.stack([G0, G1], axis=-1)
    if order > 1:
        H = [[np.matmul(hess[..., a, b], nodes) for b in range(2)] for a in range(2)]
        dnu = np.zeros(G0.shape + (3,))
        for k, dual in enumerate((d0, d1)):
            raw = _cross(H[0][k], G1) + _cross(G0, H[1][k])
            raw = (raw - _dot(raw, nu)[..., None] * nu) / area[..., None]
            dnu += raw[..., :, None] * dual[..., None, :]
    else:
        dnu = np.zeros(G0.shape + (3,))
    return GeometryEval(x, G, area, nu, pinv_t, dnu)


def surface_gradients(geo: GeometryEval, ref_grads: np.ndarray) -> np.ndarray:
    """Surface gradients ``(K, n, n_b, 3)`` of basis functions from reference gradients."""
    d0 = geo.pinv_t[..., 0][..., None, :]
    d1 = geo.pinv_t[..., 1][..., None, :]
    return ref_grads[..., 0][..., None] * d0 + ref_grads[..., 1][..., None] * d1


# -- element-level quantities ----------------------------------------------


def quadrature_degree(state: DeformationState, space_order: int = 1) -> int:
    return 2 * max(state.geometry_order, space_order) + 2


def element_quadrature(state: DeformationState, space_order: int = 1):
    rule = quadrature("triangle", quadrature_degree(state, space_order))
    geo = evaluate_geometry(state.element_nodes, state.geometry_order, rule.points)
    return rule, geo


def measure(state: DeformationState) -> dict:
    """Total area, per-element areas and enclosed volume of the deformed surface."""
    rule, geo = element_quadrature(state)
    dA = geo.area * rule.weights
    per_element = dA.sum(axis=1)
    total = float(per_element.sum())
    mean = total / len(per_element)
    bad = np.flatnonzero(per_element < AREA_COLLAPSE_RATIO * abs(mean))
    if len(bad) or total <= 0:
        el = int(bad[0]) if len(bad) else None
        raise DegeneracyError(f"element {el} collapsed (area {per_element[el] if el is not None else total:.3e})", element=el)
    volume = float((contract("knc,knc->kn", geo.x, geo.nu) * dA).sum() / 3.0)
    return {"total_area": total, "per_element_areas": per_element, "enclosed_volume": volume}


def normal_integral(state: DeformationState) -> np.ndarray:
    rule, geo = element_quadrature(state)
    return contract("knc,kn->c", geo.nu, geo.area * rule.weights)


def reduced_volume(area: float, volume: float) -> float:
    return volume / (4.0 * np.pi / 3.0 * (area / (4.0 * np.pi)) ** 1.5)


# -- edges -------------------------------------------------------------------


_REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def edge_side_points(local_edges: np.ndarray, s: np.ndarray, side: int):
    """Reference points ``(E, n, 2)`` on each side, both parametrized from ``a`` to ``b``.

    ``side`` 0 is the left triangle (local walk ``a -> b``), 1 the right one.
    Also returns ``d(ref point)/ds`` per edge, shape ``(E, 2)``.
    """
    first = (local_edges + 1) % 3
    second = (local_edges + 2) % 3
    if side == 1:
        first, second = second, first
    start, end = _REF[first], _REF[second]
    pts = (1.0 - s)[None, :, None] * start[:, None, :] + s[None, :, None] * end[:, None, :]
    return pts, end - start


@dataclass
class EdgeSide:
    """Geometry of one side of every edge at the edge quadrature points."""

    triangles: np.ndarray  # (E,)
    points: np.ndarray  # (E, n, 2) reference points in that triangle
    geo: GeometryEval
    length: np.ndarray  # (E, n) |dx/ds|
    tau: np.ndarray
    mu: np.ndarray


@dataclass
class EdgeEval:
    s: np.ndarray
    weights: np.ndarray
    sides: tuple  # (left, right)
    normal: np.ndarray  # (E, n, 3) averaged normal, projected normal to tau

    def angle_pairing(self, side: int) -> np.ndarray:
        return contract("knc,knc->kn", self.sides[side].mu, self.normal)


def evaluate_edge_side(state: DeformationState, side: int, s: np.ndarray) -> EdgeSide:
    table = state.mesh.edge_table
    tris = table.triangles[:, side]
    pts, dref = edge_side_points(table.local[:, side], s, side)
    geo = evaluate_geometry(state.element_nodes[tris], state.geometry_order, pts)
    dxds = contract("kncd,kd->knc", geo.jacobian, dref)
    length = np.linalg.norm(dxds, axis=-1)
    if np.any(length < 1e-14):
        e = int(np.argwhere(length < 1e-14)[0][0])
        raise DegeneracyError(f"edge {e} collapsed", element=int(tris[e]))
    direction = dxds / length[..., None]
    tau = -direction if side == 0 else direction
    mu = np.cross(geo.nu, tau)
    return EdgeSide(tris, pts, geo, length, tau, mu)


def averaged_normal_field(left: EdgeSide, right: EdgeSide, s, weights, order: int, project=True):
    """Edge-wise L2 projection of ``nu_L + nu_R`` onto degree ``order - 1``.

    The projection is normalized pointwise.  With ``project`` the result is
    first restricted to the plane normal to the edge tangent, so it measures
    the normal-jump angle exactly.
    """
    total = left.geo.nu + right.geo.nu
    degree = max(order - 1, 0)
    dl = left.length * weights
    if degree == 0:
        avg = contract("knc,kn->kc", total, dl) / dl.sum(axis=1)[:, None]
        field = np.broadcast_to(avg[:, None, :], total.shape).copy()
    else:
        P = np.stack([s**j for j in range(degree + 1)], axis=1)  # (n, d+1)
        mass = contract("ni,nj,kn->kij", P, P, dl)
        rhs = contract("ni,knc,kn->kic", P, total, dl)
        coef = np.linalg.solve(mass, rhs)
        field = contract("ni,kic->knc", P, coef)
    if project:
        tau = left.tau
        field = field - contract("knc,knc->kn", field, tau)[..., None] * tau
    norm = np.linalg.norm(field, axis=-1)
    if np.any(norm < NORMAL_SUM_FLOOR):
        e = int(np.argwhere(norm < NORMAL_SUM_FLOOR)[0][0])
        raise DegeneracyError(f"opposite normals across edge {e} (fold-over)", element=int(left.triangles[e]))
    return field / norm[..., None]


def evaluate_edges(state: DeformationState, space_order: int = 1, project: bool = True) -> EdgeEval:
    rule = quadrature("segment", quadrature_degree(state, space_order))
    left = evaluate_edge_side(state, 0, rule.points)
    right = evaluate_edge_side(state, 1, rule.points)
    normal = averaged_normal_field(left, right, rule.points, rule.weights, space_order, project)
    return EdgeEval(rule.points, rule.weights, (left, right), normal)


def normal_angles(state: DeformationState) -> np.ndarray:
    """Angle between the two element normals at each edge midpoint."""
    s = np.array([0.5])
    left = evaluate_edge_side(state, 0, s)
    right = evaluate_edge_side(state, 1, s)
    c = np.clip(contract("knc,knc->kn", left.geo.nu, right.geo.nu), -1.0, 1.0)
    return np.arccos(c[:, 0])


# -- pointwise queries ---------------------------------------------------------


@dataclass(frozen=True)
class GeomSample:
    """Geometry at one reference point of a deformed element.

    ``A`` maps reference-surface gradients to deformed-surface gradients.
    ``area_weight`` is ``w_t``, the deformed/reference area ratio;
    ``edge_weight`` is the length ratio ``w_t^E`` when an edge was given.
    """

    x: np.ndarray
    jacobian: np.ndarray
    area_weight: float
    A: np.ndarray
    edge_weight: Optional[float] = None


def _point_eval(state, triangle, reference_point):
    pt = np.asarray(reference_point, dtype=float).reshape(1, 2)
    nodes = state.element_nodes[[triangle]]
    return evaluate_geometry(nodes, state.geometry_order, pt)


def _local_edge_direction(local_edge, side):
    _, dref = edge_side_points(np.array([local_edge]), np.array([0.0]), side)
    return dref[0]


def geometry_sample(state: DeformationState, triangle: int, reference_point, local_edge=None) -> GeomSample:
    reference = DeformationState(state.mesh, displacement=np.zeros_like(state.displacement), space=state.space)
    g0 = _point_eval(reference, triangle, reference_point)
    gt = _point_eval(state, triangle, reference_point)
    G0 = g0.jacobian[0, 0]
    Gt = gt.jacobian[0, 0]
    A = gt.pinv_t[0, 0] @ G0.T
    edge_weight = None
    if local_edge is not None:
        dref = _local_edge_direction(local_edge, 0)
        edge_weight = float(np.linalg.norm(Gt @ dref) / np.linalg.norm(G0 @ dref))
    return GeomSample(gt.x[0, 0], Gt, float(gt.area[0, 0] / g0.area[0, 0]), A, edge_weight)


def deformation_gradient(state: DeformationState, triangle: int, reference_point) -> np.ndarray:
    """Tangentially extended Jacobian ``F`` of reference surface -> deformed surface."""
    reference = DeformationState(state.mesh, displacement=np.zeros_like(state.displacement), space=state.space)
    g0 = _point_eval(reference, triangle, reference_point)
    gt = _point_eval(state, triangle, reference_point)
    G0, Gt = g0.jacobian[0, 0], gt.jacobian[0, 0]
    return Gt @ g0.pinv_t[0, 0].T + np.outer(gt.nu[0, 0], g0.nu[0, 0])


def element_frame(state: DeformationState, triangle: int, local_edge: int, reference_point) -> Frame:
    """Frame of the deformed element at a point of one of its edges.

    Reference frames are pulled forward with the deformation gradient:
    normals by ``F^{-T}``, tangents by ``F``.
    """
    if local_edge not in (0, 1, 2):
        raise ValueError("local edge index must be 0, 1 or 2")
    pt = np.asarray(reference_point, dtype=float)
    lam = np.array([1.0 - pt[0] - pt[1], pt[0], pt[1]])
    if abs(lam[local_edge]) > 1e-12:
        raise ValueError("reference point is not on the requested edge")
    reference = DeformationState(state.mesh, displacement=np.zeros_like(state.displacement), space=state.space)
    g0 = _point_eval(reference, triangle, pt)
    nu0 = g0.nu[0, 0]
    # The element's own counter-clockwise walk gives tau = -(walk direction).
    tau0 = -g0.jacobian[0, 0] @ _local_edge_direction(local_edge, 0)
    tau0 /= np.linalg.norm(tau0)
    F = deformation_gradient(state, triangle, pt)
    ft = F @ tau0
    nft = np.linalg.norm(ft)
    if nft < 1e-14:
        raise DegeneracyError(f"degenerate edge Jacobian in element {triangle}", element=triangle)
    fn = np.linalg.solve(F.T, nu0)
    nu = fn / np.linalg.norm(fn)
    tau = ft / nft
    return Frame(nu, tau, np.cross(nu, tau))
