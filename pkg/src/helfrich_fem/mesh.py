"""Closed oriented triangle meshes, edge adjacency and benchmark generators.

Local conventions used everywhere in the package:

* triangles are counter-clockwise seen from outside, so the right-hand
  normal of ``(v1 - v0) x (v2 - v0)`` points outward;
* local edge ``i`` of a triangle runs from vertex ``(i + 1) % 3`` to vertex
  ``(i + 2) % 3`` (it is the edge opposite vertex ``i``);
* every undirected edge is stored once with endpoints ``(a, b)``, ``a < b``;
  its *left* triangle traverses ``a -> b`` and its *right* triangle ``b -> a``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import CurvingError, StructuralError

logger = logging.getLogger(__name__)

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
DEFAULT_JITTER_SEED = 1234

PROLATE_AXES = (1.1017, 0.95)  # (c, a): semi-axes (c, a, a)
OBLATE_AXES = (0.9, 1.5065)  # (c, a): semi-axes (a, a, c)
BICONCAVE_COEFFS = (0.54353, 0.121435, -0.561365)

_ICOSAHEDRON_VERTICES = np.array(
    [
        [-1.0, GOLDEN, 0.0], [1.0, GOLDEN, 0.0], [-1.0, -GOLDEN, 0.0], [1.0, -GOLDEN, 0.0],
        [0.0, -1.0, GOLDEN], [0.0, 1.0, GOLDEN], [0.0, -1.0, -GOLDEN], [0.0, 1.0, -GOLDEN],
        [GOLDEN, 0.0, -1.0], [GOLDEN, 0.0, 1.0], [-GOLDEN, 0.0, -1.0], [-GOLDEN, 0.0, 1.0],
    ]
)
_ICOSAHEDRON_TRIANGLES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)
_TETRAHEDRON_VERTICES = np.array(
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
) / np.sqrt(3.0)
_TETRAHEDRON_TRIANGLES = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


@dataclass(frozen=True)
class EdgeRecord:
    """One undirected edge with its two incident triangles."""

    vertices: tuple
    left: int
    right: int
    local_left: int
    local_right: int


@dataclass(frozen=True)
class Frame:
    """Orthonormal edge frame: outward normal, edge tangent, outward co-normal."""

    nu: np.ndarray
    tau: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True)
class EdgeTable:
    vertices: np.ndarray  # (E, 2) endpoints a < b
    triangles: np.ndarray  # (E, 2) left, right
    local: np.ndarray  # (E, 2) local edge index in left, right
    triangle_edges: np.ndarray  # (T, 3) global edge of each local edge
    triangle_is_left: np.ndarray  # (T, 3) True where the triangle is the left one


def _edge_table(triangles: np.ndarray) -> EdgeTable:
    triangles = np.asarray(triangles, dtype=np.int64)
    if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
        raise StructuralError("triangles must be a non-empty (T, 3) integer array")
    if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(triangles[:, 1] == triangles[:, 2]) or np.any(
        triangles[:, 0] == triangles[:, 2]
    ):
        raise StructuralError("triangle with repeated vertex")
    n_tri = len(triangles)
    local = np.tile(np.arange(3), n_tri)
    tri = np.repeat(np.arange(n_tri), 3)
    start = triangles[tri, (local + 1) % 3]
    end = triangles[tri, (local + 2) % 3]
    lo = np.minimum(start, end)
    hi = np.maximum(start, end)
    forward = start < end

    n_v = int(triangles.max()) + 1
    key = lo * n_v + hi
    order = np.lexsort((~forward, key))
    key_sorted = key[order]
    unique_keys, first, counts = np.unique(key_sorted, return_index=True, return_counts=True)
    if np.any(counts != 2):
        bad = unique_keys[counts != 2][0]
        raise StructuralError(
            f"non-manifold or boundary edge ({bad // n_v}, {bad % n_v}) shared by "
            f"{counts[counts != 2][0]} triangle(s)"
        )
    first_half = order[first]
    second_half = order[first + 1]
    if not np.all(forward[first_half]) or np.any(forward[second_half]):
        bad = unique_keys[~(forward[first_half] & ~forward[second_half])][0]
        raise StructuralError(f"inconsistent orientation across edge ({bad // n_v}, {bad % n_v})")

    n_edges = len(unique_keys)
    edge_vertices = np.stack([unique_keys // n_v, unique_keys % n_v], axis=1)
    edge_tris = np.stack([tri[first_half], tri[second_half]], axis=1)
    edge_local = np.stack([local[first_half], local[second_half]], axis=1)
    if np.any(edge_tris[:, 0] == edge_tris[:, 1]):
        raise StructuralError("edge with identical left and right triangle")

    triangle_edges = np.empty((n_tri, 3), dtype=np.int64)
    triangle_is_left = np.zeros((n_tri, 3), dtype=bool)
    eid = np.arange(n_edges)
    triangle_edges[edge_tris[:, 0], edge_local[:, 0]] = eid
    triangle_edges[edge_tris[:, 1], edge_local[:, 1]] = eid
    triangle_is_left[edge_tris[:, 0], edge_local[:, 0]] = True
    return EdgeTable(edge_vertices, edge_tris, edge_local, triangle_edges, triangle_is_left)


def build_edge_adjacency(triangles) -> list:
    """Return one :class:`EdgeRecord` per undirected edge.

    Raises :class:`StructuralError` for boundary/non-manifold edges or when two
    triangles traverse a shared edge in the same direction.
    """
    table = _edge_table(np.asarray(triangles))
    return [
        EdgeRecord(
            (int(v[0]), int(v[1])), int(t[0]), int(t[1]), int(loc[0]), int(loc[1])
        )
        for v, t, loc in zip(table.vertices, table.triangles, table.local)
    ]


@dataclass(frozen=True)
class SurfaceMesh:
    """Immutable closed triangle mesh, optionally with quadratic edge nodes."""

    vertices: np.ndarray
    triangles: np.ndarray
    edge_table: EdgeTable = field(repr=False)
    geometry_order: int = 1
    edge_midpoint_nodes: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, edge_midpoint_nodes=None) -> "SurfaceMesh":
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise StructuralError("vertices must be an (N, 3) array")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise StructuralError("triangle index out of range")
        table = _edge_table(triangles)
        used = np.zeros(len(vertices), dtype=bool)
        used[triangles.ravel()] = True
        if not used.all():
            raise StructuralError(f"{(~used).sum()} unreferenced vertices")
        order = 1
        if edge_midpoint_nodes is not None:
            edge_midpoint_nodes = np.array(edge_midpoint_nodes, dtype=float)
            if edge_midpoint_nodes.shape != (len(table.vertices), 3):
                raise StructuralError("need exactly one midpoint node per edge")
            edge_midpoint_nodes.setflags(write=False)
            order = 2
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        return cls(vertices, triangles, table, order, edge_midpoint_nodes)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edge_table.vertices)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    @property
    def edges(self) -> list:
        t = self.edge_table
        return [
            EdgeRecord((int(v[0]), int(v[1])), int(tr[0]), int(tr[1]), int(lc[0]), int(lc[1]))
            for v, tr, lc in zip(t.vertices, t.triangles, t.local)
        ]

    def edge_lengths(self) -> np.ndarray:
        ev = self.edge_table.vertices
        return np.linalg.norm(self.vertices[ev[:, 1]] - self.vertices[ev[:, 0]], axis=1)

    def mean_edge_length(self) -> float:
        return float(self.edge_lengths().mean())

    def chord_midpoints(self) -> np.ndarray:
        ev = self.edge_table.vertices
        return 0.5 * (self.vertices[ev[:, 0]] + self.vertices[ev[:, 1]])

    def with_vertices(self, vertices) -> "SurfaceMesh":
        """Same connectivity, new (affine) vertex positions."""
        vertices = np.array(vertices, dtype=float)
        vertices.setflags(write=False)
        return SurfaceMesh(vertices, self.triangles, self.edge_table, 1, None)

    def affine(self) -> "SurfaceMesh":
        return self.with_vertices(self.vertices)


def tetrahedron() -> SurfaceMesh:
    return SurfaceMesh.from_arrays(_TETRAHEDRON_VERTICES, _TETRAHEDRON_TRIANGLES)


def _subdivide(vertices: np.ndarray, triangles: np.ndarray):
    table = _edge_table(triangles)
    n_v = len(vertices)
    mids = 0.5 * (vertices[table.vertices[:, 0]] + vertices[table.vertices[:, 1]])
    new_vertices = np.vstack([vertices, mids])
    m = n_v + table.triangle_edges  # midpoint vertex of local edge i (opposite vertex i)
    v0, v1, v2 = triangles.T
    new_triangles = np.concatenate(
        [
            np.stack([v0, m[:, 2], m[:, 1]], axis=1),
            np.stack([v1, m[:, 0], m[:, 2]], axis=1),
            np.stack([v2, m[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ]
    )
    return new_vertices, new_triangles


def _unit_icosphere(subdivisions: int):
    vertices = _ICOSAHEDRON_VERTICES / np.linalg.norm(_ICOSAHEDRON_VERTICES, axis=1, keepdims=True)
    triangles = _ICOSAHEDRON_TRIANGLES.copy()
    for _ in range(subdivisions):
        vertices, triangles = _subdivide(vertices, triangles)
        vertices = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    return vertices, triangles


def generate_icosphere(subdivisions: int, radius: float = 1.0) -> SurfaceMesh:
    """Icosahedron with circumradius ``radius``, refined 4-to-1 ``subdivisions`` times.

    New vertices are projected back onto the sphere after every level.
    """
    if not isinstance(subdivisions, (int, np.integer)) or subdivisions < 0 or subdivisions > 8:
        raise ValueError(f"subdivisions must be an integer in [0, 8], got {subdivisions!r}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    vertices, triangles = _unit_icosphere(int(subdivisions))
    return SurfaceMesh.from_arrays(radius * vertices, triangles)


def biconcave_profile(p):
    c1, c3, c5 = BICONCAVE_COEFFS
    p = np.asarray(p, dtype=float)
    return c1 * p + c3 * p**3 + c5 * p**5


def _biconcave_profile_derivative(p):
    c1, c3, c5 = BICONCAVE_COEFFS
    return c1 + 3 * c3 * p**2 + 5 * c5 * p**4


# -- analytic projectors ---------------------------------------------------


class SphereProjector:
    """Radial projection onto the sphere of given radius centred at the origin."""

    def __init__(self, radius: float = 1.0):
        self.radius = float(radius)

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(points, axis=1, keepdims=True)
        if np.any(r < 1e-14):
            raise CurvingError("cannot project the origin radially")
        return self.radius * points / r

    def surface_map(self, unit_points):
        return self.radius * unit_points


class EllipsoidProjector:
    """Closest-point projection onto an axis-aligned ellipsoid (Newton in the multiplier)."""

    def __init__(self, axes, max_iter: int = 50, tol: float = 1e-15):
        self.axes = np.asarray(axes, dtype=float)
        if self.axes.shape != (3,) or np.any(self.axes <= 0):
            raise ValueError("ellipsoid semi-axes must be three positive numbers")
        self.max_iter = max_iter
        self.tol = tol

    def __call__(self, points):
        q = np.atleast_2d(np.asarray(points, dtype=float))
        a2 = self.axes**2
        lam = np.zeros(len(q))
        for _ in range(self.max_iter):
            d = a2 + lam[:, None]
            s = (self.axes * q / d) ** 2
            f = s.sum(axis=1) - 1.0
            df = -2.0 * (s / d).sum(axis=1)
            step = f / df
            lam -= step
            if np.all(np.abs(step) <= self.tol * (1.0 + np.abs(lam))):
                break
        else:
            raise CurvingError("ellipsoid projection did not converge in 50 iterations")
        return q * a2 / (a2 + lam[:, None])

    def surface_map(self, unit_points):
        return unit_points * self.axes


class BiconcaveProjector:
    """Closest point on the biconcave surface ``(x, y, F(z))`` over the unit sphere.

    Gauss-Newton on the sphere pre-image, retracting by normalisation.
    """

    def __init__(self, max_iter: int = 50, tol: float = 1e-14):
        self.max_iter = max_iter
        self.tol = tol

    def surface_map(self, unit_points):
        p = np.asarray(unit_points, dtype=float)
        out = p.copy()
        out[..., 2] = biconcave_profile(p[..., 2])
        return out

    def _initial_preimage(self, q):
        rho2 = np.clip(1.0 - q[:, 0] ** 2 - q[:, 1] ** 2, 0.0, None)
        z = np.where(q[:, 2] >= 0, 1.0, -1.0) * np.sqrt(rho2)
        p = np.stack([q[:, 0], q[:, 1], z], axis=1)
        n = np.linalg.norm(p, axis=1, keepdims=True)
        return p / n

    def __call__(self, points):
        q = np.atleast_2d(np.asarray(points, dtype=float))
        p = self._initial_preimage(q)
        for _ in range(self.max_iter):
            r = self.surface_map(p) - q
            # Tangent basis of the sphere at p.
            helper = np.where(np.abs(p[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
            e1 = np.cross(p, helper)
            e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
            e2 = np.cross(p, e1)
            jac_scale = np.ones((len(p), 3))
            jac_scale[:, 2] = _biconcave_profile_derivative(p[:, 2])
            j1 = e1 * jac_scale
            j2 = e2 * jac_scale
            a11 = (j1 * j1).sum(1)
            a12 = (j1 * j2).sum(1)
            a22 = (j2 * j2).sum(1)
            b1 = -(j1 * r).sum(1)
            b2 = -(j2 * r).sum(1)
            det = a11 * a22 - a12**2
            d1 = (a22 * b1 - a12 * b2) / det
            d2 = (a11 * b2 - a12 * b1) / det
            p_new = p + d1[:, None] * e1 + d2[:, None] * e2
            p_new /= np.linalg.norm(p_new, axis=1, keepdims=True)
            moved = np.linalg.norm(p_new - p, axis=1)
            p = p_new
            if np.all(moved <= self.tol):
                break
        else:
            raise CurvingError("biconcave projection did not converge in 50 iterations")
        return self.surface_map(p)


def identity_projector(points):
    return np.atleast_2d(np.asarray(points, dtype=float)).copy()


def curve_to_quadratic(mesh: SurfaceMesh, projector: Callable) -> SurfaceMesh:
    """Attach quadratic edge nodes: projector images of the straight-edge midpoints."""
    if mesh.geometry_order != 1:
        raise ValueError("mesh is already curved")
    mids = np.asarray(projector(mesh.chord_midpoints()), dtype=float)
    if mids.shape != (mesh.n_edges, 3) or not np.all(np.isfinite(mids)):
        raise CurvingError("projector returned invalid midpoint nodes")
    mids.setflags(write=False)
    return SurfaceMesh(mesh.vertices, mesh.triangles, mesh.edge_table, 2, mids)


def _tangential_jitter(points, amount, seed):
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=points.shape)
    noise -= (noise * points).sum(axis=1, keepdims=True) * points
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    scale = amount * rng.uniform(0.0, 1.0, size=(len(points), 1))
    jittered = points + scale * noise
    return jittered / np.linalg.norm(jittered, axis=1, keepdims=True)


def benchmark_projector(kind: str, params=None):
    kind = kind.lower()
    if kind == "sphere":
        radius = 1.0 if params is None else float(np.atleast_1d(params)[0])
        return SphereProjector(radius)
    if kind in ("prolate", "oblate"):
        c, a = PROLATE_AXES if kind == "prolate" else OBLATE_AXES
        if params is not None:
            c, a = (float(v) for v in params)
        if c <= 0 or a <= 0:
            raise ValueError(f"semi-axes must be positive, got c={c}, a={a}")
        axes = (c, a, a) if kind == "prolate" else (a, a, c)
        return EllipsoidProjector(axes)
    if kind == "biconcave":
        return BiconcaveProjector()
    raise ValueError(f"unknown benchmark shape {kind!r}")


def generate_benchmark_shape(
    kind: str,
    subdivisions: int,
    params=None,
    order: int = 1,
    jitter: float = 0.0,
    seed: int = DEFAULT_JITTER_SEED,
) -> SurfaceMesh:
    """Icosphere control mesh mapped onto a benchmark surface.

    ``params`` is ``radius`` for the sphere and ``(c, a)`` for prolate
    (semi-axes ``c, a, a``) and oblate (semi-axes ``a, a, c``) ellipsoids; the
    biconcave disc takes none.  ``jitter`` moves vertices tangentially on the
    sphere pre-image by up to ``jitter * mean edge length`` (fixed ``seed``).
    """
    projector = benchmark_projector(kind, params)
    if kind.lower() == "sphere" and not jitter and order == 1:
        return generate_icosphere(subdivisions, projector.radius)
    unit = generate_icosphere(subdivisions, 1.0)
    points = np.array(unit.vertices)
    if jitter:
        points = _tangential_jitter(points, jitter * unit.mean_edge_length(), seed)
    mesh = SurfaceMesh.from_arrays(projector.surface_map(points), unit.triangles)
    if order == 2:
        mesh = curve_to_quadratic(mesh, projector)
    elif order != 1:
        raise ValueError("geometry order must be 1 or 2")
    return mesh


def icosahedron_reference_values(radius: float = 1.0) -> dict:
    """Closed-form edge length, area, volume and dihedral angle of the icosahedron."""
    a = 4.0 * radius / np.sqrt(10.0 + 2.0 * np.sqrt(5.0))
    return {
        "edge_length": a,
        "area": 5.0 * np.sqrt(3.0) * a**2,
        "volume": 5.0 / 12.0 * (3.0 + np.sqrt(5.0)) * a**3,
        "normal_angle": np.pi - np.arccos(-np.sqrt(5.0) / 3.0),
    }
