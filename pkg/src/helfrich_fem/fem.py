"""Lagrange spaces on the reference triangle, quadrature and global dof maps."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .mesh import SurfaceMesh

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadratureRule:
    domain: str
    degree: int
    points: np.ndarray  # (n, 2) for triangles, (n,) on [0, 1] for segments
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def quadrature(domain: str, degree: int) -> QuadratureRule:
    """Positive-weight rule exact up to ``degree`` on the reference domain.

    Triangle: vertices (0,0), (1,0), (0,1); measure 1/2. Segment: [0, 1].
    Triangle rules beyond degree 1 are collapsed Gauss-Jacobi x Gauss-Legendre
    products.
    """
    if degree < 0 or degree > 10:
        raise ValueError(f"unsupported quadrature degree {degree}")
    n = max(1, (degree + 2) // 2)
    if domain == "segment":
        x, w = np.polynomial.legendre.leggauss(n)
        return QuadratureRule("segment", degree, 0.5 * (x + 1.0), 0.5 * w)
    if domain != "triangle":
        raise ValueError(f"unknown quadrature domain {domain!r}")
    if degree <= 1:
        return QuadratureRule("triangle", degree, np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]))
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (xj + 1.0)
    wu = wj / 4.0
    xl, wl = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (xl + 1.0)
    wv = 0.5 * wl
    uu, vv = np.meshgrid(u, v, indexing="ij")
    points = np.stack([uu.ravel(), ((1.0 - uu) * vv).ravel()], axis=1)
    weights = np.outer(wu, wv).ravel()
    return QuadratureRule("triangle", degree, points, weights)


def lattice(order: int) -> np.ndarray:
    """Barycentric multi-indices of the Lagrange nodes, in local dof order.

    Vertices first, then the interior nodes of local edges 0, 1, 2 (edge ``i``
    walked from vertex ``i+1`` to ``i+2``), then element-interior nodes.
    """
    p = order
    nodes = [(p, 0, 0), (0, p, 0), (0, 0, p)]
    for e in range(3):
        a, b = (e + 1) % 3, (e + 2) % 3
        for j in range(1, p):
            lam = [0, 0, 0]
            lam[a] = p - j
            lam[b] = j
            nodes.append(tuple(lam))
    for i in range(1, p):
        for j in range(1, p - i):
            nodes.append((p - i - j, i, j))
    return np.array(nodes, dtype=np.int64)


def _monomial_exponents(order):
    return [(a, b) for total in range(order + 1) for a in range(total, -1, -1) for b in [total - a]]


def _falling(a, k):
    out = 1.0
    for i in range(k):
        out *= a - i
    return out


def _monomial_table(points, exps, dx=0, dy=0):
    points = np.atleast_2d(points)
    x, y = points[:, 0], points[:, 1]
    cols = []
    for a, b in exps:
        if a < dx or b < dy:
            cols.append(np.zeros(len(points)))
        else:
            cols.append(_falling(a, dx) * _falling(b, dy) * x ** (a - dx) * y ** (b - dy))
    return np.stack(cols, axis=1)


class LagrangeBasis:
    """Nodal Lagrange basis of given order on the reference triangle."""

    def __init__(self, order: int):
        if order not in (1, 2, 3):
            raise ValueError("Lagrange order must be 1, 2 or 3")
        self.order = order
        self.bary = lattice(order)
        self.nodes = self.bary[:, 1:] / order  # reference coordinates (xi, eta)
        self._exps = _monomial_exponents(order)
        vander = _monomial_table(self.nodes, self._exps)
        self._coeffs = np.linalg.inv(vander)

    @property
    def n_local(self) -> int:
        return len(self.nodes)

    def values(self, points) -> np.ndarray:
        return _monomial_table(points, self._exps) @ self._coeffs

    def gradients(self, points) -> np.ndarray:
        gx = _monomial_table(points, self._exps, 1, 0) @ self._coeffs
        gy = _monomial_table(points, self._exps, 0, 1) @ self._coeffs
        return np.stack([gx, gy], axis=-1)

    def hessians(self, points) -> np.ndarray:
        hxx = _monomial_table(points, self._exps, 2, 0) @ self._coeffs
        hxy = _monomial_table(points, self._exps, 1, 1) @ self._coeffs
        hyy = _monomial_table(points, self._exps, 0, 2) @ self._coeffs
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -1)


@lru_cache(maxsize=None)
def lagrange_basis(order: int) -> LagrangeBasis:
    return LagrangeBasis(order)


def edge_reference_points(local_edge: int, s, reverse: bool = False):
    """Reference coordinates on local edge ``local_edge`` at parameters ``s``,
    plus the constant reference direction of the walk.

    ``s = 0`` is vertex ``local_edge + 1`` (or ``+ 2`` when ``reverse``).
    """
    s = np.asarray(s, dtype=float)
    start = REFERENCE_VERTICES[(local_edge + 1) % 3]
    end = REFERENCE_VERTICES[(local_edge + 2) % 3]
    if reverse:
        start, end = end, start
    return (1.0 - s)[:, None] * start + s[:, None] * end, end - start


class ScalarSpace:
    """Continuous scalar Lagrange space of order ``order`` on a surface mesh.

    Dofs are ordered vertices, then ``order - 1`` nodes per edge (walked from
    the lower to the higher endpoint index), then element-interior nodes.
    """

    def __init__(self, mesh: SurfaceMesh, order: int):
        if order not in (1, 2, 3):
            raise ValueError("space order must be 1, 2 or 3")
        self.mesh = mesh
        self.order = order
        self.basis = lagrange_basis(order)
        self.cell_dofs = _cell_dofs(mesh, order)
        per_edge = order - 1
        per_cell = (order - 1) * (order - 2) // 2
        self.dim = mesh.n_vertices + per_edge * mesh.n_edges + per_cell * mesh.n_triangles
        self.n_vertex_dofs = mesh.n_vertices

    def __repr__(self):
        return f"ScalarSpace(order={self.order}, dim={self.dim})"


class VectorSpace:
    """Three copies of a scalar space; coefficient arrays have shape ``(dim, 3)``.

    The flat coefficient vector is component-blocked: ``[x..., y..., z...]``.
    """

    def __init__(self, scalar: ScalarSpace):
        self.scalar = scalar
        self.mesh = scalar.mesh
        self.order = scalar.order
        self.dim = 3 * scalar.dim

    @classmethod
    def of_order(cls, mesh, order):
        return cls(ScalarSpace(mesh, order))

    def flatten(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs).reshape(-1, 3).ravel(order="F")

    def unflatten(self, vector) -> np.ndarray:
        return np.asarray(vector).reshape(3, -1).T.copy()

    def __repr__(self):
        return f"VectorSpace(order={self.order}, dim={self.dim})"


def _cell_dofs(mesh: SurfaceMesh, order: int) -> np.ndarray:
    table = mesh.edge_table
    n_tri = mesh.n_triangles
    p = order
    cols = [mesh.triangles[:, 0], mesh.triangles[:, 1], mesh.triangles[:, 2]]
    offset = mesh.n_vertices
    for e in range(3):
        ge = table.triangle_edges[:, e]
        left = table.triangle_is_left[:, e]
        for j in range(1, p):
            # Local walk goes vertex e+1 -> e+2; left triangles walk a -> b.
            k = np.where(left, j - 1, p - 1 - j)
            cols.append(offset + (p - 1) * ge + k)
    offset += (p - 1) * mesh.n_edges
    n_int = (p - 1) * (p - 2) // 2
    for i in range(n_int):
        cols.append(offset + n_int * np.arange(n_tri) + i)
    return np.stack(cols, axis=1).astype(np.int64)


def contract(subscripts, *operands):
    """``einsum`` with contraction-order optimization (BLAS-backed where possible)."""
    return np.einsum(subscripts, *operands, optimize="greedy")
