"""Sparse assembly of mass, stiffness, metric and divergence matrices."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fem import ScalarSpace, VectorSpace, contract
from .geometry import (
    DeformationState,
    _basis_tables,
    element_quadrature,
    surface_gradients,
)


def _scatter_matrix(rows_dofs, cols_dofs, local, shape):
    """Sum element matrices ``local`` (T, a, b) into a CSR matrix."""
    rows = np.repeat(rows_dofs[:, :, None], cols_dofs.shape[1], axis=2)
    cols = np.repeat(cols_dofs[:, None, :], rows_dofs.shape[1], axis=1)
    mat = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    mat.sum_duplicates()
    return mat


def scatter_vector(dofs, local, size):
    """Sum element vectors ``local`` (K, a[, c]) into a global array."""
    if local.ndim == 2:
        return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=size)
    out = np.empty((size, local.shape[-1]))
    for c in range(local.shape[-1]):
        out[:, c] = np.bincount(dofs.ravel(), weights=local[..., c].ravel(), minlength=size)
    return out


def _space_for(space):
    return space.scalar if isinstance(space, VectorSpace) else space


def assemble_mass(space: ScalarSpace, state: DeformationState) -> sp.csr_matrix:
    """Consistent mass matrix ``M_ij = int phi_i phi_j`` on the deformed surface."""
    space = _space_for(space)
    rule, geo = element_quadrature(state, space.order)
    vals, _, _ = _basis_tables(space.order, rule.points)
    dA = geo.area * rule.weights
    local = contract("na,nb,kn->kab", vals, vals, dA)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return _scatter_matrix(space.cell_dofs, space.cell_dofs, local, (space.dim, space.dim))


def assemble_stiffness(space: ScalarSpace, state: DeformationState) -> sp.csr_matrix:
    """Laplace-Beltrami stiffness ``K_ij = int grad phi_i . grad phi_j``."""
    space = _space_for(space)
    rule, geo = element_quadrature(state, space.order)
    _, grads, _ = _basis_tables(space.order, rule.points)
    sg = surface_gradients(geo, grads)
    dA = geo.area * rule.weights
    local = contract("knac,knbc,kn->kab", sg, sg, dA)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return _scatter_matrix(space.cell_dofs, space.cell_dofs, local, (space.dim, space.dim))


def assemble_scalar_metric(space: ScalarSpace, state: DeformationState, epsilon: float) -> sp.csr_matrix:
    return (assemble_stiffness(space, state) + epsilon * assemble_mass(space, state)).tocsr()


def assemble_h1_metric(space: VectorSpace, epsilon: float, state: DeformationState) -> sp.csr_matrix:
    """Block-diagonal ``(V, W)_H = int dV : dW + eps V . W`` in component-blocked layout."""
    if not epsilon > 0:
        raise ValueError("metric regularization epsilon must be positive")
    block = assemble_scalar_metric(space.scalar, state, epsilon)
    return sp.block_diag([block, block, block], format="csr")


def assemble_load(space: ScalarSpace, state: DeformationState, density) -> np.ndarray:
    """``b_i = int f phi_i`` for ``f`` given as a callable of the geometry or an (K, n) array."""
    space = _space_for(space)
    rule, geo = element_quadrature(state, space.order)
    vals, _, _ = _basis_tables(space.order, rule.points)
    f = density(geo) if callable(density) else density
    dA = geo.area * rule.weights
    local = contract("na,kn->ka", vals, f * dA)
    return scatter_vector(space.cell_dofs, local, space.dim)


def interpolate_at_quadrature(space: ScalarSpace, coeffs, points) -> np.ndarray:
    """Values ``(T, n)`` of a scalar field at shared reference points."""
    vals, _, _ = _basis_tables(space.order, points)
    return contract("na,ka->kn", vals, np.asarray(coeffs)[space.cell_dofs])


def assemble_divergence(velocity: VectorSpace, pressure: ScalarSpace, state: DeformationState) -> sp.csr_matrix:
    """``B_{j,(a,c)} = int q_j (grad^S N_a)_c``: the weak surface divergence."""
    order = max(velocity.order, pressure.order)
    rule, geo = element_quadrature(state, order)
    qv, _, _ = _basis_tables(pressure.order, rule.points)
    _, grads, _ = _basis_tables(velocity.order, rule.points)
    sg = surface_gradients(geo, grads)
    dA = geo.area * rule.weights
    n_v = velocity.scalar.dim
    blocks = []
    for c in range(3):
        local = contract("nj,knac,kn->kja", qv, sg[..., c : c + 1], dA)
        blocks.append(
            _scatter_matrix(pressure.cell_dofs, velocity.scalar.cell_dofs, local, (pressure.dim, n_v))
        )
    return sp.hstack(blocks, format="csr")
