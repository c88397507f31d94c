import numpy as np
import pytest

from helfrich_fem import DeformationState, element_frame, generate_icosphere, geometry_sample, measure
from helfrich_fem.exceptions import DegeneracyError
from helfrich_fem.geometry import (
    deformation_gradient,
    element_quadrature,
    evaluate_edges,
    normal_angles,
    normal_integral,
    reduced_volume,
)
from helfrich_fem.mesh import generate_benchmark_shape, icosahedron_reference_values

EDGE_POINTS = {0: (0.5, 0.5), 1: (0.0, 0.3), 2: (0.7, 0.0)}


def scaled(state, t):
    return state.displaced(state.point_positions, t)


def test_sample_at_zero_displacement(ico2):
    state = DeformationState(ico2)
    g = geometry_sample(state, 5, (0.2, 0.3), local_edge=None)
    v = ico2.vertices[ico2.triangles[5]]
    nu = np.cross(v[1] - v[0], v[2] - v[0])
    nu /= np.linalg.norm(nu)
    np.testing.assert_allclose(g.A.T, np.eye(3) - np.outer(nu, nu), atol=1e-14)
    assert g.area_weight == pytest.approx(1.0, abs=1e-14)
    assert geometry_sample(state, 5, (0.5, 0.5), local_edge=0).edge_weight == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("t", (0.1, 0.5, -0.3))
@pytest.mark.parametrize("order", (1, 2))
def test_sample_uniform_scaling(curved_ico2, t, order):
    mesh = curved_ico2 if order == 2 else curved_ico2.affine()
    state = scaled(DeformationState(mesh, order), t)
    g = geometry_sample(state, 11, EDGE_POINTS[1], local_edge=1)
    assert g.area_weight == pytest.approx((1 + t) ** 2, rel=1e-12)
    assert g.edge_weight == pytest.approx(1 + t, rel=1e-12)


def test_sample_rigid_translation(ico2):
    state = DeformationState(ico2)
    moved = state.with_displacement(np.tile([0.3, -1.0, 2.0], (state.space.scalar.dim, 1)))
    g0 = geometry_sample(state, 3, (0.1, 0.1))
    g1 = geometry_sample(moved, 3, (0.1, 0.1))
    np.testing.assert_allclose(g1.A, g0.A, atol=1e-14)
    assert g1.area_weight == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("local_edge", (0, 1, 2))
def test_frame_at_zero_displacement_is_affine_frame(ico2, local_edge):
    state = DeformationState(ico2)
    T = 7
    fr = element_frame(state, T, local_edge, EDGE_POINTS[local_edge])
    v = ico2.vertices[ico2.triangles[T]]
    nu = np.cross(v[1] - v[0], v[2] - v[0])
    nu /= np.linalg.norm(nu)
    walk = v[(local_edge + 2) % 3] - v[(local_edge + 1) % 3]
    tau = -walk / np.linalg.norm(walk)
    np.testing.assert_allclose(fr.nu, nu, atol=1e-14)
    np.testing.assert_allclose(fr.tau, tau, atol=1e-14)
    np.testing.assert_allclose(fr.mu, np.cross(nu, tau), atol=1e-14)
    # co-normal points away from the opposite vertex
    assert fr.mu @ (0.5 * (v[(local_edge + 1) % 3] + v[(local_edge + 2) % 3]) - v[local_edge]) > 0
    assert np.linalg.det(np.stack([fr.nu, fr.tau, fr.mu])) == pytest.approx(1.0, abs=1e-13)


def test_frame_invariant_under_scaling(ico2):
    state = DeformationState(ico2)
    for e in range(3):
        f0 = element_frame(state, 2, e, EDGE_POINTS[e])
        f1 = element_frame(scaled(state, 0.4), 2, e, EDGE_POINTS[e])
        for a, b in ((f0.nu, f1.nu), (f0.tau, f1.tau), (f0.mu, f1.mu)):
            np.testing.assert_allclose(a, b, atol=1e-13)


def test_frame_rejects_point_off_edge(ico2):
    with pytest.raises(ValueError):
        element_frame(DeformationState(ico2), 0, 0, (0.2, 0.2))


def test_icosahedron_dihedral_angle(icosahedron):
    state = DeformationState(icosahedron)
    table = icosahedron.edge_table
    left, right = table.triangles[0]
    ll, lr = table.local[0]
    fl = element_frame(state, left, ll, EDGE_POINTS[ll])
    fr = element_frame(state, right, lr, EDGE_POINTS[lr])
    angle = np.arccos(fl.nu @ fr.nu)
    assert angle == pytest.approx(0.729728, abs=1e-6)
    assert angle == pytest.approx(np.pi - np.arccos(-np.sqrt(5) / 3), abs=1e-14)
    np.testing.assert_allclose(fl.tau, -fr.tau, atol=1e-14)
    np.testing.assert_allclose(normal_angles(state), icosahedron_reference_values()["normal_angle"], atol=1e-12)


def test_edge_sides_share_points(curved_ico2):
    ev = evaluate_edges(DeformationState(curved_ico2, 2), 2)
    left, right = ev.sides
    np.testing.assert_allclose(left.geo.x, right.geo.x, atol=1e-14)
    np.testing.assert_allclose(left.tau, -right.tau, atol=1e-14)
    np.testing.assert_allclose(left.length, right.length, rtol=1e-12)


def test_deformation_gradient_identity(ico2):
    F = deformation_gradient(DeformationState(ico2), 4, (0.3, 0.3))
    np.testing.assert_allclose(F, np.eye(3), atol=1e-14)


@pytest.mark.parametrize("shape,order", [("sphere", 1), ("prolate", 2), ("biconcave", 1), ("oblate", 2)])
def test_normal_integral_vanishes(shape, order):
    state = DeformationState(generate_benchmark_shape(shape, 2, order=order), order)
    area = measure(state)["total_area"]
    assert np.abs(normal_integral(state)).max() <= 1e-10 * area


def test_curved_sphere_trace_converges():
    # tr(d nu) = 2 / R on the exact sphere; the isoparametric surface approaches it
    errs = []
    for n in (2, 3):
        state = DeformationState(generate_benchmark_shape("sphere", n, order=2), 2)
        rule, geo = element_quadrature(state, 2)
        errs.append(np.abs(geo.trace - 2.0).max())
    assert errs[1] < 0.05
    assert errs[1] < errs[0] / 3


def test_affine_trace_is_zero(ico2):
    rule, geo = element_quadrature(DeformationState(ico2), 1)
    np.testing.assert_allclose(geo.trace, 0.0, atol=1e-13)


def test_reduced_volume_sphere():
    assert reduced_volume(4 * np.pi, 4 * np.pi / 3) == pytest.approx(1.0, rel=1e-15)
    m = measure(DeformationState(generate_icosphere(3)))
    assert reduced_volume(m["total_area"], m["enclosed_volume"]) < 1.0


def test_collapsed_element_raises(icosahedron):
    state = DeformationState(icosahedron)
    disp = np.zeros((icosahedron.n_vertices, 3))
    a, b, c = icosahedron.triangles[0]
    disp[b] = icosahedron.vertices[a] - icosahedron.vertices[b]
    with pytest.raises(DegeneracyError):
        measure(state.with_displacement(disp))


def test_displaced_does_not_mutate(ico2):
    state = DeformationState(ico2)
    moved = state.displaced(np.ones((ico2.n_vertices, 3)), 0.5)
    assert not state.displacement.any()
    np.testing.assert_allclose(moved.vertex_positions(), ico2.vertices + 0.5)
