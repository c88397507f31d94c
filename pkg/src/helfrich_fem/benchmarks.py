"""Benchmark drivers shared by the CLI, the estimators and the acceptance suite."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .curvature import PhysicalParams, bending_energy, curvature_errors, solve_adjoint, solve_state
from .fem import ScalarSpace
from .geometry import DeformationState, measure, reduced_volume
from .mesh import SurfaceMesh, benchmark_projector, generate_benchmark_shape
from .optimizer import OptimizerConfig, RunLog, cost_components, optimize
from .shape_derivative import (
    ConstraintParams,
    finite_difference_check,
    shape_derivative_total,
    smooth_probe,
)

logger = logging.getLogger(__name__)

SWEEP_VOLUMES = (0.9, 0.8, 0.713)


def build_mesh(shape: str, subdivisions: int, order: int = 1, jitter: float = 0.0, seed: int = 1234, params=None):
    return generate_benchmark_shape(shape, subdivisions, params, order=order, jitter=jitter, seed=seed)


def scale_to_area(mesh: SurfaceMesh, target_area: float) -> SurfaceMesh:
    """Uniformly scale a mesh (and its edge nodes) to the given total area."""
    area = measure(DeformationState(mesh, 1))["total_area"]
    f = math.sqrt(target_area / area)
    mids = None if mesh.edge_midpoint_nodes is None else mesh.edge_midpoint_nodes * f
    return SurfaceMesh.from_arrays(mesh.vertices * f, mesh.triangles, mids)


def ellipsoid_curvature(axes):
    """Reference ``kappa = 2H`` (outward normals, so negative) on an ellipsoid surface."""
    a, b, c = (float(v) for v in axes)

    def kappa(x):
        x = np.asarray(x)
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        h = 1.0 / np.sqrt(X**2 / a**4 + Y**2 / b**4 + Z**2 / c**4)
        H = h**3 * (X**2 + Y**2 + Z**2 - a**2 - b**2 - c**2) / (2.0 * a**2 * b**2 * c**2)
        return 2.0 * H

    return kappa


def analytic_curvature(shape: str, params=None):
    """Reference curvature for the analytic benchmark surfaces (None if unknown)."""
    proj = benchmark_projector(shape, params)
    if shape == "sphere":
        return -2.0 / proj.radius
    if shape in ("prolate", "oblate"):
        return ellipsoid_curvature(proj.axes)
    return None


def curvature_report(mesh: SurfaceMesh, order: int, params: PhysicalParams, kappa_ref=None) -> dict:
    state = DeformationState(mesh, max(order, mesh.geometry_order))
    space = ScalarSpace(mesh, order)
    kappa = solve_state(space, state)
    out = dict(bending_energy(kappa, state, params))
    out["kappa"] = kappa
    if kappa_ref is not None:
        out.update(curvature_errors(kappa, kappa_ref))
    return out


def fd_ladder(
    mesh: SurfaceMesh,
    order: int = 1,
    seed: int = 0,
    t_ladder: Sequence[float] = (1e-2, 1e-3, 1e-4),
    params: Optional[PhysicalParams] = None,
    constraints: Optional[ConstraintParams] = None,
    probe=None,
):
    """Finite-difference check of the total shape derivative on ``mesh``.

    Default penalties have targets 5% off the current geometry so that every
    term of the load is active.
    """
    params = PhysicalParams(1.0, 0.25) if params is None else params
    state = DeformationState(mesh, max(order, mesh.geometry_order))
    space = ScalarSpace(mesh, order)
    meas = measure(state)
    if constraints is None:
        constraints = ConstraintParams(
            1.0, 1.0, 1.0, 1.05 * meas["total_area"], 0.95 * meas["enclosed_volume"],
            1.1 * meas["per_element_areas"],
        )
    constraints = constraints.resolved(meas)
    kappa = solve_state(space, state)
    sigma = solve_adjoint(space, state, kappa, params)
    load = shape_derivative_total(kappa, sigma, state, params, constraints)

    def J(s):
        k = solve_state(space, s)
        return cost_components(s, k, params, constraints)["J"]

    X = smooth_probe(state, seed) if probe is None else probe
    return finite_difference_check(load, J, state, X, t_ladder), load, state


def principal_axis_ratio(points) -> float:
    """Ratio of the largest to the smallest principal extent of a point cloud."""
    x = np.asarray(points) - np.mean(points, axis=0)
    ev = np.linalg.eigvalsh(x.T @ x)
    return float(math.sqrt(ev[-1] / max(ev[0], 1e-300)))


@dataclass
class SweepResult:
    target_v: float
    E_star: float
    final_v: float
    area: float
    axis_ratio: float
    stop_reason: str
    log: RunLog


SWEEP_DEFAULTS = dict(Nmax=500, alpha_factor=1.2, continuation_rounds=3, continuation_factor=10.0)


def sweep_config(base: OptimizerConfig, v: float) -> OptimizerConfig:
    return replace(base, reduced_volume=v, A0=4.0 * math.pi)


def run_sweep(
    volumes=SWEEP_VOLUMES,
    start: str = "prolate",
    subdivisions: int = 2,
    base: Optional[OptimizerConfig] = None,
    jitter: float = 0.0,
    seed: int = 1234,
    on_result=None,
) -> list:
    """Optimize from a prolate/oblate start of area ``4 pi`` for each reduced volume."""
    if start not in ("prolate", "oblate"):
        raise ValueError("sweep start shape must be prolate or oblate")
    base = OptimizerConfig(**SWEEP_DEFAULTS) if base is None else base
    mesh = build_mesh(start, subdivisions, base.order, jitter, seed)
    mesh = scale_to_area(mesh, 4.0 * math.pi)
    results = []
    for v in volumes:
        cfg = sweep_config(base, v)
        log = optimize(mesh, cfg)
        last = log.rows[-1]
        res = SweepResult(
            v, last["Estar"], last["v"], last["A"],
            principal_axis_ratio(log.final_state.vertex_positions()), log.stop_reason, log,
        )
        results.append(res)
        if on_result is not None:
            on_result(res)
    return results
