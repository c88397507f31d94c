"""Surface finite elements for distributional curvature and Helfrich shape optimization."""

from .curvature import (
    PhysicalParams,
    assemble_lift_rhs,
    averaged_normal,
    bending_energy,
    curvature_errors,
    solve_adjoint,
    solve_state,
)
from .estimators import CurvatureLifter, HelfrichShapeOptimizer
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    CurvingError,
    DegeneracyError,
    HelfrichError,
    SolverError,
    StructuralError,
)
from .fem import ScalarSpace, VectorSpace, quadrature
from .geometry import DeformationState, element_frame, geometry_sample, measure
from .mesh import (
    SurfaceMesh,
    build_edge_adjacency,
    curve_to_quadratic,
    generate_benchmark_shape,
    generate_icosphere,
)
from .optimizer import OptimizerConfig, RunLog, optimize
from .shape_derivative import ConstraintParams, finite_difference_check, shape_derivative_total

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConstraintParams", "ConvergenceError", "CurvatureLifter", "CurvingError",
    "DeformationState", "DegeneracyError", "HelfrichError", "HelfrichShapeOptimizer",
    "OptimizerConfig", "PhysicalParams", "RunLog", "ScalarSpace", "SolverError", "StructuralError",
    "SurfaceMesh", "VectorSpace", "assemble_lift_rhs", "averaged_normal", "bending_energy",
    "build_edge_adjacency", "curvature_errors", "curve_to_quadratic", "element_frame",
    "finite_difference_check", "generate_benchmark_shape", "generate_icosphere", "geometry_sample",
    "measure", "optimize", "quadrature", "shape_derivative_total", "solve_adjoint", "solve_state",
]
