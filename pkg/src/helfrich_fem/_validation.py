"""Input validation helpers for the estimator layer."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import StructuralError
from .mesh import SurfaceMesh


def check_mesh(X) -> SurfaceMesh:
    """Accept a :class:`SurfaceMesh` or a ``(vertices, triangles)`` pair."""
    if isinstance(X, SurfaceMesh):
        return X
    if isinstance(X, (tuple, list)) and len(X) in (2, 3):
        vertices = np.asarray(X[0], dtype=float)
        triangles = np.asarray(X[1])
        if not np.issubdtype(triangles.dtype, np.integer):
            if not np.all(np.mod(triangles, 1) == 0):
                raise StructuralError("triangle indices must be integers")
            triangles = triangles.astype(np.int64)
        if not np.all(np.isfinite(vertices)):
            raise ValueError("vertex coordinates must be finite")
        mids = X[2] if len(X) == 3 else None
        return SurfaceMesh.from_arrays(vertices, triangles, mids)
    raise TypeError(f"expected a SurfaceMesh or (vertices, triangles), got {type(X).__name__}")


def check_order(order) -> int:
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    return int(order)


def check_positive(name, value) -> float:
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_non_negative(name, value) -> float:
    if not isinstance(value, numbers.Real) or value < 0:
        raise ValueError(f"{name} must be non-negative, got {value!r}")
    return float(value)
