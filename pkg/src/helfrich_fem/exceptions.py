"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so keep the classes small and specific.
"""


class HelfrichError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(HelfrichError):
    """Mesh connectivity is not a closed, consistently oriented 2-manifold."""


class DegeneracyError(HelfrichError):
    """Geometry collapsed: zero-length edge, vanishing element area, folded normals."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class CurvingError(HelfrichError):
    """Closest-point projection onto an analytic surface failed to converge."""


class SolverError(HelfrichError):
    """A linear solve did not reach the requested residual."""


class ConfigurationError(HelfrichError):
    """Invalid configuration key, value or combination."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConvergenceError(HelfrichError):
    """Optimization stopped without meeting any convergence criterion."""
