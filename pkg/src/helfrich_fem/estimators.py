"""Estimator-style wrappers (``fit`` / ``transform`` / ``get_params``).

The inputs are meshes rather than sample matrices, but parameters, cloning
and fitted attributes follow scikit-learn conventions.
"""

from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mesh, check_non_negative, check_order, check_positive
from .curvature import PhysicalParams, bending_energy, solve_adjoint, solve_state
from .fem import ScalarSpace
from .geometry import DeformationState, measure
from .optimizer import OptimizerConfig, optimize


class CurvatureLifter(TransformerMixin, BaseEstimator):
    """Lift the distributional mean curvature of a mesh into a Lagrange field.

    Parameters
    ----------
    order : int
        Polynomial order of the curvature space (1 or 2).
    kb, H0 : float
        Bending modulus and spontaneous curvature for the reported energy.

    Attributes
    ----------
    kappa_ : ndarray
        Curvature coefficients; the first ``n_vertices`` entries are vertex values.
    sigma_ : ndarray
        Multiplier coefficients.
    energy_, energy_star_ : float
        Bending energy ``W`` and ``W / (8 pi kb)``.
    """

    def __init__(self, order=1, kb=1.0, H0=0.0):
        self.order = order
        self.kb = kb
        self.H0 = H0

    def fit(self, X, y=None):
        mesh = check_mesh(X)
        order = check_order(self.order)
        params = PhysicalParams(check_positive("kb", self.kb), float(self.H0))
        state = DeformationState(mesh, max(order, mesh.geometry_order))
        space = ScalarSpace(mesh, order)
        kappa = solve_state(space, state)
        sigma = solve_adjoint(space, state, kappa, params)
        energy = bending_energy(kappa, state, params)
        self.kappa_ = kappa.coeffs
        self.sigma_ = sigma.coeffs
        self.energy_ = energy["W"]
        self.energy_star_ = energy["E_star"]
        self.n_vertices_ = mesh.n_vertices
        return self

    def transform(self, X):
        """Vertex curvature values of ``X`` (re-lifted on that mesh)."""
        check_is_fitted(self, "kappa_")
        mesh = check_mesh(X)
        order = check_order(self.order)
        state = DeformationState(mesh, max(order, mesh.geometry_order))
        return solve_state(ScalarSpace(mesh, order), state).coeffs[: mesh.n_vertices]


class HelfrichShapeOptimizer(BaseEstimator):
    """Minimize the penalized Helfrich energy starting from a mesh.

    Parameters mirror :class:`OptimizerConfig`; only the common ones are
    exposed here.

    Attributes
    ----------
    run_log_ : RunLog
    deformation_ : DeformationState
        Final displacement over the input mesh.
    n_iter_ : int
    energy_star_ : float
    """

    def __init__(
        self,
        kb=0.01,
        H0=0.0,
        cA=2.0,
        cV=1.0,
        cAloc=1.0,
        reduced_volume=None,
        alpha=0.025,
        alpha_max=0.1,
        alpha_factor=1.0,
        max_iter=1000,
        M=0,
        gradient_mode="h1",
        order=1,
        continuation_rounds=1,
        continuation_factor=1.0,
    ):
        self.kb = kb
        self.H0 = H0
        self.cA = cA
        self.cV = cV
        self.cAloc = cAloc
        self.reduced_volume = reduced_volume
        self.alpha = alpha
        self.alpha_max = alpha_max
        self.alpha_factor = alpha_factor
        self.max_iter = max_iter
        self.M = M
        self.gradient_mode = gradient_mode
        self.order = order
        self.continuation_rounds = continuation_rounds
        self.continuation_factor = continuation_factor

    def _config(self) -> OptimizerConfig:
        for name in ("cA", "cV", "cAloc"):
            check_non_negative(name, getattr(self, name))
        return OptimizerConfig(
            kb=self.kb, H0=self.H0, cA=self.cA, cV=self.cV, cAloc=self.cAloc,
            reduced_volume=self.reduced_volume, alpha=self.alpha, alpha_max=self.alpha_max,
            alpha_factor=self.alpha_factor, Nmax=int(self.max_iter), M=int(self.M),
            gradient_mode=self.gradient_mode, order=check_order(self.order),
            continuation_rounds=self.continuation_rounds, continuation_factor=self.continuation_factor,
        )

    def fit(self, X, y=None):
        mesh = check_mesh(X)
        log = optimize(mesh, self._config())
        self.run_log_ = log
        self.deformation_ = log.final_state
        self.n_iter_ = int(log.rows[-1]["iter"])
        self.energy_star_ = log.rows[-1]["Estar"]
        self.reduced_volume_ = log.rows[-1]["v"]
        return self

    def transform(self, X=None):
        """Deformed vertex positions of the fitted mesh."""
        check_is_fitted(self, "deformation_")
        return self.deformation_.vertex_positions()

    def score(self, X=None, y=None):
        """Negative final cost (higher is better)."""
        check_is_fitted(self, "run_log_")
        return -float(self.run_log_.rows[-1]["J"])
