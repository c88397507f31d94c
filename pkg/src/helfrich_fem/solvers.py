"""Linear solvers: Jacobi-preconditioned CG, sparse direct, and saddle systems."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SolverError

DEFAULT_REL_TOL = 1e-10


def solve_spd(A, b, rel_tol: float = DEFAULT_REL_TOL, method: str = "cg", max_iter=None) -> np.ndarray:
    """Solve an SPD system to ``||Ax - b|| <= rel_tol ||b||``.

    ``method="cg"`` runs diagonal-preconditioned conjugate gradients capped at
    ``10 * n`` iterations; ``"direct"`` factorizes.  A 2-D ``b`` is solved
    column by column.
    """
    if not 0 < rel_tol <= 1e-4:
        raise ValueError("rel_tol must lie in (0, 1e-4]")
    b = np.asarray(b, dtype=float)
    if b.ndim == 2:
        if method == "direct":
            return _direct(A, b, rel_tol)
        return np.stack([solve_spd(A, b[:, j], rel_tol, method, max_iter) for j in range(b.shape[1])], axis=1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if method == "direct":
        return _direct(A, b, rel_tol)
    if method != "cg":
        raise ValueError(f"unknown solver method {method!r}")
    return pcg(A, b, rel_tol, max_iter)


def pcg(A, b, rel_tol=DEFAULT_REL_TOL, max_iter=None):
    A = sp.csr_matrix(A)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has a non-positive diagonal entry")
    inv_diag = 1.0 / diag
    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    target = rel_tol * np.linalg.norm(b)
    for _ in range(max_iter):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise SolverError("matrix is not positive definite (non-positive CG curvature)")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            return x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach relative residual {rel_tol:g} in {max_iter} iterations")


def _direct(A, b, rel_tol):
    lu = factorize(A)
    x = lu(b)
    res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
    if not np.isfinite(res):
        raise SolverError("direct solve produced non-finite values")
    return x


def factorize(A):
    """Sparse LU factorization returning a solve callable (handles 1-D and 2-D rhs)."""
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    return lu.solve


def solve_saddle(A, B, f, g=None, rel_tol: float = 1e-8, pin_pressure="auto"):
    """Solve ``[[A, B^T], [B, 0]] (x, p) = (f, g)``.

    The pressure is only pinned (first dof set to zero) when the system is
    found singular, or when ``pin_pressure`` is true.  Raises
    :class:`SolverError` if the residual stays above ``rel_tol``.
    """
    A = sp.csr_matrix(A)
    B = sp.csr_matrix(B)
    f = np.asarray(f, dtype=float)
    n, m = A.shape[0], B.shape[0]
    g = np.zeros(m) if g is None else np.asarray(g, dtype=float)
    if m == 0:
        return solve_spd(A, f, min(rel_tol, 1e-4), method="direct"), np.zeros(0)
    if not np.any(f) and not np.any(g):
        return np.zeros(n), np.zeros(m)
    K = sp.bmat([[A, B.T], [B, None]], format="csc")
    rhs = np.concatenate([f, g])
    sol = None
    if pin_pressure is not True:
        try:
            sol = spla.splu(K).solve(rhs)
            if not np.all(np.isfinite(sol)) or _saddle_residual(K, sol, rhs) > rel_tol:
                sol = None
        except RuntimeError:
            sol = None
        if sol is None and pin_pressure is False:
            raise SolverError("singular saddle-point system")
    if sol is None:
        keep = np.ones(n + m, dtype=bool)
        keep[n] = False
        Kp = K[keep][:, keep]
        try:
            reduced = spla.splu(sp.csc_matrix(Kp)).solve(rhs[keep])
        except RuntimeError as exc:
            raise SolverError(f"saddle system singular beyond the constant pressure mode: {exc}") from exc
        sol = np.zeros(n + m)
        sol[keep] = reduced
        if not np.all(np.isfinite(sol)):
            raise SolverError("saddle solve produced non-finite values")
    x, p = sol[:n], sol[n:]
    scale = max(np.linalg.norm(f), np.linalg.norm(g), 1e-300)
    if np.linalg.norm(B @ x - g) > rel_tol * scale:
        raise SolverError("constraint residual above tolerance")
    return x, p


def _saddle_residual(K, sol, rhs):
    return np.linalg.norm(K @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
