# -*- coding: utf-8 -*-
"""
Sparse linear algebra: SPD solves and static condensation of the
saddle-point systems produced by the latent variable iterations.

Matrices are scipy CSR throughout.  The latent block C is diagonal
(broken constants or lumped nodal elements), which turns each saddle
solve into a single SPD solve for the primal increment.
"""
import numpy as np
from dataclasses import dataclass
from scipy import sparse
from scipy.sparse.linalg import splu, cg, spsolve

DIRECT_DOF_LIMIT = 100_000


class LinAlgError(RuntimeError):
    pass


@dataclass
class SolveCounter:
    """Running total of condensed linear solves, reported in solver tables."""

    count: int = 0

    def tick(self, n=1):
        self.count += n


def solve_spd(A, b, tol=1e-12):
    """Solve a symmetric positive definite sparse system.

    Direct factorization below DIRECT_DOF_LIMIT unknowns, Jacobi-CG above.
    Raises with a diagnostic if the relative residual exceeds ``tol``.
    """
    A = A.tocsc()
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    scale = np.linalg.norm(b)
    if scale == 0.0:
        return np.zeros(n)
    if n <= DIRECT_DOF_LIMIT:
        try:
            lu = splu(A)
        except RuntimeError as exc:
            raise LinAlgError(f"direct factorization failed: {exc}") from exc
        x = lu.solve(b)
        for _ in range(3):  # iterative refinement for ill-scaled coefficients
            r = b - A @ x
            if np.linalg.norm(r) <= tol * scale:
                break
            x = x + lu.solve(r)
    else:
        M = sparse.diags(1.0 / A.diagonal())
        x, info = cg(A, b, rtol=tol, atol=0.0, M=M, maxiter=20 * n)
        if info != 0:
            raise LinAlgError(f"CG did not converge (info={info})")
    rel = np.linalg.norm(A @ x - b) / scale
    if not np.isfinite(rel) or rel > max(tol * 100, 1e-6):
        raise LinAlgError(f"SPD solve residual {rel:.3e} exceeds tolerance; matrix may not be SPD")
    return x


def solve_sparse(A, b):
    """General sparse LU solve (nonsymmetric systems, block fallbacks)."""
    x = spsolve(A.tocsc(), np.asarray(b, dtype=float))
    if not np.all(np.isfinite(x)):
        raise LinAlgError("sparse LU produced non-finite entries")
    return x


@dataclass
class SaddleSystem:
    """Reduced block system [[A, B], [B^T, -C]] with diagonal C > 0.

    A is the (already step-scaled) primal operator on free dofs, B the
    primal/latent coupling, C the diagonal of the regularized latent block.
    """

    A: sparse.spmatrix
    B: sparse.spmatrix
    C: np.ndarray
    rhs_V: np.ndarray
    rhs_W: np.ndarray

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        if np.any(self.C <= 0.0):
            raise LinAlgError("latent diagonal must be strictly positive (check epsilon)")


def condense_and_solve(system, counter=None, tol=1e-12):
    """Eliminate the latent increment and solve the SPD Schur complement.

    Returns (u, delta) with delta = C^{-1} (B^T u - rhs_W) and
    (A + B C^{-1} B^T) u = rhs_V + B C^{-1} rhs_W.
    """
    B = system.B.tocsr()
    inv_c = 1.0 / system.C
    schur = (system.A + (B.multiply(inv_c[None, :])) @ B.T).tocsc()
    rhs = system.rhs_V + B @ (inv_c * system.rhs_W)
    u = solve_spd(schur, rhs, tol=tol)
    delta = inv_c * (B.T @ u - system.rhs_W)
    if counter is not None:
        counter.tick()
    return u, delta


def solve_full_block(system):
    """Unreduced indefinite solve, used as an oracle for the condensation."""
    A, B = system.A.tocsr(), system.B.tocsr()
    C = sparse.diags(system.C)
    top = sparse.hstack([A, B])
    bottom = sparse.hstack([B.T, -C])
    block = sparse.vstack([top, bottom]).tocsc()
    rhs = np.concatenate([system.rhs_V, system.rhs_W])
    x = solve_sparse(block, rhs)
    n = A.shape[0]
    return x[:n], x[n:]
