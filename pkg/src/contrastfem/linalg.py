"""Sparse storage and direct solvers for the assembled systems.

Matrices are ``scipy.sparse.csr_matrix`` (row offsets ``indptr``, column
indices ``indices``, values ``data``) with sorted, duplicate-free columns.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

SparseMatrix = sp.csr_matrix

DEFAULT_TOL = 1e-12


class SolverError(RuntimeError):
    """The linear solver broke down or the residual contract was not met."""


class CoercivityError(SolverError):
    """A matrix expected to be symmetric positive definite is not.

    For the penalised methods this means the penalty parameter lies below the
    coercivity threshold.
    """

    def __init__(self, message: str, context: str | None = None):
        self.context = context
        super().__init__(f"{message} [{context}]" if context else message)


def to_csr(rows, cols, vals, shape) -> SparseMatrix:
    """Sum duplicate (row, col) contributions into a canonical CSR matrix."""
    A = sp.coo_matrix((np.asarray(vals, dtype=float).ravel(),
                       (np.asarray(rows).ravel(), np.asarray(cols).ravel())), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


class Assembler:
    """Accumulates dense local blocks into triplet lists."""

    def __init__(self, n: int):
        self.n = n
        self._r: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self._v: list[np.ndarray] = []

    def add(self, row_dofs, col_dofs, block) -> None:
        row_dofs, col_dofs = np.asarray(row_dofs), np.asarray(col_dofs)
        R, C = np.meshgrid(row_dofs, col_dofs, indexing="ij")
        keep = (R >= 0) & (C >= 0)
        self._r.append(R[keep])
        self._c.append(C[keep])
        self._v.append(np.asarray(block)[keep])

    def tocsr(self) -> SparseMatrix:
        if not self._r:
            return sp.csr_matrix((self.n, self.n))
        return to_csr(np.concatenate(self._r), np.concatenate(self._c), np.concatenate(self._v), (self.n, self.n))


def _residual(A, x, b) -> np.ndarray:
    # extended precision: a double-precision evaluation alone sits near 1e-12
    # relative for the finer meshes, which would mask the true residual
    Al = sp.csr_matrix(A).astype(np.longdouble)
    return (b.astype(np.longdouble) - Al @ x.astype(np.longdouble)).astype(float)


def backward_error(A, x, b) -> float:
    """||b - Ax|| / (|| |A||x| || + ||b||), evaluated in extended precision.

    Equals the relative residual ||b - Ax|| / ||b|| up to a factor of two
    when ``Ax`` involves no cancellation; unlike it, it is attainable in
    double precision when ``|A||x|`` is much larger than ``b``.
    """
    r = np.linalg.norm(_residual(A, x, b))
    scale = np.linalg.norm(abs(sp.csr_matrix(A)) @ np.abs(x)) + np.linalg.norm(b)
    return r / scale if scale > 0 else r


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(_residual(A, x, b))
    return r / nb if nb > 0 else r


def _refine(A, solve, b, tol, steps=4):
    x = solve(b)
    for _ in range(steps):
        if backward_error(A, x, b) <= tol:
            break
        x = x + solve(_residual(A, x, b))
    return x


def _check_residual(A, x, b, tol, context):
    err = backward_error(A, x, b)
    if not np.all(np.isfinite(x)) or not err <= tol:
        raise SolverError(f"backward error {err:.3e} exceeds tolerance {tol:.1e}" + (f" [{context}]" if context else ""))


def _factor_spd(A, context):
    A = sp.csc_matrix(A)
    n = A.shape[0]
    asym = abs(A - A.T).max() if A.nnz else 0.0
    scale = abs(A).max() if A.nnz else 0.0
    if asym > 1e-10 * scale:
        raise CoercivityError(f"matrix is not symmetric (|A - A^T|_max = {asym:.3e})", context)
    # Jacobi scaling keeps pivots meaningful for high-contrast coefficients
    d = A.diagonal()
    if np.any(d <= 0):
        raise CoercivityError("non-positive diagonal entry: matrix is not positive definite", context)
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s)
    As = sp.csc_matrix(S @ A @ S)
    try:
        lu = splu(As, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise CoercivityError(f"factorisation broke down ({exc})", context) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise CoercivityError("off-diagonal pivoting was required: matrix is not positive definite", context)
    pivots = lu.U.diagonal()
    if np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
        raise CoercivityError(
            f"non-positive pivot {pivots.min():.3e} in LDL^T factorisation: matrix is not positive definite",
            context,
        )
    return A, s, lu


def check_spd(A, context: str | None = None) -> None:
    """Raise :class:`CoercivityError` unless ``A`` is symmetric positive definite."""
    if A.shape[0]:
        _factor_spd(A, context)


def solve_spd(A, b, tol: float = DEFAULT_TOL, context: str | None = None) -> np.ndarray:
    """Solve with a symmetric positive definite ``A``.

    The factorisation uses symmetric ordering and diagonal pivots only, so it
    is an LDL^T factorisation; a non-positive pivot proves ``A`` is not SPD
    and raises :class:`CoercivityError` carrying ``context``.  The solution
    is refined until its normwise backward error
    ``||b - Ax|| / (|| |A| |x| || + ||b||)`` is at most ``tol``, otherwise
    :class:`SolverError` is raised.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("dimension mismatch")
    if n == 0:
        return np.zeros(0)
    A, s, lu = _factor_spd(A, context)
    x = _refine(A, lambda r: s * lu.solve(s * r), b, tol)
    _check_residual(A, x, b, tol, context)
    return x


def solve_general(A, b, tol: float = DEFAULT_TOL, context: str | None = None) -> np.ndarray:
    """Solve with a general invertible ``A`` (sparse LU with partial pivoting)."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("dimension mismatch")
    if n == 0:
        return np.zeros(0)
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SolverError(f"matrix is singular ({exc})" + (f" [{context}]" if context else "")) from exc
    x = _refine(A, lu.solve, b, tol)
    _check_residual(A, x, b, tol, context)
    return x
