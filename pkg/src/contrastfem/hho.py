"""Hybrid high-order discretisation on triangles, equal order ``k`` on cells
and faces.

Local unknowns of a cell are ordered ``[cell P_k | face 0 | face 1 | face 2]``
with faces in local order (face ``j`` opposite vertex ``j``) and each face
polynomial in the Legendre basis of the face's stored orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import DiffusionField
from .elements import (
    Monomials,
    cell_monomials,
    dim_poly,
    face_legendre,
    face_legendre_norms,
    map_cell_rule,
    map_face_rule,
    quad_cell,
    quad_face,
)
from .linalg import Assembler, SparseMatrix, solve_spd
from .mesh import Mesh
from .spaces import (
    DATA_ORDER,
    BrokenField,
    DiscreteSolution,
    DofMap,
    build_dofmap,
    l2_project_cell,
    l2_project_face,
    piece,
)


@dataclass
class HhoLocal:
    """Local operators of one cell.

    ``R`` maps local unknowns to P_{k+1} monomial coefficients, ``S`` to the
    stacked Legendre coefficients of the stabilisation on the three faces,
    ``A`` is the (unweighted) local form.  ``S_bis`` is the same operator
    computed from the trace discrepancy only.
    """

    k: int
    R: np.ndarray
    S: np.ndarray
    S_bis: np.ndarray
    A: np.ndarray
    G: np.ndarray  # P_{k+1} gradient Gram matrix
    W: np.ndarray  # h_F^{-1}-weighted face mass, diagonal
    seminorm: np.ndarray  # Gram matrix of the local H1-like seminorm
    basis: Monomials

    @property
    def n_cell(self) -> int:
        return dim_poly(self.k)


def hho_local(mesh: Mesh, K: int, k: int) -> HhoLocal:
    fs = mesh.faces
    nk, nr, nf = dim_poly(k), dim_poly(k + 1), k + 1
    nloc = nk + 3 * nf
    basis = cell_monomials(mesh, K, k + 1)
    pts, w = map_cell_rule(mesh.cell_points(K), quad_cell(2 * k + 2))
    V = basis.values(pts)
    Gq = basis.grads(pts)
    G = np.einsum("q,qai,qbi->ab", w, Gq, Gq)
    M = (V * w[:, None]).T @ V  # P_{k+1} mass
    Mkk, Mkr = M[:nk, :nk], M[:nk, :]
    lap = basis.laplacians(pts)
    mean_r = w @ V  # integrals of the P_{k+1} monomials

    # (grad R, grad q) = -(v_K, lap q) + (v_dK, n_K . grad q)_dK
    B = np.zeros((nr, nloc))
    B[:, :nk] = -(lap * w[:, None]).T @ V[:, :nk]
    frule = quad_face(2 * k + 4)
    P = face_legendre(frule.points, k)
    face_data = []
    for j in range(3):
        F = fs.cell_faces[K, j]
        fpts, fw = map_face_rule(mesh.face_points(F), frule)
        nK = fs.cell_signs[K, j] * fs.normal[F]
        dn = basis.grads(fpts) @ nK
        sl = slice(nk + j * nf, nk + (j + 1) * nf)
        B[:, sl] = (dn * fw[:, None]).T @ P
        face_data.append((sl, fw, basis.values(fpts), face_legendre_norms(k, fs.length[F]), fs.length[F]))

    R = np.zeros((nr, nloc))
    R[1:] = np.linalg.solve(G[1:, 1:], B[1:])
    cell_mean = np.zeros(nloc)
    cell_mean[:nk] = mean_r[:nk]
    R[0] = (cell_mean - mean_r[1:] @ R[1:]) / mean_r[0]

    # (I - Pi_K^k) acting on P_{k+1} coefficients
    proj = np.zeros((nr, nr))
    proj[:nk] = np.linalg.solve(Mkk, Mkr)
    I_minus_Pi = np.eye(nr) - proj

    def face_project(j, values):
        sl, fw, _, norms, _ = face_data[j]
        return (P.T @ (fw[:, None] * values)) / norms[:, None]

    E_cell = np.zeros((nk, nloc))
    E_cell[:, :nk] = np.eye(nk)
    D = I_minus_Pi @ R
    S = np.zeros((3 * nf, nloc))
    delta = np.zeros((3 * nf, nloc))
    for j in range(3):
        sl, fw, Vf, norms, _ = face_data[j]
        trace_cell = Vf[:, :nk] @ E_cell
        face_unknown = np.zeros((nf, nloc))
        face_unknown[:, sl] = np.eye(nf)
        delta[j * nf:(j + 1) * nf] = face_project(j, trace_cell) - face_unknown
        S[j * nf:(j + 1) * nf] = delta[j * nf:(j + 1) * nf] + face_project(j, Vf @ D)
    # second route: only the discrepancy delta = v_K|dK - v_dK enters
    D_delta = I_minus_Pi @ (R[:, nk:] @ delta)
    S_bis = np.zeros_like(S)
    for j in range(3):
        _, _, Vf, _, _ = face_data[j]
        S_bis[j * nf:(j + 1) * nf] = delta[j * nf:(j + 1) * nf] - face_project(j, Vf @ D_delta)

    W = np.concatenate([fd[3] / fd[4] for fd in face_data])
    A = R.T @ G @ R + S.T @ (W[:, None] * S)
    A = 0.5 * (A + A.T)

    # |v|^2 = ||grad v_K||^2 + sum_F h_F^{-1} ||v_K - v_F||_F^2
    Gk = np.zeros((nloc, nloc))
    Gk[:nk, :nk] = G[:nk, :nk]
    semi = Gk.copy()
    for j in range(3):
        sl, fw, Vf, norms, hF = face_data[j]
        diff = Vf[:, :nk] @ E_cell
        diff[:, sl] -= P
        semi += diff.T @ (fw[:, None] * diff) / hF
    return HhoLocal(k, R, S, S_bis, A, G, W, semi, basis)


def local_reconstruction(mesh: Mesh, K: int, k: int, v_hat) -> np.ndarray:
    """P_{k+1} monomial coefficients of the potential reconstruction."""
    return hho_local(mesh, K, k).R @ np.asarray(v_hat, dtype=float)


def local_stabilization(mesh: Mesh, K: int, k: int, v_hat, route: str = "full") -> np.ndarray:
    """Stacked face Legendre coefficients of the stabilisation operator.

    ``route="full"`` projects the composite residual, ``route="discrepancy"``
    uses only ``v_K|dK - v_dK``; both are the same operator.
    """
    loc = hho_local(mesh, K, k)
    op = {"full": loc.S, "discrepancy": loc.S_bis}[route]
    return op @ np.asarray(v_hat, dtype=float)


def local_form(mesh: Mesh, K: int, k: int, lam_K: float = 1.0) -> np.ndarray:
    return lam_K * hho_local(mesh, K, k).A


def local_reduction(u, mesh: Mesh, K: int, k: int, order: int = DATA_ORDER) -> np.ndarray:
    """Local reduction (Pi_K u, Pi_dK u) of a callable on one cell."""
    fs = mesh.faces
    f = piece(u, mesh.subdomain[K])
    parts = [l2_project_cell(f, mesh, K, k, order)]
    for F in fs.cell_faces[K]:
        parts.append(l2_project_face(f, mesh, F, k, order, "left" if fs.left[F] == K else "right"))
    return np.concatenate(parts)


def elliptic_projection(grad_u, mean_u: float, mesh: Mesh, K: int, degree: int, order: int = 14) -> np.ndarray:
    """Gradient-Galerkin projection onto P_degree with matched mean.

    ``grad_u`` is a callable returning (n, 2) gradients; ``mean_u`` is the
    integral of ``u`` over ``K``.
    """
    basis = cell_monomials(mesh, K, degree)
    pts, w = map_cell_rule(mesh.cell_points(K), quad_cell(max(order, 2 * degree)))
    Gq = basis.grads(pts)
    G = np.einsum("q,qai,qbi->ab", w, Gq, Gq)
    rhs = np.einsum("q,qai,qi->a", w, Gq, piece(grad_u, mesh.subdomain[K])(pts))
    c = np.zeros(basis.dim)
    c[1:] = np.linalg.solve(G[1:, 1:], rhs[1:])
    mean_r = w @ basis.values(pts)
    c[0] = (mean_u - mean_r[1:] @ c[1:]) / mean_r[0]
    return c


# ---------------------------------------------------------------------------
# global problem


@dataclass
class HhoSystem:
    """Assembled HHO system; when condensed, ``A`` acts on face unknowns only
    and ``recovery`` holds per-cell data to rebuild the cell unknowns."""

    A: SparseMatrix
    b: np.ndarray
    dofmap: DofMap
    mesh: Mesh
    face_values: np.ndarray
    condensed: bool = False
    recovery: list | None = None
    symmetric: bool = True

    def expand(self, x: np.ndarray) -> DiscreteSolution:
        """Full HHO solution from a solution of this system."""
        dm = self.dofmap
        if not self.condensed:
            return DiscreteSolution(dm, x, self.mesh, self.face_values)
        nk = dim_poly(dm.k)
        offset = nk * self.mesh.n_cells
        full = np.zeros(dm.n_dofs)
        full[offset:] = x
        for K, (y, Z, face_idx) in enumerate(self.recovery):
            uf = np.where(face_idx >= 0, full[np.maximum(face_idx, 0)], 0.0)
            full[dm.cell_dofs[K]] = y - Z @ uf
        return DiscreteSolution(dm, full, self.mesh, self.face_values)


def assemble_hho(mesh: Mesh, lam: DiffusionField, f, k: int, condense: bool = False, g=None) -> HhoSystem:
    """Global HHO system with boundary face unknowns eliminated.

    ``g`` (optional) prescribes the boundary face unknowns as L2 projections
    of ``g`` (a discrete lift moved to the right-hand side); without it they
    are zero.
    """
    dm = build_dofmap(mesh, "HHO", k)
    fs = mesh.faces
    nk, nf = dim_poly(k), k + 1
    lam_K = lam.cell_values(mesh) if isinstance(lam, DiffusionField) else np.asarray(lam, dtype=float)
    face_values = np.zeros((fs.n_faces, nf))
    if g is not None:
        for F in fs.boundary:
            face_values[F] = l2_project_face(g, mesh, F, k)
    offset = nk * mesh.n_cells
    n_sys = dm.n_dofs - offset if condense else dm.n_dofs
    asm, b = Assembler(n_sys), np.zeros(n_sys)
    recovery = [] if condense else None
    data_rule = quad_cell(max(DATA_ORDER, 2 * k + 2))
    for K in range(mesh.n_cells):
        loc = hho_local(mesh, K, k)
        AK = lam_K[K] * loc.A
        bK = np.zeros(len(AK))
        if f is not None:
            pts, w = map_cell_rule(mesh.cell_points(K), data_rule)
            bK[:nk] = loc.basis.values(pts)[:, :nk].T @ (w * piece(f, mesh.subdomain[K])(pts))
        dofs = dm.local_dofs(mesh, K)
        fixed = dofs < 0
        if g is not None and fixed.any():
            fixed_vals = face_values[fs.cell_faces[K]].ravel()
            bK -= AK[:, nk:][:, fixed[nk:]] @ fixed_vals[fixed[nk:]]
        if not condense:
            asm.add(dofs, dofs, AK)
            np.add.at(b, dofs[~fixed], bK[~fixed])
            continue
        Att, Atf = AK[:nk, :nk], AK[:nk, nk:]
        Aft, Aff = AK[nk:, :nk], AK[nk:, nk:]
        try:
            L = np.linalg.cholesky(Att)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"cell block of cell {K} is not SPD") from exc
        Y = np.linalg.solve(L.T, np.linalg.solve(L, np.column_stack([bK[:nk], Atf])))
        y, Z = Y[:, 0], Y[:, 1:]
        face_idx = dofs[nk:]
        sys_idx = np.where(face_idx >= 0, face_idx - offset, -1)
        asm.add(sys_idx, sys_idx, Aff - Aft @ Z)
        rhs = bK[nk:] - Aft @ y
        np.add.at(b, sys_idx[sys_idx >= 0], rhs[sys_idx >= 0])
        recovery.append((y, Z, face_idx))
    return HhoSystem(asm.tocsr(), b, dm, mesh, face_values, condense, recovery)


def solve_hho(system: HhoSystem, tol: float = 1e-12) -> DiscreteSolution:
    x = solve_spd(system.A, system.b, tol, context=f"method=hho k={system.dofmap.k}")
    return system.expand(x)


def reconstruct_solution(sol: DiscreteSolution) -> BrokenField:
    """Cellwise potential reconstruction of an HHO solution, degree k+1."""
    mesh, k = sol.mesh, sol.dofmap.k
    coeffs = np.empty((mesh.n_cells, dim_poly(k + 1)))
    for K in range(mesh.n_cells):
        coeffs[K] = hho_local(mesh, K, k).R @ sol.local_values(K)
    return BrokenField(mesh, k + 1, coeffs)


def cell_field(sol: DiscreteSolution) -> BrokenField:
    """The cell unknowns of an HHO solution as a broken P_k field."""
    mesh, dm = sol.mesh, sol.dofmap
    return BrokenField(mesh, dm.k, sol.values[dm.cell_dofs])
