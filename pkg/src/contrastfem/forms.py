"""Assembly of the Crouzeix-Raviart, Nitsche and weighted interior-penalty
systems, and evaluation of the weighted flux-jump pairing ``n_sharp``.

Throughout, ``sigma(v) = -lambda grad v`` and jumps are ``v|K_l - v|K_r`` on
interior faces and the trace on boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import AVERAGINGS, DiffusionField, face_weights
from .elements import cell_monomials, map_cell_rule, map_face_rule, quad_cell, quad_face
from .linalg import Assembler, SparseMatrix
from .mesh import Mesh
from .spaces import DATA_ORDER, DofMap, build_dofmap, cr_face_values, local_basis, piece

NITSCHE_VARIANTS = ("paper", "symmetric")


def default_penalty(method: str, k: int) -> float:
    method = method.lower()
    if method == "nitsche":
        return 3.0 * (k + 1) * (k + 2)
    if method == "ipdg":
        return 6.0 * (k + 1) * (k + 2)
    return 0.0


@dataclass(frozen=True)
class MethodConfig:
    method: str
    k: int = 1
    penalty: float | None = None
    nitsche_variant: str = "paper"
    averaging: str = "diffusive"

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.lower())
        if self.method not in ("cr", "nitsche", "ipdg", "hho"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.nitsche_variant not in NITSCHE_VARIANTS:
            raise ValueError(f"nitsche_variant must be one of {NITSCHE_VARIANTS}")
        if self.averaging not in AVERAGINGS:
            raise ValueError(f"averaging must be one of {AVERAGINGS}")
        if self.method in ("nitsche", "ipdg") and self.penalty is not None and not self.penalty > 0:
            raise ValueError(f"{self.method} penalty must be > 0, got {self.penalty}")

    @property
    def penalty_value(self) -> float:
        return default_penalty(self.method, self.k) if self.penalty is None else float(self.penalty)

    @property
    def symmetric(self) -> bool:
        return not (self.method == "nitsche" and self.nitsche_variant == "paper")

    def describe(self) -> str:
        s = f"method={self.method} k={self.k}"
        if self.method in ("nitsche", "ipdg"):
            s += f" penalty={self.penalty_value:g}"
        if self.method == "nitsche":
            s += f" variant={self.nitsche_variant}"
        return s


@dataclass
class LinearSystem:
    A: SparseMatrix
    b: np.ndarray
    dofmap: DofMap
    mesh: Mesh
    face_values: np.ndarray | None = None  # prescribed boundary unknowns (discrete lift)
    symmetric: bool = True


class _Local:
    """Shape functions of one cell, evaluated on demand at physical points."""

    def __init__(self, mesh: Mesh, dofmap: DofMap, K: int):
        self.basis = cell_monomials(mesh, K, dofmap.k)
        self.C = local_basis(mesh, dofmap, K)
        self.dofs = dofmap.cell_dofs[K]

    def values(self, pts):
        return self.basis.values(pts) @ self.C

    def grads(self, pts):
        return np.einsum("pmi,mn->pni", self.basis.grads(pts), self.C)


def _volume_terms(mesh, dofmap, lam, f, asm, b, locals_, lift=None):
    k = dofmap.k
    stiff_rule, data_rule = quad_cell(2 * k + 2), quad_cell(max(DATA_ORDER, 2 * k + 2))
    for K in range(mesh.n_cells):
        loc = locals_[K]
        tri = mesh.cell_points(K)
        pts, w = map_cell_rule(tri, stiff_rule)
        G = loc.grads(pts)
        AK = lam[K] * np.einsum("q,qai,qbi->ab", w, G, G)
        asm.add(loc.dofs, loc.dofs, AK)
        if f is not None:
            pts, w = map_cell_rule(tri, data_rule)
            bK = loc.values(pts).T @ (w * piece(f, mesh.subdomain[K])(pts))
            np.add.at(b, loc.dofs[loc.dofs >= 0], bK[loc.dofs >= 0])
        if lift is not None and np.any(loc.dofs < 0):
            fixed = loc.dofs < 0
            bK = -AK[:, fixed] @ lift[K][fixed]
            np.add.at(b, loc.dofs[~fixed], bK[~fixed])


def _check_field(mesh, lam):
    return lam.cell_values(mesh) if isinstance(lam, DiffusionField) else np.asarray(lam, dtype=float)


def assemble_cr(mesh: Mesh, lam: DiffusionField, f, g=None) -> LinearSystem:
    """Broken stiffness and load for the homogeneous Crouzeix-Raviart space.

    With ``g`` the boundary face averages of ``g`` act as a discrete lift: the
    system is still posed on the homogeneous space and the lift is moved to
    the right-hand side.
    """
    dm = build_dofmap(mesh, "CR", 1)
    lam_K = _check_field(mesh, lam)
    locals_ = [_Local(mesh, dm, K) for K in range(mesh.n_cells)]
    face_values, lift = None, None
    if g is not None:
        face_values = np.zeros(mesh.faces.n_faces)
        bnd = mesh.faces.boundary
        face_values[bnd] = cr_face_values(g, mesh)[bnd]
        lift = face_values[mesh.faces.cell_faces]
    asm, b = Assembler(dm.n_dofs), np.zeros(dm.n_dofs)
    _volume_terms(mesh, dm, lam_K, f, asm, b, locals_, lift)
    return LinearSystem(asm.tocsr(), b, dm, mesh, face_values, True)


def assemble_nitsche(mesh: Mesh, lam: DiffusionField, f, g, cfg: MethodConfig) -> LinearSystem:
    """Continuous P_k with weakly imposed Dirichlet data.

    The ``paper`` variant adds only the consistency term
    ``int_F sigma(v).n w`` and is nonsymmetric; ``symmetric`` also adds its
    transpose and the matching data term ``int_F g sigma(w).n``.
    """
    pen = cfg.penalty_value
    if not pen > 0:
        raise ValueError(f"Nitsche penalty must be > 0, got {pen}")
    k = cfg.k
    dm = build_dofmap(mesh, "LAGRANGE", k)
    lam_K = _check_field(mesh, lam)
    locals_ = [_Local(mesh, dm, K) for K in range(mesh.n_cells)]
    asm, b = Assembler(dm.n_dofs), np.zeros(dm.n_dofs)
    _volume_terms(mesh, dm, lam_K, f, asm, b, locals_)
    fs = mesh.faces
    rule, data_rule = quad_face(2 * k + 2), quad_face(max(DATA_ORDER, 2 * k + 2))
    for F in fs.boundary:
        K = fs.left[F]
        loc, n, h, lk = locals_[K], fs.normal[F], fs.length[F], lam_K[K]
        seg = mesh.face_points(F)
        pts, w = map_face_rule(seg, rule)
        V = loc.values(pts)
        S = -lk * loc.grads(pts) @ n  # sigma(phi).n
        AF = V.T @ (w[:, None] * S) + pen * lk / h * V.T @ (w[:, None] * V)
        if cfg.nitsche_variant == "symmetric":
            AF += S.T @ (w[:, None] * V)
        asm.add(loc.dofs, loc.dofs, AF)
        if g is not None:
            pts, w = map_face_rule(seg, data_rule)
            gv = piece(g, mesh.subdomain[K])(pts)
            bF = pen * lk / h * loc.values(pts).T @ (w * gv)
            if cfg.nitsche_variant == "symmetric":
                bF += (-lk * loc.grads(pts) @ n).T @ (w * gv)
            np.add.at(b, loc.dofs, bF)
    return LinearSystem(asm.tocsr(), b, dm, mesh, None, cfg.nitsche_variant == "symmetric")


def assemble_ipdg(mesh: Mesh, lam: DiffusionField, f, g, cfg: MethodConfig) -> LinearSystem:
    """Symmetric interior penalty dG with weighted flux averages and
    ``lambda_F``-scaled penalty on every face.

    The boundary data enter through the penalty term and the
    adjoint-consistency term ``int_F g sigma(w).n``.
    """
    pen = cfg.penalty_value
    if not pen > 0:
        raise ValueError(f"IPDG penalty must be > 0, got {pen}")
    k = cfg.k
    dm = build_dofmap(mesh, "BROKEN", k)
    lam_K = _check_field(mesh, lam)
    fw = face_weights(mesh, lam, cfg.averaging)
    locals_ = [_Local(mesh, dm, K) for K in range(mesh.n_cells)]
    asm, b = Assembler(dm.n_dofs), np.zeros(dm.n_dofs)
    _volume_terms(mesh, dm, lam_K, f, asm, b, locals_)
    fs = mesh.faces
    rule, data_rule = quad_face(2 * k + 2), quad_face(max(DATA_ORDER, 2 * k + 2))
    for F in range(fs.n_faces):
        Kl, Kr = fs.left[F], fs.right[F]
        n, h = fs.normal[F], fs.length[F]
        seg = mesh.face_points(F)
        pts, w = map_face_rule(seg, rule)
        ll = locals_[Kl]
        if Kr >= 0:
            lr = locals_[Kr]
            J = np.hstack([ll.values(pts), -lr.values(pts)])
            S = np.hstack([
                -fw.theta_l[F] * lam_K[Kl] * ll.grads(pts) @ n,
                -fw.theta_r[F] * lam_K[Kr] * lr.grads(pts) @ n,
            ])
            dofs = np.concatenate([ll.dofs, lr.dofs])
        else:
            J = ll.values(pts)
            S = -lam_K[Kl] * ll.grads(pts) @ n
            dofs = ll.dofs
        WJ = w[:, None] * J
        AF = WJ.T @ S + S.T @ WJ + pen * fw.lambda_F[F] / h * J.T @ WJ
        asm.add(dofs, dofs, AF)
        if Kr < 0 and g is not None:
            pts, w = map_face_rule(seg, data_rule)
            gv = piece(g, mesh.subdomain[Kl])(pts)
            V = ll.values(pts)
            Sg = -lam_K[Kl] * ll.grads(pts) @ n
            bF = pen * lam_K[Kl] / h * V.T @ (w * gv) + Sg.T @ (w * gv)
            np.add.at(b, dofs, bF)
    return LinearSystem(asm.tocsr(), b, dm, mesh, None, True)


def assemble(mesh: Mesh, lam: DiffusionField, f, g, cfg: MethodConfig) -> LinearSystem:
    if cfg.method == "cr":
        return assemble_cr(mesh, lam, f, g)
    if cfg.method == "nitsche":
        return assemble_nitsche(mesh, lam, f, g, cfg)
    if cfg.method == "ipdg":
        return assemble_ipdg(mesh, lam, f, g, cfg)
    raise ValueError("HHO systems are assembled by contrastfem.hho.assemble_hho")


# ---------------------------------------------------------------------------
# n_sharp


def _face_order(*degrees):
    return max(2, sum(degrees) + 2)


def eval_nsharp_discrete(v_h, w_h, lam: DiffusionField, averaging: str = "diffusive") -> float:
    """sum_F int_F {sigma(v_h)}_theta . n_F [w_h] for cellwise polynomial fields."""
    mesh = v_h.mesh
    fs = mesh.faces
    lam_K = lam.cell_values(mesh)
    fw = face_weights(mesh, lam, averaging)
    rule = quad_face(_face_order(getattr(v_h, "k", 4), getattr(w_h, "k", 4)))
    total = 0.0
    for F in range(fs.n_faces):
        Kl, Kr = fs.left[F], fs.right[F]
        pts, w = map_face_rule(mesh.face_points(F), rule)
        n = fs.normal[F]
        flux = -fw.theta_l[F] * lam_K[Kl] * (v_h.grad(Kl, pts) @ n)
        jump = w_h.value(Kl, pts)
        if Kr >= 0:
            flux = flux - fw.theta_r[F] * lam_K[Kr] * (v_h.grad(Kr, pts) @ n)
            jump = jump - w_h.value(Kr, pts)
        total += float(w @ (flux * jump))
    return total


def eval_nsharp_exact(u, w_h, lam: DiffusionField, order: int = 14) -> float:
    """Volume form of n_sharp for a cellwise-smooth ``u``:
    ``sum_K int_K sigma(u).grad w_h + div(sigma(u)) w_h``.

    ``u`` must expose cellwise ``grad`` and ``lap`` (an :class:`ExactField`).
    """
    if not (hasattr(u, "grad") and hasattr(u, "lap")):
        raise ValueError("u must provide cellwise gradient and Laplacian")
    mesh = w_h.mesh
    lam_K = lam.cell_values(mesh)
    rule = quad_cell(order)
    total = 0.0
    for K in range(mesh.n_cells):
        pts, w = map_cell_rule(mesh.cell_points(K), rule)
        sigma = -lam_K[K] * u.grad(K, pts)
        div_sigma = -lam_K[K] * u.lap(K, pts)
        total += float(w @ (np.einsum("pi,pi->p", sigma, w_h.grad(K, pts)) + div_sigma * w_h.value(K, pts)))
    return total


def eval_nsharp_exact_faces(u, w_h, lam: DiffusionField, averaging: str = "diffusive", order: int = 14) -> float:
    """Face form of n_sharp for ``u`` using its one-sided normal fluxes."""
    if not hasattr(u, "grad"):
        raise ValueError("u must provide a cellwise gradient")
    mesh = w_h.mesh
    fs = mesh.faces
    lam_K = lam.cell_values(mesh)
    fw = face_weights(mesh, lam, averaging)
    rule = quad_face(order)
    total = 0.0
    for F in range(fs.n_faces):
        Kl, Kr = fs.left[F], fs.right[F]
        pts, w = map_face_rule(mesh.face_points(F), rule)
        n = fs.normal[F]
        flux = -fw.theta_l[F] * lam_K[Kl] * (u.grad(Kl, pts) @ n)
        jump = w_h.value(Kl, pts)
        if Kr >= 0:
            flux = flux - fw.theta_r[F] * lam_K[Kr] * (u.grad(Kr, pts) @ n)
            jump = jump - w_h.value(Kr, pts)
        total += float(w @ (flux * jump))
    return total
