"""Degree-of-freedom maps, cellwise fields, interpolation and projections."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .elements import (
    Monomials,
    cell_monomials,
    dim_poly,
    face_legendre,
    face_legendre_norms,
    lagrange_lattice,
    map_cell_rule,
    map_face_rule,
    nodal_coefficients,
    quad_cell,
    quad_face,
)
from .mesh import Mesh

METHODS = ("CR", "LAGRANGE", "BROKEN", "HHO")
DATA_ORDER = 10


# ---------------------------------------------------------------------------
# functions and cellwise fields


class PiecewiseFunction:
    """One callable ``f(points) -> values`` per subdomain tag.

    A plain callable is accepted wherever a piecewise function is expected.
    """

    def __init__(self, pieces: Mapping[int, Callable] | Callable):
        if callable(pieces):
            pieces = {0: pieces}
        self.pieces = dict(pieces)

    def on(self, tag: int) -> Callable:
        try:
            return self.pieces[int(tag)]
        except KeyError:
            if 0 in self.pieces:
                return self.pieces[0]
            raise KeyError(f"no piece defined for subdomain {tag}") from None

    def __call__(self, pts, tag: int = 0):
        return self.on(tag)(np.atleast_2d(pts))


def piece(f, tag: int) -> Callable:
    """The restriction of ``f`` (piecewise or plain callable) to subdomain ``tag``."""
    if isinstance(f, PiecewiseFunction):
        return f.on(tag)
    return f


class BrokenField:
    """Cellwise polynomials of degree ``k`` in the scaled monomial basis."""

    def __init__(self, mesh: Mesh, k: int, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (mesh.n_cells, dim_poly(k)):
            raise ValueError(f"expected coefficients of shape {(mesh.n_cells, dim_poly(k))}, got {coeffs.shape}")
        self.mesh = mesh
        self.k = k
        self.coeffs = coeffs

    def basis(self, K: int) -> Monomials:
        return cell_monomials(self.mesh, K, self.k)

    def value(self, K, pts):
        return self.basis(K).values(pts) @ self.coeffs[K]

    def grad(self, K, pts):
        return np.einsum("pmi,m->pi", self.basis(K).grads(pts), self.coeffs[K])

    def hess(self, K, pts):
        return np.einsum("pmij,m->pij", self.basis(K).hessians(pts), self.coeffs[K])

    def lap(self, K, pts):
        return self.basis(K).laplacians(pts) @ self.coeffs[K]

    def __mul__(self, c: float) -> "BrokenField":
        return BrokenField(self.mesh, self.k, c * self.coeffs)

    __rmul__ = __mul__

    @classmethod
    def random(cls, mesh: Mesh, k: int, rng: np.random.Generator) -> "BrokenField":
        return cls(mesh, k, rng.standard_normal((mesh.n_cells, dim_poly(k))))


class ExactField:
    """A cellwise-smooth function given by value, gradient and Laplacian callables."""

    def __init__(self, mesh: Mesh, value, grad=None, lap=None):
        self.mesh = mesh
        self._value, self._grad, self._lap = value, grad, lap

    def _tag(self, K):
        return self.mesh.subdomain[K]

    def value(self, K, pts):
        return np.broadcast_to(piece(self._value, self._tag(K))(np.atleast_2d(pts)), (len(np.atleast_2d(pts)),))

    def grad(self, K, pts):
        if self._grad is None:
            raise ValueError("this field carries no gradient")
        return piece(self._grad, self._tag(K))(np.atleast_2d(pts))

    def lap(self, K, pts):
        if self._lap is None:
            raise ValueError("this field carries no Laplacian")
        return piece(self._lap, self._tag(K))(np.atleast_2d(pts))


class Difference:
    """Pointwise ``a - b`` of two cellwise fields on the same mesh."""

    def __init__(self, a, b):
        if a.mesh is not b.mesh:
            raise ValueError("fields live on different meshes")
        self.mesh, self.a, self.b = a.mesh, a, b

    def value(self, K, pts):
        return self.a.value(K, pts) - self.b.value(K, pts)

    def grad(self, K, pts):
        return self.a.grad(K, pts) - self.b.grad(K, pts)

    def lap(self, K, pts):
        return self.a.lap(K, pts) - self.b.lap(K, pts)


# ---------------------------------------------------------------------------
# dof maps


@dataclass(frozen=True)
class DofMap:
    """Global numbering for one discrete space.

    ``cell_dofs[K]`` lists the local-to-global map; ``-1`` marks a local dof
    eliminated by the homogeneous boundary condition (CR boundary faces).
    For HHO ``cell_dofs`` holds only the cell unknowns and ``face_dofs[F]``
    the face unknowns, ``-1`` on boundary faces.
    """

    method: str
    k: int
    n_dofs: int
    cell_dofs: np.ndarray
    face_dofs: np.ndarray | None = None
    boundary_faces: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def local_dofs(self, mesh: Mesh, K: int) -> np.ndarray:
        """Local-to-global map including HHO face unknowns in local face order."""
        if self.method != "HHO":
            return self.cell_dofs[K]
        return np.concatenate([self.cell_dofs[K], self.face_dofs[mesh.faces.cell_faces[K]].ravel()])


def build_dofmap(mesh: Mesh, method: str, k: int) -> DofMap:
    method = method.upper()
    fs = mesh.faces
    if method == "CR":
        if k != 1:
            raise ValueError(f"Crouzeix-Raviart is only defined for k=1, got k={k}")
        face_dof = np.full(fs.n_faces, -1, dtype=np.int64)
        interior = fs.interior
        face_dof[interior] = np.arange(len(interior))
        return DofMap("CR", 1, len(interior), face_dof[fs.cell_faces], boundary_faces=fs.boundary)
    if method == "LAGRANGE":
        if k not in (1, 2, 3):
            raise ValueError(f"Lagrange elements support k in (1, 2, 3), got k={k}")
        V, E, T = mesh.n_vertices, fs.n_faces, mesh.n_cells
        ni = (k - 1) * (k - 2) // 2
        cols = [mesh.cells]
        for j in range(3):
            F = fs.cell_faces[:, j]
            base = V + (k - 1) * F
            s = np.arange(k - 1)
            # local nodes run from local vertex j+1 to j+2; reverse if the
            # face is stored the other way round
            forward = mesh.cells[:, (j + 1) % 3] == fs.vertices[F, 0]
            idx = np.where(forward[:, None], base[:, None] + s, base[:, None] + (k - 2 - s))
            cols.append(idx)
        cols.append(V + (k - 1) * E + ni * np.arange(T)[:, None] + np.arange(ni))
        cell_dofs = np.concatenate(cols, axis=1).astype(np.int64)
        return DofMap("LAGRANGE", k, V + (k - 1) * E + ni * T, cell_dofs, boundary_faces=fs.boundary)
    if method == "BROKEN":
        if k not in (1, 2, 3):
            raise ValueError(f"broken polynomial spaces support k in (1, 2, 3), got k={k}")
        n = dim_poly(k)
        return DofMap("BROKEN", k, n * mesh.n_cells, np.arange(n * mesh.n_cells).reshape(-1, n),
                      boundary_faces=fs.boundary)
    if method == "HHO":
        if k not in (0, 1, 2):
            raise ValueError(f"HHO supports k in (0, 1, 2), got k={k}")
        nc, nf = dim_poly(k), k + 1
        cell_dofs = np.arange(nc * mesh.n_cells).reshape(-1, nc)
        face_dofs = np.full((fs.n_faces, nf), -1, dtype=np.int64)
        interior = fs.interior
        face_dofs[interior] = nc * mesh.n_cells + np.arange(nf * len(interior)).reshape(-1, nf)
        return DofMap("HHO", k, nc * mesh.n_cells + nf * len(interior), cell_dofs, face_dofs, fs.boundary)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def local_nodes(mesh: Mesh, dofmap: DofMap, K: int) -> np.ndarray:
    """Physical nodes of the nodal families (CR midpoints, Lagrange lattice)."""
    tri = mesh.cell_points(K)
    if dofmap.method == "CR":
        return 0.5 * (tri[[1, 2, 0]] + tri[[2, 0, 1]])
    if dofmap.method == "LAGRANGE":
        return lagrange_lattice(dofmap.k) @ tri
    raise ValueError(f"{dofmap.method} is not a nodal space")


def local_basis(mesh: Mesh, dofmap: DofMap, K: int) -> np.ndarray:
    """Matrix whose columns express the local shape functions of cell ``K``
    in the scaled monomials of degree ``dofmap.k``."""
    if dofmap.method in ("CR", "LAGRANGE"):
        return nodal_coefficients(cell_monomials(mesh, K, dofmap.k), local_nodes(mesh, dofmap, K))
    if dofmap.method == "BROKEN":
        return np.eye(dim_poly(dofmap.k))
    raise ValueError("HHO has no single-polynomial local basis; see contrastfem.hho")


@dataclass
class DiscreteSolution:
    """Coefficient vector of a discrete function.

    ``face_values`` carries prescribed values of eliminated boundary unknowns
    (CR face values, HHO face polynomials) when a discrete lift was used; it
    is indexed by face and zero where nothing is prescribed.
    """

    dofmap: DofMap
    values: np.ndarray
    mesh: Mesh | None = None
    face_values: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.dofmap.n_dofs,):
            raise ValueError(f"vector length {self.values.shape} does not match {self.dofmap.n_dofs} dofs")

    def local_values(self, K: int) -> np.ndarray:
        dm, mesh = self.dofmap, self.mesh
        if dm.method == "HHO":
            F = mesh.faces.cell_faces[K]
            faces = self.values[dm.face_dofs[F]]
            faces = np.where(dm.face_dofs[F] >= 0, faces, self._prescribed(F))
            return np.concatenate([self.values[dm.cell_dofs[K]], faces.ravel()])
        idx = dm.cell_dofs[K]
        vals = self.values[np.maximum(idx, 0)]
        if np.any(idx < 0):
            vals = np.where(idx >= 0, vals, self._prescribed(mesh.faces.cell_faces[K]))
        return vals

    def _prescribed(self, F):
        if self.face_values is None:
            shape = (len(F),) if self.dofmap.method == "CR" else (len(F), self.dofmap.k + 1)
            return np.zeros(shape)
        return self.face_values[F]

    def to_broken(self) -> BrokenField:
        """The cellwise polynomial representation (CR, Lagrange, broken)."""
        dm, mesh = self.dofmap, self.mesh
        if dm.method == "HHO":
            raise ValueError("use hho.reconstruct_solution or the cell unknowns for HHO")
        coeffs = np.empty((mesh.n_cells, dim_poly(dm.k)))
        for K in range(mesh.n_cells):
            coeffs[K] = local_basis(mesh, dm, K) @ self.local_values(K)
        return BrokenField(mesh, dm.k, coeffs)


# ---------------------------------------------------------------------------
# interpolation and projection


def face_average(u, mesh: Mesh, F: int, order: int = DATA_ORDER) -> float:
    fs = mesh.faces
    pts, w = map_face_rule(mesh.face_points(F), quad_face(order))
    f = piece(u, mesh.subdomain[fs.left[F]])
    return float(w @ f(pts) / fs.length[F])


def cr_face_values(u, mesh: Mesh, order: int = DATA_ORDER) -> np.ndarray:
    """Face averages of ``u`` on every face."""
    return np.array([face_average(u, mesh, F, order) for F in range(mesh.faces.n_faces)])


def interpolate_cr(u, mesh: Mesh, order: int = DATA_ORDER, keep_boundary: bool = False) -> DiscreteSolution:
    """Crouzeix-Raviart interpolant: each dof is the face average of ``u``.

    Boundary averages are dropped (homogeneous space) unless ``keep_boundary``,
    in which case they are carried as prescribed face values.
    """
    dm = build_dofmap(mesh, "CR", 1)
    avg = cr_face_values(u, mesh, order)
    values = avg[mesh.faces.interior]
    face_values = None
    if keep_boundary:
        face_values = np.zeros(mesh.faces.n_faces)
        face_values[mesh.faces.boundary] = avg[mesh.faces.boundary]
    return DiscreteSolution(dm, values, mesh, face_values)


def interpolate_lagrange(u, mesh: Mesh, k: int) -> DiscreteSolution:
    """Nodal interpolant in the continuous P_k space."""
    dm = build_dofmap(mesh, "LAGRANGE", k)
    values = np.zeros(dm.n_dofs)
    for K in range(mesh.n_cells):
        values[dm.cell_dofs[K]] = piece(u, mesh.subdomain[K])(local_nodes(mesh, dm, K))
    return DiscreteSolution(dm, values, mesh)


def cell_mass(mesh: Mesh, K: int, k: int, order: int | None = None) -> np.ndarray:
    pts, w = map_cell_rule(mesh.cell_points(K), quad_cell(order if order is not None else 2 * k))
    V = cell_monomials(mesh, K, k).values(pts)
    return (V * w[:, None]).T @ V


def l2_project_cell(u, mesh: Mesh, K: int, k: int, order: int = DATA_ORDER) -> np.ndarray:
    """Coefficients of the L2(K)-orthogonal projection of ``u`` onto P_k."""
    pts, w = map_cell_rule(mesh.cell_points(K), quad_cell(max(order, 2 * k)))
    V = cell_monomials(mesh, K, k).values(pts)
    M = (V * w[:, None]).T @ V
    rhs = V.T @ (w * piece(u, mesh.subdomain[K])(pts))
    if np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError(f"singular local mass matrix on cell {K}")
    return np.linalg.solve(M, rhs)


def l2_project_face(u, mesh: Mesh, F: int, k: int, order: int = DATA_ORDER, side: str = "left") -> np.ndarray:
    """Legendre coefficients of the L2(F)-orthogonal projection of the trace of
    ``u`` taken from the ``side`` cell of face ``F``."""
    fs = mesh.faces
    rule = quad_face(max(order, 2 * k))
    pts, w = map_face_rule(mesh.face_points(F), rule)
    K = fs.left[F] if side == "left" else fs.right[F]
    if K < 0:
        raise ValueError(f"face {F} has no {side} cell")
    vals = piece(u, mesh.subdomain[K])(pts)
    P = face_legendre(rule.points, k)
    return (P.T @ (w * vals)) / face_legendre_norms(k, fs.length[F])


def hho_reduction(u, mesh: Mesh, k: int, order: int = DATA_ORDER, rtol: float = 1e-10) -> DiscreteSolution:
    """Cell and face L2 projections of ``u`` (the HHO reduction operator).

    Interior faces require a single-valued trace; boundary face projections
    are returned in ``face_values`` (zero when ``u`` vanishes on the boundary).
    """
    dm = build_dofmap(mesh, "HHO", k)
    fs = mesh.faces
    values = np.zeros(dm.n_dofs)
    for K in range(mesh.n_cells):
        values[dm.cell_dofs[K]] = l2_project_cell(u, mesh, K, k, order)
    face_values = np.zeros((fs.n_faces, k + 1))
    for F in range(fs.n_faces):
        pl = l2_project_face(u, mesh, F, k, order, "left")
        if fs.right[F] >= 0:
            pr = l2_project_face(u, mesh, F, k, order, "right")
            scale = max(np.abs(pl).max(), np.abs(pr).max(), 1.0)
            if np.abs(pl - pr).max() > rtol * scale:
                raise ValueError(f"trace of u is discontinuous across face {F}; HHO reduction needs a continuous u")
            values[dm.face_dofs[F]] = pl
        else:
            face_values[F] = pl
    return DiscreteSolution(dm, values, mesh, face_values)
