"""Conforming triangulations of the unit square with subdomain tags.

Cells are stored counterclockwise.  Local face ``j`` of a cell is the edge
opposite its vertex ``j``.  For every face the stored vertex pair follows the
counterclockwise order of its left cell ``K_l``, so the normal obtained by
rotating the edge vector clockwise points out of ``K_l`` (and into ``K_r``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised when a mesh violates one of its structural invariants."""


@dataclass(frozen=True)
class FaceSet:
    """Oriented face topology of a triangulation.

    ``right[F] == -1`` marks a boundary face.  ``cell_faces[K, j]`` is the face
    opposite local vertex ``j`` and ``cell_signs[K, j]`` is ``n_F . n_K``.
    """

    vertices: np.ndarray  # (E, 2) vertex indices, ccw order of the left cell
    left: np.ndarray  # (E,)
    right: np.ndarray  # (E,), -1 on the boundary
    normal: np.ndarray  # (E, 2) unit normal, from left to right / outward
    length: np.ndarray  # (E,) h_F
    cell_faces: np.ndarray  # (T, 3)
    cell_signs: np.ndarray  # (T, 3), +1 / -1

    @property
    def n_faces(self) -> int:
        return len(self.left)

    @property
    def is_boundary(self) -> np.ndarray:
        return self.right < 0

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.right >= 0)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.right < 0)


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh with one subdomain tag per cell.

    Construction validates orientation and conformity; instances are treated
    as immutable afterwards.
    """

    vertices: np.ndarray
    cells: np.ndarray
    subdomain: np.ndarray
    interface_x: float | None = field(default=None, compare=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        subdomain = np.ascontiguousarray(self.subdomain, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (N, 2) array")
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise MeshError("cells must be a (T, 3) array")
        if subdomain.shape != (len(cells),):
            raise MeshError("one subdomain tag per cell is required")
        if cells.min(initial=0) < 0 or cells.max(initial=0) >= len(vertices):
            raise MeshError("cell vertex index out of range")
        if np.any(subdomain < 1):
            raise MeshError("subdomain tags start at 1")
        for name, arr in (("vertices", vertices), ("cells", cells), ("subdomain", subdomain)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        area = self.signed_areas
        if np.any(area <= 0.0):
            bad = int(np.flatnonzero(area <= 0.0)[0])
            raise MeshError(f"cell {bad} is degenerate or clockwise (signed area {area[bad]:.3e})")
        if self.interface_x is not None:
            xs = vertices[cells, 0]
            side1 = subdomain == 1
            tol = 1e-12
            if np.any(xs[side1].max(axis=1) > self.interface_x + tol) or np.any(
                xs[~side1].min(axis=1) < self.interface_x - tol
            ):
                raise MeshError("a cell straddles the subdomain interface")
        # force topology construction so nonconforming input fails early
        self.faces

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_K, the longest edge of each cell."""
        p = self.vertices[self.cells]
        edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        return np.linalg.norm(edges, axis=2).max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def faces(self) -> FaceSet:
        return build_face_topology(self)

    def cell_points(self, K: int) -> np.ndarray:
        return self.vertices[self.cells[K]]

    def face_points(self, F: int) -> np.ndarray:
        return self.vertices[self.faces.vertices[F]]


def generate_structured(n: int, interface_x: float | None = None) -> Mesh:
    """Uniform ``n x n`` grid of the unit square, each square cut along its
    lower-left to upper-right diagonal.

    With ``interface_x`` the cells left of the vertical line get tag 1 and
    those right of it tag 2; the line must be an interior grid line.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if interface_x is not None:
        j = round(interface_x * n)
        if abs(interface_x * n - j) > 1e-12 or not 0 < j < n:
            raise MeshError(
                f"interface_x={interface_x} is not an interior grid line of the {n}x{n} grid "
                f"(must equal j/{n} with 0 < j < {n})"
            )
        interface_x = j / n
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    p00 = (i + (n + 1) * j).ravel()
    p10 = p00 + 1
    p01 = p00 + n + 1
    p11 = p01 + 1
    lower = np.column_stack([p00, p10, p11])
    upper = np.column_stack([p00, p11, p01])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    tags = np.ones(len(cells), dtype=np.int64)
    if interface_x is not None:
        cx = vertices[cells, 0].mean(axis=1)
        tags[cx > interface_x] = 2
    return Mesh(vertices, cells, tags, interface_x=interface_x)


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle is split into four by its edge midpoints."""
    fs = m.faces
    mid = m.vertices[fs.vertices].mean(axis=1)
    vertices = np.vstack([m.vertices, mid])
    nv = m.n_vertices
    v0, v1, v2 = m.cells.T
    m0, m1, m2 = (nv + fs.cell_faces[:, j] for j in range(3))
    children = np.stack(
        [
            np.column_stack([v0, m2, m1]),
            np.column_stack([m2, v1, m0]),
            np.column_stack([m1, m0, v2]),
            np.column_stack([m0, m1, m2]),
        ],
        axis=1,
    ).reshape(-1, 3)
    tags = np.repeat(m.subdomain, 4)
    return Mesh(vertices, children, tags, interface_x=m.interface_x)


def build_face_topology(m: Mesh) -> FaceSet:
    """Enumerate edges, classify them, and orient their normals."""
    cells = m.cells
    T = len(cells)
    # local face j is opposite vertex j: (v_{j+1}, v_{j+2}) in ccw order
    a = cells[:, [1, 2, 0]].ravel()
    b = cells[:, [2, 0, 1]].ravel()
    key = np.minimum(a, b) * m.n_vertices + np.maximum(a, b)
    uniq, first, inverse, counts = np.unique(key, return_index=True, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("an edge is shared by more than two cells")
    E = len(uniq)
    # np.unique's first index is the smallest half-edge index, i.e. the
    # lowest-numbered cell: that cell is K_l
    left = first // 3
    fverts = np.column_stack([a[first], b[first]])
    right = np.full(E, -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    second = order[1:][inv_sorted[1:] == inv_sorted[:-1]]
    right[inverse[second]] = second // 3
    # the two half-edges of an interior face must run in opposite directions
    if np.any(a[second] != fverts[inverse[second], 1]):
        raise MeshError("inconsistent orientation between neighbouring cells")
    d = m.vertices[fverts[:, 1]] - m.vertices[fverts[:, 0]]
    length = np.linalg.norm(d, axis=1)
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    cell_faces = inverse.reshape(T, 3)
    cell_signs = np.where(left[cell_faces] == np.arange(T)[:, None], 1, -1)

    bnd = np.flatnonzero(right < 0)
    _check_hanging_nodes(m.vertices, fverts[bnd])
    for arr in (fverts, left, right, normal, length, cell_faces, cell_signs):
        arr.setflags(write=False)
    return FaceSet(fverts, left, right, normal, length, cell_faces, cell_signs)


def _check_hanging_nodes(vertices: np.ndarray, edges: np.ndarray) -> None:
    p = vertices[edges[:, 0]]
    d = vertices[edges[:, 1]] - p
    L2 = np.einsum("ij,ij->i", d, d)
    # project every vertex on every boundary-classified edge, in chunks
    for start in range(0, len(edges), 256):
        sl = slice(start, start + 256)
        r = vertices[None, :, :] - p[sl, None, :]
        t = np.einsum("evk,ek->ev", r, d[sl]) / L2[sl, None]
        cross = r[..., 0] * d[sl, None, 1] - r[..., 1] * d[sl, None, 0]
        dist = np.abs(cross) / np.sqrt(L2[sl, None])
        hit = (t > 1e-12) & (t < 1 - 1e-12) & (dist < 1e-12 * np.sqrt(L2[sl, None]))
        if hit.any():
            e, v = np.argwhere(hit)[0]
            raise MeshError(f"hanging vertex {v} on edge {tuple(edges[start + e])}: mesh is nonconforming")


def shape_regularity(m: Mesh) -> float:
    """max over cells of h_K / rho_K with rho_K the inradius."""
    p = m.vertices[m.cells]
    edges = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
    area = m.signed_areas
    if np.any(area <= 1e-300):
        raise MeshError("degenerate cell")
    rho = area / (0.5 * edges.sum(axis=1))
    return float((edges.max(axis=1) / rho).max())


def euler_defect(m: Mesh) -> int:
    """E - (V + T - 1); zero for a triangulation of a simply connected domain."""
    return m.faces.n_faces - (m.n_vertices + m.n_cells - 1)


def check_mesh(m: Mesh, *, unit_square: bool = True) -> None:
    """Validate invariants beyond those enforced at construction."""
    if euler_defect(m) != 0:
        raise MeshError(f"Euler relation E = V + T - 1 violated (defect {euler_defect(m)})")
    if unit_square:
        if abs(m.areas.sum() - 1.0) > 1e-12:
            raise MeshError(f"cells cover area {m.areas.sum():.15g}, expected 1")
        bnd = m.faces.boundary
        if abs(m.faces.length[bnd].sum() - 4.0) > 1e-12:
            raise MeshError("boundary length differs from the unit-square perimeter")
        if m.vertices.min() < -1e-14 or m.vertices.max() > 1 + 1e-14:
            raise MeshError("vertex outside the unit square")


def write_mesh(m: Mesh, path: str | Path) -> None:
    lines = [f"vertices {m.n_vertices} cells {m.n_cells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in m.vertices]
    lines += [f"{a} {b} {c} {t}" for (a, b, c), t in zip(m.cells, m.subdomain)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    tokens = Path(path).read_text().split("\n")
    header = tokens[0].split()
    if len(header) != 4 or header[0] != "vertices" or header[2] != "cells":
        raise MeshError("expected header 'vertices N cells T'")
    N, T = int(header[1]), int(header[3])
    body = [ln for ln in tokens[1:] if ln.strip()]
    if len(body) != N + T:
        raise MeshError(f"expected {N + T} data lines, found {len(body)}")
    vertices = np.array([[float(s) for s in ln.split()] for ln in body[:N]])
    rows = np.array([[int(s) for s in ln.split()] for ln in body[N:]], dtype=np.int64)
    if vertices.shape != (N, 2) or rows.shape != (T, 4):
        raise MeshError("malformed vertex or cell line")
    m = Mesh(vertices, rows[:, :3], rows[:, 3])
    check_mesh(m)
    return m
