"""Reference bases and quadrature on triangles and segments.

Cell polynomials are written in scaled monomials centred at the cell
centroid, ``((x - xc) / h)^a ((y - yc) / h)^b`` with ``a + b <= k``, listed by
increasing total degree so the first ``dim P_j`` entries span ``P_j``.  Face
polynomials are Legendre polynomials in the face parameter ``t in [0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

MAX_CELL_ORDER = 30
MAX_FACE_ORDER = 40

FAMILIES = ("lagrange", "crouzeix_raviart", "cell_poly", "face_poly")
_SUPPORTED = {
    "lagrange": (1, 2, 3),
    "crouzeix_raviart": (1,),
    "cell_poly": (0, 1, 2, 3, 4),
    "face_poly": (0, 1, 2, 3),
}


def dim_poly(k: int) -> int:
    """Dimension of P_k in two variables."""
    return (k + 1) * (k + 2) // 2


@dataclass(frozen=True)
class BasisSpec:
    family: str
    degree: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.degree not in _SUPPORTED[self.family]:
            raise ValueError(
                f"{self.family} does not support degree {self.degree}; "
                f"supported: {_SUPPORTED[self.family]}"
            )

    @property
    def dim(self) -> int:
        if self.family == "face_poly":
            return self.degree + 1
        if self.family == "crouzeix_raviart":
            return 3
        return dim_poly(self.degree)


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # reference coordinates, (n, 2) on the triangle, (n,) on [0, 1]
    weights: np.ndarray
    degree: int


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def quad_face(order: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1], exact for polynomials of degree ``order``."""
    if order > MAX_FACE_ORDER:
        raise ValueError(f"segment quadrature order {order} exceeds maximum {MAX_FACE_ORDER}")
    n = max(1, (order + 2) // 2)
    x, w = legendre.leggauss(n)
    rule = QuadRule(0.5 * (x + 1.0), 0.5 * w, 2 * n - 1)
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


@lru_cache(maxsize=None)
def quad_cell(order: int) -> QuadRule:
    """Rule on the reference triangle (0,0), (1,0), (0,1); weights sum to 1/2.

    Order <= 1 is the centroid rule.  Higher orders use a collapsed
    Gauss-Legendre x Gauss-Jacobi(1, 0) product, whose weights are positive
    and whose points lie strictly inside the triangle.
    """
    if order > MAX_CELL_ORDER:
        raise ValueError(f"triangle quadrature order {order} exceeds maximum {MAX_CELL_ORDER}")
    if order <= 1:
        pts, wts, deg = np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1
    else:
        n = (order + 2) // 2
        xs, ws = legendre.leggauss(n)
        s, w_s = 0.5 * (xs + 1.0), 0.5 * ws
        xt, wt = roots_jacobi(n, 1.0, 0.0)
        t, w_t = 0.5 * (xt + 1.0), wt / 4.0
        S, Tt = np.meshgrid(s, t, indexing="ij")
        pts = np.column_stack([(S * (1.0 - Tt)).ravel(), Tt.ravel()])
        wts = np.outer(w_s, w_t).ravel()
        deg = 2 * n - 1
    rule = QuadRule(pts, wts, deg)
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


def map_cell_rule(tri: np.ndarray, rule: QuadRule) -> tuple[np.ndarray, np.ndarray]:
    """Physical points and weights of ``rule`` on the triangle with vertices ``tri``."""
    J = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return tri[0] + rule.points @ J.T, rule.weights * abs(det)


def map_face_rule(seg: np.ndarray, rule: QuadRule) -> tuple[np.ndarray, np.ndarray]:
    """Physical points and weights of ``rule`` on the segment ``seg[0] -> seg[1]``."""
    L = float(np.hypot(*(seg[1] - seg[0])))
    return seg[0] + np.outer(rule.points, seg[1] - seg[0]), rule.weights * L


# ---------------------------------------------------------------------------
# scaled monomials


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> np.ndarray:
    exps = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    out = np.array(exps, dtype=np.int64).reshape(-1, 2)
    out.setflags(write=False)
    return out


def _powers(z: np.ndarray, k: int) -> np.ndarray:
    out = np.ones((k + 1,) + z.shape)
    for j in range(1, k + 1):
        out[j] = out[j - 1] * z
    return out


class Monomials:
    """Scaled monomial basis of P_k attached to a centre and a length scale."""

    def __init__(self, k: int, center, h: float):
        self.k = k
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.exps = monomial_exponents(k)

    @property
    def dim(self) -> int:
        return len(self.exps)

    def _local(self, pts):
        z = (np.atleast_2d(pts) - self.center) / self.h
        return _powers(z[:, 0], self.k), _powers(z[:, 1], self.k)

    def values(self, pts) -> np.ndarray:
        """(n_points, dim)"""
        px, py = self._local(pts)
        a, b = self.exps.T
        return (px[a] * py[b]).T

    def grads(self, pts) -> np.ndarray:
        """(n_points, dim, 2)"""
        px, py = self._local(pts)
        a, b = self.exps.T
        am1 = np.maximum(a - 1, 0)
        bm1 = np.maximum(b - 1, 0)
        gx = (a[:, None] * px[am1] * py[b]).T / self.h
        gy = (b[:, None] * px[a] * py[bm1]).T / self.h
        return np.stack([gx, gy], axis=-1)

    def hessians(self, pts) -> np.ndarray:
        """(n_points, dim, 2, 2)"""
        px, py = self._local(pts)
        a, b = self.exps.T
        am1, am2 = np.maximum(a - 1, 0), np.maximum(a - 2, 0)
        bm1, bm2 = np.maximum(b - 1, 0), np.maximum(b - 2, 0)
        h2 = self.h**2
        hxx = ((a * (a - 1))[:, None] * px[am2] * py[b]).T / h2
        hxy = ((a * b)[:, None] * px[am1] * py[bm1]).T / h2
        hyy = ((b * (b - 1))[:, None] * px[a] * py[bm2]).T / h2
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def laplacians(self, pts) -> np.ndarray:
        H = self.hessians(pts)
        return H[..., 0, 0] + H[..., 1, 1]


def cell_monomials(mesh, K: int, k: int) -> Monomials:
    return Monomials(k, mesh.centroids[K], mesh.diameters[K])


def face_legendre(t: np.ndarray, k: int) -> np.ndarray:
    """Legendre polynomials P_0..P_k of ``2t - 1``; shape (len(t), k + 1)."""
    return legendre.legvander(2.0 * np.asarray(t, dtype=float) - 1.0, k)


def face_legendre_norms(k: int, length: float) -> np.ndarray:
    """Squared L2(F) norms of the face Legendre basis on a face of given length."""
    return length / (2.0 * np.arange(k + 1) + 1.0)


# ---------------------------------------------------------------------------
# nodal families


def lagrange_lattice(k: int) -> np.ndarray:
    """Barycentric lattice of P_k nodes: vertices, edge nodes, interior nodes.

    Edge ``j`` (opposite vertex ``j``) runs from vertex ``j+1`` to ``j+2``.
    """
    nodes = [np.eye(3)[i] for i in range(3)]
    for j in range(3):
        a, b = (j + 1) % 3, (j + 2) % 3
        for s in range(1, k):
            lam = np.zeros(3)
            lam[a], lam[b] = 1 - s / k, s / k
            nodes.append(lam)
    for i in range(1, k):
        for j in range(1, k - i):
            nodes.append(np.array([i, j, k - i - j]) / k)
    return np.array(nodes)


def nodal_coefficients(basis: Monomials, nodes: np.ndarray) -> np.ndarray:
    """Columns are the nodal shape functions expressed in ``basis``."""
    V = basis.values(nodes)
    return np.linalg.inv(V)


_REF_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@lru_cache(maxsize=None)
def _reference_tables(family: str, k: int):
    if family == "cell_poly":
        return Monomials(k, _REF_TRI.mean(axis=0), np.sqrt(2.0)), None
    if family == "lagrange":
        nodes = lagrange_lattice(k) @ _REF_TRI
        basis = Monomials(k, _REF_TRI.mean(axis=0), np.sqrt(2.0))
        return basis, nodal_coefficients(basis, nodes)
    if family == "crouzeix_raviart":
        nodes = 0.5 * (_REF_TRI[[1, 2, 0]] + _REF_TRI[[2, 0, 1]])
        basis = Monomials(1, _REF_TRI.mean(axis=0), np.sqrt(2.0))
        return basis, nodal_coefficients(basis, nodes)
    raise ValueError(family)


def eval_basis(spec: BasisSpec, x) -> dict[str, np.ndarray]:
    """Values, gradients (and Hessians on cells) of every shape function at
    reference points ``x``.

    Cell families live on the reference triangle (0,0), (1,0), (0,1); the
    face family on [0, 1].  Shapes are ``(n_points, dim[, 2[, 2]])``.
    """
    if spec.family == "face_poly":
        t = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(t < -1e-14) or np.any(t > 1 + 1e-14):
            raise ValueError("face point outside [0, 1]")
        k = spec.degree
        vals = face_legendre(t, k)
        if k == 0:
            ders = np.zeros((len(t), 1))
        else:
            D = legendre.legder(np.eye(k + 1), axis=0)  # (k, k + 1)
            ders = 2.0 * face_legendre(t, k - 1) @ D
        return {"values": vals, "grads": ders}
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(pts < -1e-14) or np.any(pts.sum(axis=1) > 1 + 1e-14):
        raise ValueError("point outside the reference triangle")
    basis, C = _reference_tables(spec.family, spec.degree)
    vals, grads, hess = basis.values(pts), basis.grads(pts), basis.hessians(pts)
    if C is not None:
        vals = vals @ C
        grads = np.einsum("pmi,mn->pni", grads, C)
        hess = np.einsum("pmij,mn->pnij", hess, C)
    return {"values": vals, "grads": grads, "hessians": hess}


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)


__all__ = [
    "BasisSpec",
    "QuadRule",
    "Monomials",
    "quad_cell",
    "quad_face",
    "eval_basis",
    "dim_poly",
]
