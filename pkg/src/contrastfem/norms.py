"""Error norms, seminorms and empirical orders of convergence.

Every function takes a *cellwise field*: any object with a ``mesh``
attribute and ``value(K, pts)``, ``grad(K, pts)`` and (where needed)
``lap(K, pts)`` methods, e.g. :class:`~contrastfem.spaces.BrokenField`,
:class:`~contrastfem.spaces.ExactField` or their
:class:`~contrastfem.spaces.Difference`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .coeffs import DiffusionField, face_weights
from .elements import map_cell_rule, map_face_rule, quad_cell, quad_face
from .spaces import Difference

DEFAULT_P = 4.0
DEFAULT_Q = 2.0
DEFAULT_ORDER = 12


@dataclass
class ErrorReport:
    energy_error: float
    jump_seminorm: float
    boundary_seminorm: float
    augmented_seminorm: float
    h_max: float
    dofs: int
    p: float = DEFAULT_P
    q: float = DEFAULT_Q

    def as_dict(self) -> dict:
        return asdict(self)


def energy_norm(v, lam: DiffusionField, order: int = DEFAULT_ORDER) -> float:
    """||lambda^{1/2} grad_h v||_{L2}."""
    mesh = v.mesh
    lam_K = lam.cell_values(mesh)
    rule = quad_cell(order)
    total = 0.0
    for K in range(mesh.n_cells):
        pts, w = map_cell_rule(mesh.cell_points(K), rule)
        g = v.grad(K, pts)
        total += lam_K[K] * float(w @ np.einsum("pi,pi->p", g, g))
    return math.sqrt(total)


def energy_error(u_exact, u_h, lam: DiffusionField, order: int = DEFAULT_ORDER) -> float:
    return energy_norm(Difference(u_exact, u_h), lam, order)


def _face_sum(v, lam, faces, order):
    mesh = v.mesh
    fs = mesh.faces
    fw = face_weights(mesh, lam)
    rule = quad_face(order)
    total = 0.0
    for F in faces:
        pts, w = map_face_rule(mesh.face_points(F), rule)
        jump = v.value(fs.left[F], pts)
        if fs.right[F] >= 0:
            jump = jump - v.value(fs.right[F], pts)
        total += fw.lambda_F[F] / fs.length[F] * float(w @ (jump * jump))
    return total


def jump_seminorm(v, lam: DiffusionField, order: int = DEFAULT_ORDER) -> float:
    """(sum_F lambda_F / h_F ||[v]||^2_F)^{1/2}; the jump is the trace on boundary faces."""
    return math.sqrt(_face_sum(v, lam, range(v.mesh.faces.n_faces), order))


def boundary_seminorm(v, lam: DiffusionField, order: int = DEFAULT_ORDER) -> float:
    """(sum over boundary F of lambda_{K_l} / h_F ||v||^2_F)^{1/2}."""
    return math.sqrt(_face_sum(v, lam, v.mesh.faces.boundary, order))


def lp_weights(p: float, q: float, d: int = 2) -> tuple[float, float]:
    """Exponents of h_K in front of the gradient L^p and Laplacian L^q terms."""
    return 2 * d * (0.5 - 1.0 / p), 2 * d * ((d + 2) / (2 * d) - 1.0 / q)


def augmented_seminorm(v, lam: DiffusionField, p: float = DEFAULT_P, q: float = DEFAULT_Q,
                       order: int = DEFAULT_ORDER) -> float:
    """|v|_{lambda,p,q}: energy plus h-weighted gradient L^p and Laplacian L^q terms."""
    if not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    if not q > 1:
        raise ValueError(f"q must exceed 1 in two dimensions, got {q}")
    return math.sqrt(_augmented_sq(v, lam, p, q, order))


def _augmented_sq(v, lam, p, q, order):
    mesh = v.mesh
    lam_K = lam.cell_values(mesh)
    hK = mesh.diameters
    ep, eq = lp_weights(p, q)
    rule = quad_cell(order)
    total = 0.0
    for K in range(mesh.n_cells):
        pts, w = map_cell_rule(mesh.cell_points(K), rule)
        g = np.sqrt(np.einsum("pi,pi->p", *(2 * [v.grad(K, pts)])))
        lap = np.abs(v.lap(K, pts))
        l2 = float(w @ g**2)
        lp = float(w @ g**p) ** (2.0 / p)
        lq = float(w @ lap**q) ** (2.0 / q)
        total += lam_K[K] * (l2 + hK[K] ** ep * lp + hK[K] ** eq * lq)
    return total


def eoc(errors, h_values) -> list:
    """log-slopes between consecutive levels; ``"exact"`` where an error vanishes."""
    errors, h_values = list(errors), list(h_values)
    if len(errors) != len(h_values) or len(errors) < 2:
        raise ValueError("need matching error and h sequences of length >= 2")
    if any(b >= a for a, b in zip(h_values, h_values[1:])):
        raise ValueError("h must be strictly decreasing")
    rates = []
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(h_values, h_values[1:])):
        if not (e0 > 0 and e1 > 0):
            rates.append("exact")
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


def error_report(u_exact, u_h, lam: DiffusionField, dofs: int, p: float = DEFAULT_P, q: float = DEFAULT_Q,
                 order: int = DEFAULT_ORDER) -> ErrorReport:
    e = Difference(u_exact, u_h)
    return ErrorReport(
        energy_error=energy_norm(e, lam, order),
        jump_seminorm=jump_seminorm(e, lam, order),
        boundary_seminorm=boundary_seminorm(e, lam, order),
        augmented_seminorm=augmented_seminorm(e, lam, p, q, order),
        h_max=e.mesh.h_max,
        dofs=dofs,
        p=p,
        q=q,
    )
