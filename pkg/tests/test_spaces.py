import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contrastfem.elements import cell_monomials, face_legendre, map_cell_rule, map_face_rule, quad_cell, quad_face
from contrastfem.mesh import generate_structured, read_mesh, refine_uniform, write_mesh
from contrastfem.spaces import (
    BrokenField,
    PiecewiseFunction,
    build_dofmap,
    cr_face_values,
    hho_reduction,
    interpolate_cr,
    interpolate_lagrange,
    l2_project_cell,
    l2_project_face,
)

from .conftest import random_mesh


def poly(coeffs):
    """Polynomial sum c_ab x^a y^b from a dict {(a, b): c}."""
    def f(p):
        p = np.atleast_2d(p)
        return sum(c * p[:, 0] ** a * p[:, 1] ** b for (a, b), c in coeffs.items())
    return f


def test_counts_from_examples():
    assert build_dofmap(generate_structured(1), "CR", 1).n_dofs == 1
    assert build_dofmap(generate_structured(2), "LAGRANGE", 1).n_dofs == 9
    assert build_dofmap(generate_structured(1), "HHO", 0).n_dofs == 3


@pytest.mark.parametrize("k, n_expected", [(2, 25), (3, 49)])
def test_lagrange_counts_higher_order(k, n_expected):
    # (k n + 1)^2 nodes on the structured n x n grid, n = 2
    assert build_dofmap(generate_structured(2), "LAGRANGE", k).n_dofs == n_expected


def test_broken_and_hho_counts():
    m = generate_structured(2)
    assert build_dofmap(m, "BROKEN", 2).n_dofs == 8 * 6
    hho = build_dofmap(m, "HHO", 1)
    assert hho.n_dofs == 8 * 3 + 2 * len(m.faces.interior)
    assert np.all(hho.face_dofs[m.faces.boundary] == -1)


def test_cr_boundary_faces_absent():
    m = generate_structured(3)
    dm = build_dofmap(m, "CR", 1)
    fs = m.faces
    assert dm.n_dofs == len(fs.interior)
    assert np.all((dm.cell_dofs < 0) == fs.is_boundary[fs.cell_faces])


@pytest.mark.parametrize("method, k", [("CR", 2), ("LAGRANGE", 4), ("HHO", 3), ("BROKEN", 0), ("RT", 1)])
def test_unsupported_combinations(method, k):
    with pytest.raises(ValueError):
        build_dofmap(generate_structured(1), method, k)


def test_dofmaps_stable_under_roundtrip(tmp_path):
    m = generate_structured(3)
    write_mesh(m, tmp_path / "m.txt")
    m2 = read_mesh(tmp_path / "m.txt")
    for method, k in [("CR", 1), ("LAGRANGE", 3), ("HHO", 2)]:
        a, b = build_dofmap(m, method, k), build_dofmap(m2, method, k)
        assert np.array_equal(a.cell_dofs, b.cell_dofs) and a.n_dofs == b.n_dofs


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lagrange_is_h1_conforming(k):
    rng = np.random.default_rng(k)
    m = random_mesh(rng, 3, interface=False)
    dm = build_dofmap(m, "LAGRANGE", k)
    from contrastfem.spaces import DiscreteSolution

    v = DiscreteSolution(dm, rng.standard_normal(dm.n_dofs), m).to_broken()
    fs = m.faces
    for F in fs.interior:
        pts, _ = map_face_rule(m.face_points(F), quad_face(2 * k))
        assert np.allclose(v.value(fs.left[F], pts), v.value(fs.right[F], pts), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lagrange_interpolation_reproduces_pk(k):
    u = poly({(0, 0): 0.3, (1, 0): -1.2, (0, 1): 0.7, (k, 0): 0.9, (1, k - 1): -0.4})
    m = random_mesh(np.random.default_rng(0), 2, interface=False)
    v = interpolate_lagrange(u, m, k).to_broken()
    for K in range(m.n_cells):
        pts, _ = map_cell_rule(m.cell_points(K), quad_cell(4))
        assert np.allclose(v.value(K, pts), u(pts), atol=1e-12)


def test_cr_reproduces_affine():
    u = poly({(0, 0): 0.5, (1, 0): 2.0, (0, 1): -3.0})
    m = random_mesh(np.random.default_rng(1), 3, interface=False)
    v = interpolate_cr(u, m, keep_boundary=True).to_broken()
    for K in range(m.n_cells):
        pts, _ = map_cell_rule(m.cell_points(K), quad_cell(2))
        assert np.allclose(v.value(K, pts), u(pts), atol=1e-13)


def test_cr_dof_of_x_squared_is_one_third():
    m = generate_structured(1)
    avg = cr_face_values(lambda p: p[:, 0] ** 2, m)
    fv = m.vertices[m.faces.vertices]
    F = [i for i in range(m.faces.n_faces) if np.allclose(sorted(fv[i, :, 0]), [0, 1]) and np.allclose(fv[i, :, 1], 0)]
    assert len(F) == 1
    assert avg[F[0]] == pytest.approx(1 / 3, abs=1e-15)


def test_cr_homogeneous_interpolant():
    u = lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    m = generate_structured(3)
    sol = interpolate_cr(u, m)
    assert sol.face_values is None and len(sol.values) == len(m.faces.interior)
    assert np.allclose(cr_face_values(u, m)[m.faces.boundary], 0, atol=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_cell_projection_identity_and_orthogonality(k):
    m = random_mesh(np.random.default_rng(2), 2)
    p = poly({(0, 0): 1.0, (k, 0): -2.0, (0, k): 0.5} if k else {(0, 0): 1.0})
    u = lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1])
    for K in (0, 5):
        c = l2_project_cell(p, m, K, k)
        pts, w = map_cell_rule(m.cell_points(K), quad_cell(12))
        B = cell_monomials(m, K, k)
        assert np.allclose(B.values(pts) @ c, p(pts), atol=1e-12)
        r = u(pts) - B.values(pts) @ l2_project_cell(u, m, K, k)
        assert np.abs(B.values(pts).T @ (w * r)).max() <= 1e-12


def test_cell_projection_matches_least_squares_oracle():
    # reference cell, u = x^3, k = 1: minimise ||u - (a + b x + c y)|| with plain monomials
    from contrastfem.mesh import Mesh

    m = Mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]), np.array([1]))
    u = lambda x: x[:, 0] ** 3
    pts, w = map_cell_rule(m.cell_points(0), quad_cell(14))
    A = np.sqrt(w)[:, None] * np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
    coef, res, *_ = np.linalg.lstsq(A, np.sqrt(w) * u(pts), rcond=None)
    c = l2_project_cell(u, m, 0, 1)
    mine = cell_monomials(m, 0, 1).values(pts) @ c
    resid = np.sqrt(w @ (u(pts) - mine) ** 2)
    assert resid == pytest.approx(np.sqrt(res[0]), rel=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_face_projection(k):
    m = generate_structured(2)
    F = m.faces.interior[0]
    seg = m.face_points(F)
    # a polynomial of degree k along the face is reproduced
    t_of = lambda p: np.linalg.norm(p - seg[0], axis=1) / np.linalg.norm(seg[1] - seg[0])
    coeffs = np.arange(1.0, k + 2)
    u = lambda p: face_legendre(t_of(p), k) @ coeffs
    assert np.allclose(l2_project_face(u, m, F, k), coeffs, atol=1e-13)


def test_hho_reduction_of_polynomial():
    k = 2
    p = poly({(0, 0): 0.2, (1, 1): 1.5, (0, 2): -0.7})
    m = generate_structured(2)
    sol = hho_reduction(p, m, k)
    fs = m.faces
    for K in range(m.n_cells):
        pts, _ = map_cell_rule(m.cell_points(K), quad_cell(6))
        cK = sol.values[sol.dofmap.cell_dofs[K]]
        assert np.allclose(cell_monomials(m, K, k).values(pts) @ cK, p(pts), atol=1e-12)
    for F in range(fs.n_faces):
        rule = quad_face(6)
        pts, _ = map_face_rule(m.face_points(F), rule)
        coeff = sol.values[sol.dofmap.face_dofs[F]] if fs.right[F] >= 0 else sol.face_values[F]
        assert np.allclose(face_legendre(rule.points, k) @ coeff, p(pts), atol=1e-12)


def test_hho_reduction_zero_on_boundary():
    u = lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    sol = hho_reduction(u, generate_structured(2), 1)
    assert np.abs(sol.face_values).max() <= 1e-15


def test_hho_reduction_rejects_discontinuous_trace():
    m = generate_structured(2, 0.5)
    u = PiecewiseFunction({1: lambda p: 0 * p[:, 0], 2: lambda p: 1 + 0 * p[:, 0]})
    with pytest.raises(ValueError, match="discontinuous"):
        hho_reduction(u, m, 0)
    cont = PiecewiseFunction({1: lambda p: p[:, 0], 2: lambda p: 0.5 + 3 * (p[:, 0] - 0.5)})
    hho_reduction(cont, m, 1)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 3))
def test_broken_field_scaling(k):
    m = refine_uniform(generate_structured(1))
    v = BrokenField.random(m, max(k, 0), np.random.default_rng(k))
    pts = m.centroids[:1]
    assert np.allclose((v * 3.0).value(0, pts), 3.0 * v.value(0, pts))
