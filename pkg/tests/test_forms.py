import numpy as np
import pytest

from contrastfem.coeffs import DiffusionField, face_weights
from contrastfem.elements import map_cell_rule, map_face_rule, quad_cell, quad_face
from contrastfem.forms import (
    MethodConfig,
    assemble,
    assemble_cr,
    default_penalty,
    eval_nsharp_discrete,
    eval_nsharp_exact,
    eval_nsharp_exact_faces,
)
from contrastfem.harness import builtin_problem
from contrastfem.linalg import check_spd, solve_general, solve_spd
from contrastfem.mesh import generate_structured, refine_uniform
from contrastfem.norms import energy_error
from contrastfem.spaces import BrokenField, DiscreteSolution, ExactField, build_dofmap, interpolate_cr, local_nodes

from .conftest import random_mesh
from .oracles import nsharp_bruteforce


def polynomial_problem(k, lam=1.0):
    """u = a global P_k polynomial, f = -lam Laplacian(u)."""
    c = [0.3, -0.8, 1.1, 0.6, -0.4, 0.9, 0.25, -0.35, 0.45, 0.15]
    exps = [(a - b, b) for a in range(k + 1) for b in range(a + 1)]

    def u(p):
        return sum(ci * p[:, 0] ** i * p[:, 1] ** j for ci, (i, j) in zip(c, exps))

    def grad(p):
        gx = sum(ci * i * p[:, 0] ** max(i - 1, 0) * p[:, 1] ** j for ci, (i, j) in zip(c, exps))
        gy = sum(ci * j * p[:, 0] ** i * p[:, 1] ** max(j - 1, 0) for ci, (i, j) in zip(c, exps))
        return np.column_stack([gx + 0 * p[:, 0], gy + 0 * p[:, 0]])

    def lap(p):
        out = 0 * p[:, 0]
        for ci, (i, j) in zip(c, exps):
            if i >= 2:
                out = out + ci * i * (i - 1) * p[:, 0] ** (i - 2) * p[:, 1] ** j
            if j >= 2:
                out = out + ci * j * (j - 1) * p[:, 0] ** i * p[:, 1] ** (j - 2)
        return out

    return u, grad, lap, (lambda p: -lam * lap(p))


def solve(system):
    if system.symmetric:
        x = solve_spd(system.A, system.b)
    else:
        x = solve_general(system.A, system.b)
    return DiscreteSolution(system.dofmap, x, system.mesh, system.face_values).to_broken()


# ---------------------------------------------------------------------------
# Crouzeix-Raviart


def test_cr_zero_data():
    m = generate_structured(3)
    S = assemble_cr(m, DiffusionField({1: 1.0}), None)
    assert np.array_equal(solve_spd(S.A, S.b), np.zeros(S.A.shape[0]))


def test_cr_single_dof():
    S = assemble_cr(generate_structured(1), DiffusionField({1: 1.0}), None)
    assert S.A.shape == (1, 1) and S.A[0, 0] > 0


def test_cr_stiffness_symmetric():
    S = assemble_cr(generate_structured(4, 0.5), DiffusionField({1: 1.0, 2: 1e3}), None)
    assert abs(S.A - S.A.T).max() <= 1e-12 * abs(S.A).max()


@pytest.mark.parametrize("rho", [1.0, 1e6])
def test_cr_patch_matches_interpolant(rho):
    prob = builtin_problem("affine_patch", rho)
    m = generate_structured(4, 0.5)
    uh = solve(assemble_cr(m, prob.lam, prob.f_fn, prob.g_fn))
    ih = interpolate_cr(prob.u_fn, m, keep_boundary=True).to_broken()
    for K in range(m.n_cells):
        pts, _ = map_cell_rule(m.cell_points(K), quad_cell(2))
        assert np.allclose(uh.value(K, pts), ih.value(K, pts), atol=1e-10)


# ---------------------------------------------------------------------------
# Nitsche


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("variant", ["paper", "symmetric"])
def test_nitsche_polynomial_exactness(k, variant):
    u, grad, lap, f = polynomial_problem(k)
    m = random_mesh(np.random.default_rng(k), 3, interface=False)
    lam = DiffusionField({1: 1.0})
    S = assemble(m, lam, f, u, MethodConfig("nitsche", k, nitsche_variant=variant))
    err = energy_error(ExactField(m, u, grad, lap), solve(S), lam)
    assert err <= 1e-10


def test_nitsche_symmetry_by_variant():
    m = generate_structured(3)
    lam = DiffusionField({1: 1.0})
    A_p = assemble(m, lam, None, None, MethodConfig("nitsche", 2)).A
    A_s = assemble(m, lam, None, None, MethodConfig("nitsche", 2, nitsche_variant="symmetric")).A
    assert abs(A_p - A_p.T).max() > 1e-3 * abs(A_p).max()
    assert abs(A_s - A_s.T).max() <= 1e-12 * abs(A_s).max()


@pytest.mark.parametrize("k", [1, 2, 3])
def test_nitsche_default_penalty_coercive(k):
    m = generate_structured(4, 0.5)
    lam = DiffusionField({1: 1.0, 2: 1e4})
    for variant in ("paper", "symmetric"):
        A = assemble(m, lam, None, None, MethodConfig("nitsche", k, nitsche_variant=variant)).A
        check_spd(0.5 * (A + A.T))


@pytest.mark.parametrize("method", ["nitsche", "ipdg"])
def test_nonpositive_penalty_rejected(method):
    with pytest.raises(ValueError):
        MethodConfig(method, 1, penalty=0.0)
    with pytest.raises(ValueError):
        MethodConfig(method, 1, penalty=-1.0)


def test_default_penalties():
    assert default_penalty("nitsche", 1) == 18 and default_penalty("ipdg", 2) == 72
    assert MethodConfig("cr", penalty=0.0).penalty_value == 0.0


# ---------------------------------------------------------------------------
# IPDG


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ipdg_polynomial_exactness(k):
    u, grad, lap, f = polynomial_problem(k, 2.0)
    m = random_mesh(np.random.default_rng(10 + k), 3, interface=False)
    lam = DiffusionField({1: 2.0})
    S = assemble(m, lam, f, u, MethodConfig("ipdg", k))
    assert abs(S.A - S.A.T).max() <= 1e-12 * abs(S.A).max()
    assert energy_error(ExactField(m, u, grad, lap), solve(S), lam) <= 1e-10


@pytest.mark.parametrize("averaging", ["diffusive", "arithmetic"])
def test_ipdg_interface_patch(averaging):
    prob = builtin_problem("affine_patch", 1e6)
    m = generate_structured(4, 0.5)
    S = assemble(m, prob.lam, prob.f_fn, prob.g_fn, MethodConfig("ipdg", 1, averaging=averaging))
    err = energy_error(prob.exact(m), solve(S), prob.lam)
    if averaging == "diffusive":
        assert err <= 1e-8
    else:
        # arithmetic averages are consistent too; only robustness differs
        assert err <= 1e-6


def test_averaging_irrelevant_for_uniform_lambda():
    m = generate_structured(3)
    lam = DiffusionField({1: 4.0})
    a = assemble(m, lam, None, None, MethodConfig("ipdg", 2)).A
    b = assemble(m, lam, None, None, MethodConfig("ipdg", 2, averaging="arithmetic")).A
    assert abs(a - b).max() <= 1e-14 * abs(a).max()


def test_coercivity_monotone_in_penalty():
    m = generate_structured(2, 0.5)
    lam = DiffusionField({1: 1.0, 2: 50.0})
    prev = -np.inf
    for pen in [0.5, 2.0, 8.0, 36.0, 100.0]:
        A = assemble(m, lam, None, None, MethodConfig("ipdg", 1, penalty=pen)).A.toarray()
        low = np.linalg.eigvalsh(A).min()
        assert low >= prev - 1e-12
        prev = low


def _ipdg_form_with_exact(u, wh, lam, pen, order=12):
    """a_h(u, w_h) with u's one-sided traces and fluxes, face by face."""
    m = wh.mesh
    fs = m.faces
    lamK = lam.cell_values(m)
    fw = face_weights(m, lam)
    total = 0.0
    for K in range(m.n_cells):
        pts, w = map_cell_rule(m.cell_points(K), quad_cell(order))
        total += lamK[K] * float(w @ np.einsum("pi,pi->p", u.grad(K, pts), wh.grad(K, pts)))
    for F in range(fs.n_faces):
        pts, w = map_face_rule(m.face_points(F), quad_face(order))
        n = fs.normal[F]
        Kl, Kr = fs.left[F], fs.right[F]
        su = -fw.theta_l[F] * lamK[Kl] * u.grad(Kl, pts) @ n
        sw = -fw.theta_l[F] * lamK[Kl] * wh.grad(Kl, pts) @ n
        ju, jw = u.value(Kl, pts), wh.value(Kl, pts)
        if Kr >= 0:
            su = su - fw.theta_r[F] * lamK[Kr] * u.grad(Kr, pts) @ n
            sw = sw - fw.theta_r[F] * lamK[Kr] * wh.grad(Kr, pts) @ n
            ju, jw = ju - u.value(Kr, pts), jw - wh.value(Kr, pts)
        total += float(w @ (su * jw + ju * sw + pen * fw.lambda_F[F] / fs.length[F] * ju * jw))
    return total


@pytest.mark.parametrize("rho", [1.0, 1e4])
def test_ipdg_consistency_with_exact_solution(rho):
    # l_h(w_h) - a_h(u, w_h) vanishes for the manufactured solution
    prob = builtin_problem("interface", rho)
    m = refine_uniform(generate_structured(2, 0.5))
    cfg = MethodConfig("ipdg", 2)
    S = assemble(m, prob.lam, prob.f_fn, prob.g_fn, cfg)
    rng = np.random.default_rng(4)
    for _ in range(5):
        coeffs = rng.standard_normal(S.dofmap.n_dofs)
        wh = DiscreteSolution(S.dofmap, coeffs, m).to_broken()
        lhs = S.b @ coeffs
        rhs = _ipdg_form_with_exact(prob.exact(m), wh, prob.lam, cfg.penalty_value)
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


# ---------------------------------------------------------------------------
# n_sharp


@pytest.mark.parametrize("k", [1, 2])
def test_nsharp_discrete_matches_bruteforce(k):
    rng = np.random.default_rng(k)
    m = random_mesh(rng, 2)
    lam = DiffusionField({1: 1.0, 2: 37.0})
    v, w = BrokenField.random(m, k, rng), BrokenField.random(m, k, rng)
    ref = nsharp_bruteforce(m, lam.cell_values(m), v, w)
    assert eval_nsharp_discrete(v, w, lam) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def _lagrange_zero_trace(m, k, rng):
    dm = build_dofmap(m, "LAGRANGE", k)
    vals = rng.standard_normal(dm.n_dofs)
    for K in range(m.n_cells):
        nodes = local_nodes(m, dm, K)
        on_bnd = np.any((np.abs(nodes) < 1e-14) | (np.abs(nodes - 1) < 1e-14), axis=1)
        vals[dm.cell_dofs[K][on_bnd]] = 0.0
    return DiscreteSolution(dm, vals, m).to_broken()


def test_nsharp_zero_for_conforming_test_function():
    rng = np.random.default_rng(5)
    m = generate_structured(3)
    lam = DiffusionField({1: 2.0})
    v = BrokenField.random(m, 2, rng)
    w = _lagrange_zero_trace(m, 2, rng)
    assert abs(eval_nsharp_discrete(v, w, lam)) <= 1e-12


def test_nsharp_zero_for_cr_pairs():
    rng = np.random.default_rng(6)
    m = generate_structured(4, 0.5)
    lam = DiffusionField({1: 1.0, 2: 1e3})
    dm = build_dofmap(m, "CR", 1)
    for _ in range(5):
        v = DiscreteSolution(dm, rng.standard_normal(dm.n_dofs), m).to_broken()
        w = DiscreteSolution(dm, rng.standard_normal(dm.n_dofs), m).to_broken()
        scale = 1e3 * np.sqrt(m.faces.n_faces)
        assert abs(eval_nsharp_discrete(v, w, lam)) <= 1e-12 * scale


@pytest.mark.parametrize("rho", [1.0, 1e2, 1e6])
def test_nsharp_volume_and_face_forms_agree(rho):
    prob = builtin_problem("interface", rho)
    rng = np.random.default_rng(7)
    m = generate_structured(4, 0.5)
    u = prob.exact(m)
    for _ in range(5):
        w = BrokenField.random(m, 2, rng)
        vol = eval_nsharp_exact(u, w, prob.lam)
        face = eval_nsharp_exact_faces(u, w, prob.lam)
        assert abs(vol - face) <= 1e-9 * max(1.0, abs(vol))


def test_nsharp_exact_vanishes_for_weak_solution():
    prob = builtin_problem("interface", 1e3)
    rng = np.random.default_rng(8)
    m = generate_structured(4, 0.5)
    w = _lagrange_zero_trace(m, 2, rng)
    val = eval_nsharp_exact(prob.exact(m), w, prob.lam)
    assert abs(val) <= 1e-9 * 1e3


def test_nsharp_exact_single_cell_indicator():
    prob = builtin_problem("interface", 10.0)
    m = generate_structured(2, 0.5)
    K = 5
    coeffs = np.zeros((m.n_cells, 1))
    coeffs[K] = 1.0
    w = BrokenField(m, 0, coeffs)
    pts, wt = map_cell_rule(m.cell_points(K), quad_cell(14))
    f_int = wt @ prob.f_fn.on(m.subdomain[K])(pts)
    assert eval_nsharp_exact(prob.exact(m), w, prob.lam) == pytest.approx(f_int, rel=1e-10)


def test_nsharp_exact_requires_derivatives():
    m = generate_structured(2)
    with pytest.raises(ValueError):
        eval_nsharp_exact(ExactField(m, lambda p: p[:, 0]).value, BrokenField.random(m, 1, np.random.default_rng()), DiffusionField({1: 1.0}))
