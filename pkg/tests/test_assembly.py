import numpy as np
import pytest

from bfdarcy.assembly import (AssembledSystem, ProblemCoefficients, apply_a, assemble_b, assemble_rhs,
                              forchheimer_tensor, jacobian_a, residual_functionals)
from bfdarcy.mesh import B, D, refine
from bfdarcy.nlsolve import solve
from bfdarcy.problems import example1, example3
from bfdarcy.quadrature import triangle_rule
from bfdarcy.spaces import PRESSURE, BoundaryConditions, CoupledSolution, DofLayout

import oracle
from conftest import diamond, single_triangle, small_coupled


def coeffs(rho=3.5, F=10.0):
    return ProblemCoefficients(0.7, F, rho, [[1.0, 0.3], [0.3, 2.0]], [[0.5, 0.0], [0.0, 0.25]])


def velocity_part(system, x):
    """``a(x)`` as a vector over the velocity dofs."""
    L = system.layout
    xx = np.zeros(system.n)
    xx[: L.off_p] = x[: L.off_p]
    nl, _ = system.forchheimer(xx, derivative=False)
    return (system.linear @ xx + nl)[: L.off_p]


def test_a_of_zero_is_zero():
    s = AssembledSystem(DofLayout(small_coupled()), coeffs())
    assert np.all(velocity_part(s, np.zeros(s.n)) == 0)


def test_single_triangle_constant_field_oracle():
    mesh = single_triangle(B)
    L = DofLayout(mesh)
    s = AssembledSystem(L, ProblemCoefficients(1.0, 10.0, 3.0, 1.0, 1.0))
    u = np.zeros(L.n_total)
    u[L.off_ux: L.off_uy] = 1.0  # u_B = (1, 0)
    for k in range(3):
        v = np.zeros(L.n_total)
        v[L.off_ux + k] = 1.0
        lam = lambda X, k=k: np.column_stack([1 - X.sum(axis=1), X])[:, L.vertex_index_B.tolist().index(k)]
        # (K^-1 u + F|u|u) . v = 11 * lambda_k; grad u = 0
        ref = oracle.tri_integral(mesh.points, lambda X: 11.0 * lam(X), degree=10)
        assert apply_a(s, u, v) == pytest.approx(ref, abs=1e-10)
        assert ref == pytest.approx(11.0 / 6.0)


def test_forchheimer_derivative_closed_form():
    u = np.array([1.0, 0.0])
    _, J = forchheimer_tensor(u, 1.0, 4.0)
    np.testing.assert_allclose(J @ [0.0, 1.0], [0.0, 1.0])
    np.testing.assert_allclose(J @ [1.0, 0.0], [3.0, 0.0])
    val, J0 = forchheimer_tensor(np.zeros(2), 10.0, 3.0)
    assert np.all(val == 0) and np.all(J0 == 0)


def test_forchheimer_guard_at_zero_velocity():
    s = AssembledSystem(DofLayout(small_coupled()), coeffs(rho=3.0))
    _, J = s.forchheimer(np.zeros(s.n))
    assert J.nnz == 0 or abs(J).max() == 0


def h1_l2_norms(system, x):
    L = system.layout
    sol = CoupledSolution(L, x[: L.n_total])
    bary, w = triangle_rule(4)
    u, g = sol.u_B(bary)
    aB = system.layout.mesh.areas[L.tris_B]
    h1 = np.sum((np.einsum("nqc,nqc->nq", u, u) + np.einsum("nqcd,nqcd->nq", g, g)) @ w * aB)
    ud, _ = sol.u_D(bary)
    aD = system.layout.mesh.areas[L.tris_D]
    l2 = np.sum(np.einsum("nqc,nqc->nq", ud, ud) @ w * aD)
    return h1, l2


@pytest.mark.parametrize("rho", [3.0, 3.5, 4.0])
def test_strong_monotonicity(rho):
    s = AssembledSystem(DofLayout(refine(small_coupled(), [0, 7])), coeffs(rho=rho))
    c = s.coeffs
    cB = min(c.mu, np.linalg.eigvalsh(c.K_B_inv).min())
    cD = np.linalg.eigvalsh(c.K_D_inv).min()
    rng = np.random.default_rng(int(rho * 10))
    nv = s.layout.off_p
    worst = np.inf
    for _ in range(100):
        x = np.zeros(s.n)
        y = np.zeros(s.n)
        scale = 10.0 ** rng.uniform(-2, 1)
        x[:nv] = scale * rng.normal(size=nv)
        y[:nv] = scale * rng.normal(size=nv)
        lhs = (velocity_part(s, x) - velocity_part(s, y)) @ (x - y)[:nv]
        h1, l2 = h1_l2_norms(s, x - y)
        bound = cB * h1 + cD * l2
        assert lhs >= bound * (1 - 1e-12)
        worst = min(worst, lhs / bound)
    assert worst >= 1.0


def test_jacobian_finite_differences():
    s = AssembledSystem(DofLayout(refine(small_coupled(), [2])), coeffs(rho=3.5))
    rng = np.random.default_rng(42)
    nv = s.layout.off_p
    for _ in range(20):
        u = np.zeros(s.n)
        v = np.zeros(s.n)
        u[:nv] = rng.normal(size=nv)
        v[:nv] = rng.normal(size=nv)
        J = jacobian_a(s, u)
        Jv = J @ v[:nv]
        a0 = velocity_part(s, u)
        errs = []
        for eps in (1e-4, 1e-5, 1e-6):
            fd = (velocity_part(s, u + eps * v) - a0) / eps
            errs.append(np.linalg.norm(fd - Jv))
        scale = np.linalg.norm(Jv)
        # first order in eps: each decade reduces the error about tenfold
        assert errs[0] <= 1e-2 * scale
        assert 5.0 < errs[0] / errs[1] < 20.0
        assert errs[2] <= 2.0 * errs[0] * 1e-2 + 1e-8 * scale


def test_jacobian_of_linear_problem_is_linear_block():
    s = AssembledSystem(DofLayout(small_coupled()), coeffs(F=0.0))
    J = jacobian_a(s, np.random.default_rng(0).normal(size=s.n))
    nv = s.layout.off_p
    assert abs(J - s.linear[:nv][:, :nv]).max() == 0


def test_linear_blocks_symmetric():
    for mesh in (small_coupled(), diamond()):
        s = AssembledSystem(DofLayout(mesh), coeffs(), pressure_penalty=0.0)
        A = s.linear
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()


def test_b_of_constants_vanishes():
    """b(v)(1, 1) = 0 for every v vanishing on the outer boundary."""
    s = AssembledSystem(DofLayout(refine(small_coupled(), [1, 9])), coeffs())
    L = s.layout
    Bm = assemble_b(s)
    ones = np.ones(Bm.shape[0])
    row = ones @ Bm
    fr = ~L.constrained[: L.off_p]
    assert np.max(np.abs(row[fr])) < 1e-13
    # pressure rows alone do not vanish: the interface fluxes are needed
    prow = np.zeros(Bm.shape[0])
    prow[: L.mesh.n_triangles] = 1.0
    assert np.max(np.abs((prow @ Bm)[fr])) > 1e-3


def test_b_lambda_rows_touch_only_interface():
    s = AssembledSystem(DofLayout(small_coupled()), coeffs())
    L, m = s.layout, s.layout.mesh
    Bl = assemble_b(s)[L.off_lam - L.off_p:].tocsc()
    cols = np.unique(Bl.nonzero()[1])
    sig_tris_B = m.edge_tris[L.sigma_edges, 0]
    sig_edges = set(L.sigma_edges.tolist())
    allowed = set(L.cell_dofs_B[np.searchsorted(L.tris_B, sig_tris_B)].ravel().tolist())
    allowed |= {L.off_uD + L.edge_index_D[e] for e in sig_edges}
    assert set(cols.tolist()) <= allowed


def test_b_single_sigma_edge_oracle():
    mesh = diamond()
    L = DofLayout(mesh)
    s = AssembledSystem(L, coeffs())
    Bm = assemble_b(s).toarray()
    e = L.sigma_edges[0]
    col = L.off_uD + L.edge_index_D[e]
    a, b = mesh.points[mesh.edges[e]]
    ends = mesh.points[L.lambda_vertices]
    for k in range(2):
        other = ends[1 - k]
        hat = lambda X: np.linalg.norm(X - other, axis=1) / np.linalg.norm(ends[1] - ends[0])
        # RT0 normal trace of the edge's own shape function is 1/h_e
        ref = -oracle.edge_integral(a, b, hat) / mesh.h_e[e]
        assert Bm[L.off_lam - L.off_p + k, col] == pytest.approx(ref, abs=1e-14)


def test_zero_data_zero_loads():
    s = AssembledSystem(DofLayout(small_coupled()), coeffs())
    fv, fq = assemble_rhs(s)
    assert np.all(fv == 0) and np.all(fq == 0)


def test_constant_g_load():
    c = coeffs()
    c.g_D = lambda X: np.ones(X.shape[:-1])
    L = DofLayout(single_triangle(D), BoundaryConditions(kinds_D={"boundary": PRESSURE}))
    s = AssembledSystem(L, c)
    assert s.rhs[L.off_p] == pytest.approx(-0.5)


def test_threads_match_serial():
    pb = example1()
    L = DofLayout(pb.initial_mesh(8), pb.bc)
    s1 = AssembledSystem(L, pb.coefficients)
    s4 = AssembledSystem(L, pb.coefficients, threads=4)
    x = np.random.default_rng(3).normal(size=s1.n)
    K1, r1 = s1.jacobian(x)
    K4, r4 = s4.jacobian(x)
    assert abs(K1 - K4).max() <= 1e-13 * abs(K1).max()
    assert np.max(np.abs(r1 - r4)) <= 1e-13 * np.max(np.abs(r1))


def solved(pb, n=4):
    s = AssembledSystem(DofLayout(pb.initial_mesh(n), pb.bc), pb.coefficients)
    x, rep = solve(s)
    return s, x, rep


def test_galerkin_orthogonality_after_solve():
    for pb, n in ((example1(), 4), (example3(), 3)):
        s, x, _ = solved(pb, n)
        R = residual_functionals(s, x)
        scale = np.abs(s.rhs).max() + np.abs(s.linear @ x).max()
        assert np.abs(R).max() <= 1e-8 * scale


def test_residual_sanity_and_linearity():
    pb = example1()
    s, x, _ = solved(pb, 2)
    R0 = residual_functionals(s, np.zeros(s.n))
    np.testing.assert_allclose(R0, -s.rhs[s.free])
    assert np.abs(R0).max() > 0
    k = s.free[len(s.free) // 2]  # a pressure / velocity dof in the middle
    growth = []
    for d in (1e-3, 2e-3):
        y = x.copy()
        y[k] += d
        growth.append(np.linalg.norm(residual_functionals(s, y)))
    assert growth[1] / growth[0] == pytest.approx(2.0, rel=1e-2)


def test_darcy_mass_conservation():
    s, x, _ = solved(example1(), 4)
    sol = s.solution(x)
    L, m = s.layout, s.layout.mesh
    _, div = sol.u_D(np.array([[1 / 3, 1 / 3, 1 / 3]]))
    bary, w = triangle_rule(8)
    P = m.points[m.triangles[L.tris_D]]
    X = np.einsum("qi,nid->nqd", bary, P)
    mean_g = s.coeffs.g_D(X) @ w
    np.testing.assert_allclose(div, mean_g, atol=1e-9)


def test_example3_global_mass_balance():
    """Flux through the interface equals inflow minus the outflow on the right."""
    s, x, _ = solved(example3(), 3)
    sol = s.solution(x)
    L, m = s.layout, s.layout.mesh
    g, w = np.polynomial.legendre.leggauss(5)
    t, w = 0.5 * (g + 1), 0.5 * w
    from bfdarcy.spaces import edge_bary

    def flux_B(edges):
        tb = m.edge_tris[edges, 0]
        u, _ = sol.u_B(edge_bary(m, tb, edges, t), which=np.searchsorted(L.tris_B, tb))
        return np.sum((np.einsum("nqc,nc->nq", u, m.normals[edges]) @ w) * m.h_e[edges])

    tags = m.edge_tags
    inflow = -flux_B(np.array([e for e in L.dirichlet_edges_B if tags[e] == "left"]))
    outflow = flux_B(L.traction_edges_B)
    sigma = flux_B(L.sigma_edges)
    assert inflow == pytest.approx(5.0 / 3.0, rel=1e-12)
    assert sigma == pytest.approx(inflow - outflow, abs=1e-6)
