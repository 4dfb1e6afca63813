import numpy as np
import pytest

from bfdarcy.mesh import B, D
from bfdarcy.problems import CENTRES, example1, example2, example3, get_problem, inflow

H = 1e-4


def fd_grad(f, X, h=H):
    """Central differences; returns ``(..., *value_shape, 2)``."""
    cols = []
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        cols.append((f(X + e) - f(X - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_lap(f, X, h=1e-3):
    out = -4.0 * f(X)
    for e in ([h, 0], [-h, 0], [0, h], [0, -h]):
        out = out + f(X + np.array(e))
    return out / h ** 2


def sample(pb, n, rng):
    """Random points inside the triangles of each subdomain, kept away from
    the vortex centres where finite differences lose accuracy."""
    m = pb.initial_mesh()
    out = {}
    for sd in (B, D):
        tris = rng.choice(np.flatnonzero(m.domain == sd), size=4 * n)
        lam = rng.dirichlet(np.ones(3), size=4 * n)
        X = np.einsum("ni,nid->nd", lam, m.points[m.triangles[tris]])
        far = np.min([np.hypot(*(X - c).T) for c in CENTRES], axis=0) > 0.1
        out[sd] = X[far][:n]
    return out


@pytest.mark.parametrize("make", [example1, example2])
def test_exact_derivatives(make, rng):
    pb = make()
    ex = pb.exact
    X = np.concatenate(list(sample(pb, 40, rng).values()))
    np.testing.assert_allclose(ex.grad_u_B(X), fd_grad(ex.u_B, X), rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(ex.lap_u_B(X), fd_lap(ex.u_B, X), rtol=1e-3, atol=5e-4)
    np.testing.assert_allclose(ex.grad_p(X), fd_grad(ex.p, X), atol=1e-6)
    div = np.trace(fd_grad(ex.u_D, X), axis1=-2, axis2=-1)
    np.testing.assert_allclose(ex.div_u_D(X), div, atol=1e-6)


@pytest.mark.parametrize("make", [example1, example2])
def test_velocity_B_divergence_free(make, rng):
    ex = make().exact
    X = sample(make(), 40, rng)[B]
    g = fd_grad(ex.u_B, X)
    assert np.abs(np.trace(g, axis1=-2, axis2=-1)).max() < 1e-5 * np.abs(g).max()


@pytest.mark.parametrize("make", [example1, example2])
def test_sources_satisfy_the_equations(make, rng):
    pb = make()
    ex, c = pb.exact, pb.coefficients
    pts = sample(pb, 40, rng)
    X = pts[B]
    u = ex.u_B(X)
    r = np.linalg.norm(u, axis=-1)
    rhs = (u @ c.K_B_inv.T + c.forchheimer * r[:, None] ** (c.rho - 2) * u
           + fd_grad(ex.p, X) - c.mu * fd_lap(ex.u_B, X))
    np.testing.assert_allclose(c.f_B(X), rhs, rtol=1e-3, atol=5e-4)
    X = pts[D]
    np.testing.assert_allclose(c.f_D(X), ex.u_D(X) @ c.K_D_inv.T + fd_grad(ex.p, X), atol=1e-6)
    div = np.trace(fd_grad(ex.u_D, X), axis1=-2, axis2=-1)
    np.testing.assert_allclose(c.g_D(X), div, atol=1e-6)


@pytest.mark.parametrize("make", [example1, example2])
def test_rot_of_darcy_source(make, rng):
    pb = make()
    X = sample(pb, 40, rng)[D]
    g = fd_grad(pb.coefficients.f_D, X)
    rot = g[:, 1, 0] - g[:, 0, 1]
    np.testing.assert_allclose(pb.rot_f_D(X), rot, atol=1e-5)


def test_example1_interface_data():
    pb = example1()
    ex, c = pb.exact, pb.coefficients
    X = np.column_stack([np.linspace(0.01, 0.99, 25), np.ones(25)])
    n = pb.sigma_normal
    jump = ex.u_B(X) @ n - ex.u_D(X) @ n
    np.testing.assert_allclose(c.m_sigma(X), jump, atol=1e-14)
    # sigma_B n + lambda n with sigma_B = mu grad u - p I and lambda = p
    sig_n = c.mu * np.einsum("ncd,d->nc", ex.grad_u_B(X), n)
    np.testing.assert_allclose(c.t_sigma(X), sig_n, atol=1e-14)


def test_example3_inflow_and_sources():
    pb = example3()
    y, w = np.polynomial.legendre.leggauss(6)
    y, w = 0.5 * (y + 1), 0.5 * w
    X = np.column_stack([np.zeros_like(y), y])
    assert np.sum(w * inflow(X)[:, 0]) == pytest.approx(5.0 / 3.0, rel=1e-14)
    assert np.all(inflow(X + [1.0, 0.0]) == 0)
    c = pb.coefficients
    assert c.f_B is None and c.f_D is None and c.g_D is None
    assert pb.exact is None


def test_unknown_problem():
    with pytest.raises(ValueError, match="unknown problem"):
        get_problem("example9")
    assert get_problem("example2", rho=3.0).coefficients.rho == 3.0
