"""Model problems: geometry, coefficients, boundary data and exact solutions.

Sources are hand-derived closed forms; the test-suite checks them against
finite differences of the exact fields.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import ProblemCoefficients
from .mesh import StackedRectangles, build_grid, build_structured
from .spaces import DIRICHLET, FLUX, PRESSURE, TRACTION, BoundaryConditions

PI = np.pi


@dataclass
class ExactSolution:
    """Closed-form fields; all callables take ``(..., 2)`` points.

    ``grad_u_B`` returns ``(..., 2, 2)`` with ``[c, d] = d u_c / d x_d``.
    ``grad_p`` is used for the tangential derivative of the multiplier.
    """

    u_B: Callable
    grad_u_B: Callable
    lap_u_B: Callable
    u_D: Callable
    div_u_D: Callable
    p: Callable
    grad_p: Callable

    def lam(self, X):
        return self.p(X)

    def dlam_dt(self, X, t):
        return np.einsum("...d,...d->...", self.grad_p(X), np.broadcast_to(t, np.shape(X)))


@dataclass
class ProblemDefinition:
    name: str
    coefficients: ProblemCoefficients
    bc: BoundaryConditions
    make_mesh: Callable
    exact: Optional[ExactSolution] = None
    sigma_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0]))
    rot_f_D: Optional[Callable] = None
    description: str = ""

    def initial_mesh(self, n=None):
        return self.make_mesh() if n is None else self.make_mesh(n)


def _xy(X):
    X = np.asarray(X, dtype=float)
    return X[..., 0], X[..., 1]


def _stack(a, b):
    return np.stack(np.broadcast_arrays(a, b), axis=-1)


def _mat(a11, a12, a21, a22):
    a11, a12, a21, a22 = np.broadcast_arrays(a11, a12, a21, a22)
    return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)


def forchheimer_value(u, F, rho):
    r = np.sqrt(np.einsum("...c,...c->...", u, u))
    return F * (r ** (rho - 2.0))[..., None] * u


def manufactured_coefficients(exact, mu, F, rho, K_B, K_D, normal):
    """Sources and interface jump data that make ``exact`` solve the problem."""
    coeffs = ProblemCoefficients(mu, F, rho, K_B, K_D)
    KBi, KDi = coeffs.K_B_inv, coeffs.K_D_inv
    n = np.asarray(normal, dtype=float)

    def f_B(X):
        u = exact.u_B(X)
        return (np.einsum("cd,...d->...c", KBi, u) + forchheimer_value(u, F, rho)
                + exact.grad_p(X) - mu * exact.lap_u_B(X))

    def f_D(X):
        return np.einsum("cd,...d->...c", KDi, exact.u_D(X)) + exact.grad_p(X)

    def t_sigma(X):
        # sigma_B n + lambda n with lambda = p_D on the interface
        return mu * np.einsum("...cd,d->...c", exact.grad_u_B(X), n)

    def m_sigma(X):
        return np.einsum("...c,c->...", exact.u_B(X) - exact.u_D(X), n)

    coeffs.f_B, coeffs.f_D, coeffs.g_D = f_B, f_D, exact.div_u_D
    coeffs.t_sigma, coeffs.m_sigma = t_sigma, m_sigma
    return coeffs


# ---------------------------------------------------------------------------
# smooth solution on two unit squares

def _ex1_exact():
    def u_B(X):
        x, y = _xy(X)
        return _stack(-np.sin(PI * x) * np.cos(PI * y), np.cos(PI * x) * np.sin(PI * y))

    def grad_u_B(X):
        x, y = _xy(X)
        return PI * _mat(-np.cos(PI * x) * np.cos(PI * y), np.sin(PI * x) * np.sin(PI * y),
                         -np.sin(PI * x) * np.sin(PI * y), np.cos(PI * x) * np.cos(PI * y))

    def lap_u_B(X):
        return -2.0 * PI ** 2 * u_B(X)

    def u_D(X):
        x, y = _xy(X)
        return _stack(np.sin(PI * x) * np.exp(y), np.exp(x) * np.sin(PI * y))

    def div_u_D(X):
        x, y = _xy(X)
        return PI * np.cos(PI * x) * np.exp(y) + PI * np.exp(x) * np.cos(PI * y)

    def p(X):
        x, y = _xy(X)
        return x * np.cos(PI * y)

    def grad_p(X):
        x, y = _xy(X)
        return _stack(np.cos(PI * y), -PI * x * np.sin(PI * y))

    return ExactSolution(u_B, grad_u_B, lap_u_B, u_D, div_u_D, p, grad_p)


EX1_LAYOUT = StackedRectangles(0.0, 1.0, 0.0, 1.0, 2.0, b_above=True)


def example1(rho=3.0):
    """Smooth manufactured solution on ``(0,1) x (1,2)`` over ``(0,1)^2``."""
    exact = _ex1_exact()
    mu, F = 1.0, 10.0
    normal = np.array([0.0, -1.0])
    coeffs = manufactured_coefficients(exact, mu, F, rho, 1.0, 0.5, normal)
    bc = BoundaryConditions(velocity_B=exact.u_B, velocity_D=exact.u_D)

    def rot_f_D(X):
        # curl of K_D^-1 u_D + grad p = 2 u_D for K_D = I/2
        x, y = _xy(X)
        return 2.0 * (np.exp(x) * np.sin(PI * y) - np.sin(PI * x) * np.exp(y))

    def make_mesh(n=4):
        return build_structured(EX1_LAYOUT, n, n, n)

    return ProblemDefinition("example1", coeffs, bc, make_mesh, exact, normal, rot_f_D,
                             "smooth solution, uniform refinement study")


# ---------------------------------------------------------------------------
# helmet-shaped domain with two near-corner vortices

CENTRES = ((-0.74, 0.26), (0.74, 0.26))


def _ex2_exact():
    def parts(X):
        x, y = _xy(X)
        for cx, cy in CENTRES:
            dx, dy = x - cx, y - cy
            yield dx, dy, np.sqrt(dx * dx + dy * dy)

    def u_B(X):
        ux = uy = 0.0
        for dx, dy, r in parts(X):
            ux = ux + dy / r
            uy = uy - dx / r
        return _stack(ux, uy)

    def grad_u_B(X):
        g = 0.0
        for dx, dy, r in parts(X):
            r3 = r ** 3
            g = g + _mat(-dx * dy / r3, dx * dx / r3, -dy * dy / r3, dx * dy / r3)
        return g

    def lap_u_B(X):
        lx = ly = 0.0
        for dx, dy, r in parts(X):
            lx = lx - dy / r ** 3
            ly = ly + dx / r ** 3
        return _stack(lx, ly)

    def u_D(X):
        x, y = _xy(X)
        return _stack(np.sin(PI * x) * y, x * np.sin(PI * y))

    def div_u_D(X):
        x, y = _xy(X)
        return PI * np.cos(PI * x) * y + PI * x * np.cos(PI * y)

    def p(X):
        x, y = _xy(X)
        return np.sin(PI * x) * y

    def grad_p(X):
        x, y = _xy(X)
        return _stack(PI * np.cos(PI * x) * y, np.sin(PI * x))

    return ExactSolution(u_B, grad_u_B, lap_u_B, u_D, div_u_D, p, grad_p)


def helmet_mesh(n=8):
    """Helmet domain on a grid of spacing ``1/n`` with mirrored diagonals."""
    if n % 4:
        raise ValueError("helmet grid needs n divisible by 4")
    xs = np.linspace(-1.0, 1.0, 2 * n + 1)
    ys = np.linspace(-0.5, 1.25, 7 * n // 4 + 1)

    def classify(xc, yc):
        if yc < 0.0:
            return "D"
        if yc < 0.25 or abs(xc) > 0.75:
            return "B"
        return None

    def tagger(m, sd):
        x, y = m
        if sd == "D":
            return "bottom" if abs(y + 0.5) < 1e-12 else ("left" if x < 0 else "right")
        if abs(abs(x) - 1.0) < 1e-12:
            return "left" if x < 0 else "right"
        if abs(y - 1.25) < 1e-12:
            return "top"
        return "inner"

    return build_grid(xs, ys, classify, tagger, diagonal="mirror")


def example2(rho=3.5):
    exact = _ex2_exact()
    mu, F = 1.0, 10.0
    normal = np.array([0.0, -1.0])
    coeffs = manufactured_coefficients(exact, mu, F, rho, 1.0, 0.1, normal)
    bc = BoundaryConditions(velocity_B=exact.u_B, velocity_D=exact.u_D)

    def rot_f_D(X):
        # curl(10 u_D) = 10 (sin(pi y) - sin(pi x))
        x, y = _xy(X)
        return 10.0 * (np.sin(PI * y) - np.sin(PI * x))

    return ProblemDefinition("example2", coeffs, bc, helmet_mesh, exact, normal, rot_f_D,
                             "helmet domain, steep gradients near the inner corners")


# ---------------------------------------------------------------------------
# channel over a low-permeability layer, mixed boundary conditions

EX3_LAYOUT = StackedRectangles(0.0, 2.0, -1.0, 0.0, 1.0, b_above=True)


def inflow(X):
    x, y = _xy(X)
    left = np.abs(x) < 1e-12
    return _stack(np.where(left, -10.0 * y * (y - 1.0), 0.0), 0.0 * y)


def example3(rho=4.0):
    coeffs = ProblemCoefficients(1.0, 1e4, rho, 0.1, 1e-3)
    bc = BoundaryConditions(
        kinds_B={"left": DIRICHLET, "top": DIRICHLET, "right": TRACTION},
        kinds_D={"left": FLUX, "right": FLUX, "bottom": PRESSURE},
        velocity_B=inflow,
    )

    def make_mesh(n=6):
        return build_structured(EX3_LAYOUT, 2 * n, n, n)

    return ProblemDefinition("example3", coeffs, bc, make_mesh, None, np.array([0.0, -1.0]),
                             lambda X: np.zeros(np.shape(X)[:-1]),
                             "heterogeneous medium, no exact solution")


PROBLEMS = {"example1": example1, "example2": example2, "example3": example3}


def get_problem(name, rho=None):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory() if rho is None else factory(rho=rho)
