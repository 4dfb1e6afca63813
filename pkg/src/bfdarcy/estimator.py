"""Residual a posteriori error indicators.

For every triangle the squared contributions are stored separately so they
can be inspected and tested term by term; ``theta_T`` combines the terms of
the triangle's own subdomain and ``theta`` is the global estimator.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import BOUNDARY_B, INTERIOR_B, INTERIOR_D
from .quadrature import edge_rule, triangle_rule
from .spaces import edge_bary, edge_points

log = logging.getLogger(__name__)

EDGE_QUAD = 5
VOLUME_DEGREE = 8

TERMS_B = ("div", "residual_B", "jump_B", "sigma_B", "dirichlet_B", "traction_B")
TERMS_D = ("mass_D", "residual_D", "rot_D", "jump_D", "sigma_tangential", "sigma_pressure",
           "sigma_mass", "flux_D", "pressure_D")


@dataclass
class EstimatorField:
    """Squared indicator contributions per triangle (zero outside their subdomain)."""

    terms: dict
    domain: np.ndarray
    theta_sq_T: np.ndarray = field(init=False)

    def __post_init__(self):
        for k, v in self.terms.items():
            if np.any(v < 0):
                raise ValueError(f"negative squared term {k}")
        self.theta_sq_T = sum(self.terms.values()) if self.terms else np.zeros(len(self.domain))

    @property
    def theta_B_sq(self):
        return sum(self.terms[k] for k in TERMS_B if k in self.terms)

    @property
    def theta_D_sq(self):
        return sum(self.terms[k] for k in TERMS_D if k in self.terms)

    @property
    def theta_T(self):
        return np.sqrt(self.theta_sq_T)

    @property
    def theta(self):
        return global_estimator(self)

    def totals(self):
        """Global squared value of each term."""
        return {k: float(v.sum()) for k, v in self.terms.items()}


def global_estimator(field_):
    return math.sqrt(float(np.sum(field_.theta_sq_T)))


def _rot_fd(f, X, eps=1e-6):
    ex, ey = np.array([eps, 0.0]), np.array([0.0, eps])
    d2dx = (f(X + ex)[..., 1] - f(X - ex)[..., 1]) / (2 * eps)
    d1dy = (f(X + ey)[..., 0] - f(X - ey)[..., 0]) / (2 * eps)
    return d2dx - d1dy


def _tangential_derivative(f, X, t, eps):
    # five-point stencil, exact for quartic data
    fx = [np.asarray(f(X + k * eps * t), dtype=float) for k in (-2, -1, 1, 2)]
    return (fx[0] - 8.0 * fx[1] + 8.0 * fx[2] - fx[3]) / (12.0 * eps[..., 0])


def _edge_integral(vals, w, he):
    # vals (n, nq) squared density -> (n,) integral
    return (vals @ w) * he


def estimate(solution, coeffs, rot_f_D=None):
    """Compute all indicator terms for a discrete solution."""
    L, mesh = solution.layout, solution.mesh
    bc = L.bc
    nT = mesh.n_triangles
    terms = {k: np.zeros(nT) for k in TERMS_B + TERMS_D}
    bary, w = triangle_rule(VOLUME_DEGREE)
    s, we = edge_rule(EDGE_QUAD)
    p = solution.p
    mu = coeffs.mu

    # ---------------- Brinkman-Forchheimer part
    tB = L.tris_B
    if len(tB):
        area = mesh.areas[tB]
        P = mesh.points[mesh.triangles[tB]]
        X = np.einsum("qi,nid->nqd", bary, P)
        u, g = solution.u_B(bary)
        div = np.einsum("nqcc->nq", g)
        terms["div"][tB] = (div ** 2 @ w) * area
        lap = solution.laplacian_u_B()
        r = mu * lap[:, None, :] - np.einsum("cd,nqd->nqc", coeffs.K_B_inv, u)
        if coeffs.forchheimer:
            rr = np.sqrt(np.einsum("nqc,nqc->nq", u, u))
            r = r - coeffs.forchheimer * (rr ** (coeffs.rho - 2.0))[..., None] * u
        if coeffs.f_B is not None:
            r = r + np.asarray(coeffs.f_B(X), dtype=float)
        terms["residual_B"][tB] = mesh.h_T[tB] ** 2 * (np.einsum("nqc,nqc->nq", r, r) @ w) * area

        def stress_n(tris, edges):
            pos = np.searchsorted(tB, tris)
            _, gr = solution.u_B(edge_bary(mesh, tris, edges, s), which=pos)
            n = mesh.normals[edges]
            return mu * np.einsum("nqcd,nd->nqc", gr, n) - p[tris][:, None, None] * n[:, None, :]

        ie = mesh.edges_of_kind(INTERIOR_B)
        if len(ie):
            t1, t2 = mesh.edge_tris[ie, 0], mesh.edge_tris[ie, 1]
            jmp = stress_n(t1, ie) - stress_n(t2, ie)
            val = mesh.h_e[ie] * _edge_integral(np.einsum("nqc,nqc->nq", jmp, jmp), we, mesh.h_e[ie])
            np.add.at(terms["jump_B"], t1, val)
            np.add.at(terms["jump_B"], t2, val)

        se = L.sigma_edges
        if len(se):
            tb = mesh.edge_tris[se, 0]
            lam, _ = solution.lam_on_sigma(s)
            res = stress_n(tb, se) + lam[..., None] * mesh.normals[se][:, None, :]
            if coeffs.t_sigma is not None:
                res = res - np.asarray(coeffs.t_sigma(edge_points(mesh, se, s)), dtype=float)
            val = mesh.h_e[se] * _edge_integral(np.einsum("nqc,nqc->nq", res, res), we, mesh.h_e[se])
            np.add.at(terms["sigma_B"], tb, val)

        de = L.dirichlet_edges_B
        if len(de):
            tb = mesh.edge_tris[de, 0]
            pos = np.searchsorted(tB, tb)
            uh, _ = solution.u_B(edge_bary(mesh, tb, de, s), which=pos)
            diff = uh - np.asarray(bc.velocity_B(edge_points(mesh, de, s)), dtype=float)
            val = _edge_integral(np.einsum("nqc,nqc->nq", diff, diff), we, mesh.h_e[de]) / mesh.h_e[de]
            np.add.at(terms["dirichlet_B"], tb, val)

        te = L.traction_edges_B
        if len(te):
            tb = mesh.edge_tris[te, 0]
            res = stress_n(tb, te) - np.asarray(bc.traction_B(edge_points(mesh, te, s)), dtype=float)
            val = mesh.h_e[te] * _edge_integral(np.einsum("nqc,nqc->nq", res, res), we, mesh.h_e[te])
            np.add.at(terms["traction_B"], tb, val)

    # ---------------- Darcy part
    tD = L.tris_D
    if len(tD):
        area = mesh.areas[tD]
        P = mesh.points[mesh.triangles[tD]]
        X = np.einsum("qi,nid->nqd", bary, P)
        u, divh = solution.u_D(bary)
        gD = np.asarray(coeffs.g_D(X), dtype=float) if coeffs.g_D is not None else np.zeros(X.shape[:2])
        terms["mass_D"][tD] = ((gD - divh[:, None]) ** 2 @ w) * area

        def darcy_res(Xp, up):
            r = -np.einsum("cd,...d->...c", coeffs.K_D_inv, up)
            if coeffs.f_D is not None:
                r = r + np.asarray(coeffs.f_D(Xp), dtype=float)
            return r

        r = darcy_res(X, u)
        terms["residual_D"][tD] = mesh.h_T[tD] ** 2 * (np.einsum("nqc,nqc->nq", r, r) @ w) * area
        # rot(K^-1 u_h) vanishes for constant symmetric K, so only rot f_D remains
        if coeffs.f_D is not None:
            if rot_f_D is not None:
                rot = np.asarray(rot_f_D(X), dtype=float)
            else:
                log.warning("no closed-form rot f_D supplied; using finite differences")
                rot = _rot_fd(coeffs.f_D, X)
            terms["rot_D"][tD] = mesh.h_T[tD] ** 2 * ((rot ** 2) @ w) * area

        def tang_res(tris, edges):
            pos = np.searchsorted(tD, tris)
            Xe = edge_points(mesh, edges, s)
            ue, _ = solution.u_D(edge_bary(mesh, tris, edges, s), which=pos)
            return np.einsum("nqc,nc->nq", darcy_res(Xe, ue), mesh.tangents[edges]), ue

        ie = mesh.edges_of_kind(INTERIOR_D)
        if len(ie):
            t1, t2 = mesh.edge_tris[ie, 0], mesh.edge_tris[ie, 1]
            jmp = tang_res(t1, ie)[0] - tang_res(t2, ie)[0]
            val = mesh.h_e[ie] * _edge_integral(jmp ** 2, we, mesh.h_e[ie])
            np.add.at(terms["jump_D"], t1, val)
            np.add.at(terms["jump_D"], t2, val)

        se = L.sigma_edges
        if len(se):
            tb, td = mesh.edge_tris[se, 0], mesh.edge_tris[se, 1]
            he = mesh.h_e[se]
            lam, slope = solution.lam_on_sigma(s)
            tr, ud = tang_res(td, se)
            val = he * _edge_integral((tr - slope[:, None]) ** 2, we, he)
            np.add.at(terms["sigma_tangential"], td, val)
            val = he * _edge_integral((lam - p[td][:, None]) ** 2, we, he)
            np.add.at(terms["sigma_pressure"], td, val)
            ub, _ = solution.u_B(edge_bary(mesh, tb, se, s), which=np.searchsorted(tB, tb))
            n = mesh.normals[se]
            jump = np.einsum("nqc,nc->nq", ub - ud, n)
            if coeffs.m_sigma is not None:
                jump = jump - np.asarray(coeffs.m_sigma(edge_points(mesh, se, s)), dtype=float)
            val = he * _edge_integral(jump ** 2, we, he)
            np.add.at(terms["sigma_mass"], td, val)

        fe = L.flux_edges_D
        if len(fe):
            td = mesh.edge_tris[fe, 0]
            pos = np.searchsorted(tD, td)
            ue, _ = solution.u_D(edge_bary(mesh, td, fe, s), which=pos)
            Xe = edge_points(mesh, fe, s)
            diff = np.einsum("nqc,nc->nq", ue - np.asarray(bc.velocity_D(Xe), dtype=float), mesh.normals[fe])
            val = mesh.h_e[fe] * _edge_integral(diff ** 2, we, mesh.h_e[fe])
            np.add.at(terms["flux_D"], td, val)

        pe = L.pressure_edges_D
        if len(pe):
            td = mesh.edge_tris[pe, 0]
            tr, _ = tang_res(td, pe)
            Xe = edge_points(mesh, pe, s)
            t = mesh.tangents[pe][:, None, :]
            dp = _tangential_derivative(bc.pressure_D, Xe, t, 1e-3 * mesh.h_e[pe][:, None, None])
            val = mesh.h_e[pe] * _edge_integral((tr - dp) ** 2, we, mesh.h_e[pe])
            np.add.at(terms["pressure_D"], td, val)

    return EstimatorField(terms, mesh.domain.copy())


def local_B(field_, tri):
    """Squared B-indicator of one triangle and its breakdown."""
    parts = {k: float(field_.terms[k][tri]) for k in TERMS_B}
    return sum(parts.values()), parts


def local_D(field_, tri):
    parts = {k: float(field_.terms[k][tri]) for k in TERMS_D}
    return sum(parts.values()), parts
