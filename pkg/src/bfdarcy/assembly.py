"""Assembly of the coupled Brinkman-Forchheimer / Darcy saddle-point system.

Unknowns ``x = (u_B, u_D, p, lambda[, s])`` live on the full index range of a
:class:`~bfdarcy.spaces.DofLayout`; constrained (Dirichlet / flux) entries hold
lifted boundary values and are excluded from the rows that are solved.  The
optional trailing unknown ``s`` fixes the pressure constant when the velocity
is prescribed on the whole boundary: it adds the rows

    B u - m s = g,      m^T p - s / gamma = 0

with ``m`` the triangle areas, which enforces ``int p = 0`` whenever the data
are compatible and keeps the matrix sparse.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import SIGMA
from .quadrature import edge_rule, triangle_rule
from .spaces import (CoupledSolution, DofLayout, br_basis, edge_bary, edge_points,
                     interpolate_dirichlet, rt_basis)

EDGE_QUAD = 5
PENALTY = 1e8


def _as_tensor(K):
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        K = K * np.eye(2)
    if K.shape != (2, 2):
        raise ValueError("permeability must be a scalar or a 2x2 matrix")
    if not np.allclose(K, K.T) or np.any(np.linalg.eigvalsh(K) <= 0):
        raise ValueError("permeability must be symmetric positive definite")
    return K


@dataclass
class ProblemCoefficients:
    """Physical parameters and source data.

    Callables take points of shape ``(..., 2)``.  ``t_sigma`` and
    ``m_sigma`` are optional interface data: a prescribed jump
    ``sigma_B n + lambda n`` and ``u_B.n - u_D.n`` respectively (both zero in
    the physical problem, nonzero for some manufactured solutions).
    """

    mu: float
    forchheimer: float
    rho: float
    K_B: object
    K_D: object
    f_B: object = None
    f_D: object = None
    g_D: object = None
    t_sigma: object = None
    m_sigma: object = None
    K_B_inv: np.ndarray = field(init=False)
    K_D_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("viscosity must be positive")
        if self.forchheimer < 0:
            raise ValueError("Forchheimer coefficient must be non-negative")
        if not 3.0 <= self.rho <= 4.0:
            raise ValueError("rho must lie in [3, 4]")
        self.K_B = _as_tensor(self.K_B)
        self.K_D = _as_tensor(self.K_D)
        self.K_B_inv = np.linalg.inv(self.K_B)
        self.K_D_inv = np.linalg.inv(self.K_D)


def _chunks(n, threads, size=4096):
    if threads is None or threads <= 1:
        return [slice(0, n)]
    step = max(1, min(size, -(-n // threads)))
    return [slice(i, min(n, i + step)) for i in range(0, n, step)]


def _map(fn, n, threads):
    parts = _chunks(n, threads)
    if len(parts) == 1:
        return [fn(parts[0])]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, parts))


def forchheimer_tensor(u, F, rho, derivative=True):
    """``F |u|^(rho-2) u`` and its Jacobian ``F(|u|^(rho-2) I + (rho-2)|u|^(rho-4) u u^T)``.

    Near ``u = 0`` the second term is dropped (it is bounded by
    ``|u|^(rho-2)`` anyway).
    """
    r = np.sqrt(np.einsum("...c,...c->...", u, u))
    small = r < 1e-12
    rs = np.where(small, 1.0, r)
    pw = np.where(small, 0.0 if rho > 2 else 1.0, rs ** (rho - 2.0))
    val = F * pw[..., None] * u
    if not derivative:
        return val, None
    c2 = np.where(small, 0.0, (rho - 2.0) * rs ** (rho - 4.0))
    J = F * (pw[..., None, None] * np.eye(2) + c2[..., None, None] * u[..., :, None] * u[..., None, :])
    return val, J


class AssembledSystem:
    """Linear blocks, right-hand side and nonlinear term for one mesh.

    Parameters
    ----------
    layout : DofLayout
    coeffs : ProblemCoefficients
    pressure_penalty : float or None
        ``None`` chooses automatically: a penalty is used exactly when no
        traction or pressure boundary is present.
    threads : int, optional
        Chunked multi-threaded evaluation of the element loops.
    """

    def __init__(self, layout: DofLayout, coeffs: ProblemCoefficients,
                 pressure_penalty=None, threads=None):
        self.layout = layout
        self.coeffs = coeffs
        self.threads = threads
        mesh = layout.mesh
        if pressure_penalty is None:
            needs = len(layout.traction_edges_B) == 0 and len(layout.pressure_edges_D) == 0
            pressure_penalty = PENALTY if needs else 0.0
        self.penalty = float(pressure_penalty)
        self.augmented = self.penalty > 0.0
        self.n = layout.n_total + (1 if self.augmented else 0)
        area = mesh.areas.sum()
        self.gamma = self.penalty / area ** 2 if self.augmented else 0.0

        self._PB = mesh.points[mesh.triangles[layout.tris_B]]
        self._PD = mesh.points[mesh.triangles[layout.tris_D]]
        self._bary8, self._w8 = triangle_rule(8)
        self.linear = self._assemble_linear()
        self.rhs = self._assemble_rhs()
        self.free = layout.free if not self.augmented else np.append(layout.free, layout.n_total)
        self.n_free_velocity = int(np.sum(self.free < layout.off_p))

    # ------------------------------------------------------------------
    def _assemble_linear(self):
        L, c, mesh = self.layout, self.coeffs, self.layout.mesh
        n = self.n
        rows, cols, vals = [], [], []

        def add(local, dr, dc):
            rows.append(np.broadcast_to(dr[:, :, None], local.shape).ravel())
            cols.append(np.broadcast_to(dc[:, None, :], local.shape).ravel())
            vals.append(local.ravel())

        # Brinkman block: mu (grad u, grad v) + (K_B^-1 u, v); p coupling -(q, div v)
        bary4, w4 = triangle_rule(4)
        areaB = mesh.areas[L.tris_B]

        def brinkman(sl):
            V, G = br_basis(self._PB[sl], bary4, L.cell_normals_B[sl])
            a = areaB[sl]
            Ke = c.mu * np.einsum("q,nqicd,nqjcd->nij", w4, G, G)
            Ke += np.einsum("q,nqic,cd,nqjd->nij", w4, V, c.K_B_inv, V)
            div = np.einsum("q,nqicc->ni", w4, G)
            return Ke * a[:, None, None], -div * a[:, None]

        res = _map(brinkman, len(L.tris_B), self.threads)
        Ke = np.concatenate([r[0] for r in res]) if res else np.zeros((0, 9, 9))
        Be = np.concatenate([r[1] for r in res]) if res else np.zeros((0, 9))
        dB = L.cell_dofs_B
        add(Ke, dB, dB)
        prow = (L.off_p + L.tris_B)[:, None]
        add(Be[:, None, :], prow, dB)
        add(Be[:, :, None], dB, prow)

        # Darcy block: (K_D^-1 u, v); -(q, div v)
        bary2, w2 = triangle_rule(2)
        VD, divD = rt_basis(self._PD, bary2, L.cell_signs_D)
        areaD = mesh.areas[L.tris_D]
        Me = np.einsum("q,nqic,cd,nqjd->nij", w2, VD, c.K_D_inv, VD) * areaD[:, None, None]
        dD = L.cell_dofs_D
        add(Me, dD, dD)
        BeD = -divD * areaD[:, None]
        prow = (L.off_p + L.tris_D)[:, None]
        add(BeD[:, None, :], prow, dD)
        add(BeD[:, :, None], dD, prow)

        # interface coupling <v_B.n - v_D.n, xi>
        se = L.sigma_edges
        if len(se):
            s, w = edge_rule(EDGE_QUAD)
            tb, td = mesh.edge_tris[se, 0], mesh.edge_tris[se, 1]
            posB = np.searchsorted(L.tris_B, tb)
            posD = np.searchsorted(L.tris_D, td)
            nrm = mesh.normals[se]
            he = mesh.h_e[se]
            X = edge_points(mesh, se, s)
            W = L.lambda_weights(np.arange(len(se)), X)  # (nS, nq, 2)
            Vb, _ = br_basis(mesh.points[mesh.triangles[tb]], edge_bary(mesh, tb, se, s),
                             L.cell_normals_B[posB])
            vn = np.einsum("nqic,nc->nqi", Vb, nrm)
            Ce = np.einsum("q,nqk,nqi->nki", w, W, vn) * he[:, None, None]
            lrow = L.sigma_lam_dofs
            add(Ce, lrow, dB[posB])
            add(np.transpose(Ce, (0, 2, 1)), dB[posB], lrow)
            Vd, _ = rt_basis(mesh.points[mesh.triangles[td]], edge_bary(mesh, td, se, s),
                             L.cell_signs_D[posD])
            vn = np.einsum("nqic,nc->nqi", Vd, nrm)
            Ce = -np.einsum("q,nqk,nqi->nki", w, W, vn) * he[:, None, None]
            add(Ce, lrow, dD[posD])
            add(np.transpose(Ce, (0, 2, 1)), dD[posD], lrow)

        if self.augmented:
            pr = L.pressure_dofs()[:, None]
            sidx = np.full_like(pr, L.n_total)
            m = mesh.areas[:, None, None]
            add(-m, pr, sidx)
            add(m, sidx, pr)
            add(np.array([[[-1.0 / self.gamma]]]), sidx[:1], sidx[:1])

        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
        A.sum_duplicates()
        return A

    # ------------------------------------------------------------------
    def _assemble_rhs(self):
        L, c, mesh = self.layout, self.coeffs, self.layout.mesh
        bc = L.bc
        b = np.zeros(self.n)
        bary, w = self._bary8, self._w8
        if c.f_B is not None and len(L.tris_B):
            X = np.einsum("qi,nid->nqd", bary, self._PB)
            f = np.asarray(c.f_B(X), dtype=float)
            V, _ = br_basis(self._PB, bary, L.cell_normals_B)
            loc = np.einsum("q,nqc,nqic->ni", w, f, V) * mesh.areas[L.tris_B][:, None]
            np.add.at(b, L.cell_dofs_B, loc)
        if len(L.tris_D):
            X = np.einsum("qi,nid->nqd", bary, self._PD)
            if c.f_D is not None:
                f = np.asarray(c.f_D(X), dtype=float)
                V, _ = rt_basis(self._PD, bary, L.cell_signs_D)
                loc = np.einsum("q,nqc,nqic->ni", w, f, V) * mesh.areas[L.tris_D][:, None]
                np.add.at(b, L.cell_dofs_D, loc)
            if c.g_D is not None:
                g = np.asarray(c.g_D(X), dtype=float)
                b[L.off_p + L.tris_D] -= (g @ w) * mesh.areas[L.tris_D]

        s, we = edge_rule(EDGE_QUAD)
        se = L.sigma_edges
        if len(se) and c.t_sigma is not None:
            tb = mesh.edge_tris[se, 0]
            pos = np.searchsorted(L.tris_B, tb)
            X = edge_points(mesh, se, s)
            t = np.asarray(c.t_sigma(X), dtype=float)
            V, _ = br_basis(mesh.points[mesh.triangles[tb]], edge_bary(mesh, tb, se, s),
                            L.cell_normals_B[pos])
            loc = np.einsum("q,nqc,nqic->ni", we, t, V) * mesh.h_e[se][:, None]
            np.add.at(b, L.cell_dofs_B[pos], loc)
        if len(se) and c.m_sigma is not None:
            X = edge_points(mesh, se, s)
            mj = np.asarray(c.m_sigma(X), dtype=float)
            W = L.lambda_weights(np.arange(len(se)), X)
            loc = np.einsum("q,nq,nqk->nk", we, mj, W) * mesh.h_e[se][:, None]
            np.add.at(b, L.sigma_lam_dofs, loc)
        te = L.traction_edges_B
        if len(te):
            tb = mesh.edge_tris[te, 0]
            pos = np.searchsorted(L.tris_B, tb)
            X = edge_points(mesh, te, s)
            t = np.asarray(bc.traction_B(X), dtype=float)
            V, _ = br_basis(mesh.points[mesh.triangles[tb]], edge_bary(mesh, tb, te, s),
                            L.cell_normals_B[pos])
            loc = np.einsum("q,nqc,nqic->ni", we, t, V) * mesh.h_e[te][:, None]
            np.add.at(b, L.cell_dofs_B[pos], loc)
        pe = L.pressure_edges_D
        if len(pe):
            td = mesh.edge_tris[pe, 0]
            pos = np.searchsorted(L.tris_D, td)
            X = edge_points(mesh, pe, s)
            p0 = np.asarray(bc.pressure_D(X), dtype=float)
            V, _ = rt_basis(mesh.points[mesh.triangles[td]], edge_bary(mesh, td, pe, s),
                            L.cell_signs_D[pos])
            vn = np.einsum("nqic,nc->nqi", V, mesh.normals[pe])
            loc = -np.einsum("q,nq,nqi->ni", we, p0, vn) * mesh.h_e[pe][:, None]
            np.add.at(b, L.cell_dofs_D[pos], loc)
        return b

    # ------------------------------------------------------------------
    def forchheimer(self, x, derivative=True):
        """Nonlinear load vector and (optionally) its Jacobian as a sparse matrix."""
        L, c, mesh = self.layout, self.coeffs, self.layout.mesh
        bary, w = self._bary8, self._w8
        area = mesh.areas[L.tris_B]
        dofs = L.cell_dofs_B
        if c.forchheimer == 0.0 or len(L.tris_B) == 0:
            return np.zeros(self.n), (sp.csr_matrix((self.n, self.n)) if derivative else None)

        def work(sl):
            V, _ = br_basis(self._PB[sl], bary, L.cell_normals_B[sl])
            u = np.einsum("nqic,ni->nqc", V, x[dofs[sl]])
            val, J = forchheimer_tensor(u, c.forchheimer, c.rho, derivative)
            wa = w[None, :] * area[sl][:, None]
            r = np.einsum("nq,nqc,nqic->ni", wa, val, V)
            if not derivative:
                return r, None
            VJ = np.einsum("nqic,nqcd->niqd", V * wa[:, :, None, None], J)
            Vt = V.transpose(0, 2, 1, 3)
            n = len(VJ)
            Ke = VJ.reshape(n, 9, -1) @ Vt.reshape(n, 9, -1).transpose(0, 2, 1)
            return r, Ke

        res = _map(work, len(L.tris_B), self.threads)
        r = np.concatenate([a for a, _ in res])
        vec = np.zeros(self.n)
        np.add.at(vec, dofs, r)
        if not derivative:
            return vec, None
        Ke = np.concatenate([k for _, k in res])
        rows = np.broadcast_to(dofs[:, :, None], Ke.shape).ravel()
        cols = np.broadcast_to(dofs[:, None, :], Ke.shape).ravel()
        J = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(self.n, self.n)).tocsr()
        return vec, J

    def residual(self, x):
        """Full residual ``A x + N(x) - b``; rows of constrained dofs are meaningless."""
        nl, _ = self.forchheimer(x, derivative=False)
        return self.linear @ x + nl - self.rhs

    def jacobian(self, x):
        nl, J = self.forchheimer(x, derivative=True)
        return (self.linear + J).tocsr(), self.linear @ x + nl - self.rhs

    def lift(self):
        """Vector with lifted boundary data on constrained dofs, zero elsewhere."""
        x = np.zeros(self.n)
        x[: self.layout.n_total] = interpolate_dirichlet(self.layout)
        return x

    def solution(self, x):
        return CoupledSolution(self.layout, np.asarray(x)[: self.layout.n_total])


def assemble(layout, coeffs, **kw):
    return AssembledSystem(layout, coeffs, **kw)


# functional views on the blocks -------------------------------------------------

def _velocity_mask(layout):
    m = np.zeros(layout.n_total, dtype=bool)
    m[: layout.off_p] = True
    return m


def apply_a(system, u, v):
    """``a(u)(v)`` for full-length coefficient vectors (only velocity parts used)."""
    L = system.layout
    mask = np.zeros(system.n, dtype=bool)
    mask[: L.off_p] = True
    uu = np.where(mask, _pad(u, system.n), 0.0)
    vv = np.where(mask, _pad(v, system.n), 0.0)
    nl, _ = system.forchheimer(uu, derivative=False)
    return float(vv @ (system.linear @ uu) + vv @ nl)


def jacobian_a(system, u):
    """Matrix of ``Da(u)`` on the velocity block (full index range)."""
    L = system.layout
    uu = np.zeros(system.n)
    uu[: L.off_p] = _pad(u, system.n)[: L.off_p]
    _, J = system.forchheimer(uu, derivative=True)
    K = (system.linear + J).tocsr()
    return K[: L.off_p][:, : L.off_p]


def assemble_b(system):
    """Matrix of ``b(v)(q, xi)``: rows are (p, lambda) dofs, columns velocity dofs."""
    L = system.layout
    return system.linear[L.off_p: L.n_total][:, : L.off_p]


def assemble_rhs(system):
    """Right-hand side split into the velocity part and the (p, lambda) part."""
    L = system.layout
    return system.rhs[: L.off_p].copy(), system.rhs[L.off_p: L.n_total].copy()


def residual_functionals(system, x):
    """Residual of the discrete equations at ``x`` restricted to the solved rows."""
    return system.residual(_pad(x, system.n))[system.free]


def _pad(x, n):
    x = np.asarray(x, dtype=float)
    if len(x) == n:
        return x
    out = np.zeros(n)
    out[: len(x)] = x
    return out
