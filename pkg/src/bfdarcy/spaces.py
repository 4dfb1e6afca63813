"""Finite element spaces and degree-of-freedom bookkeeping.

Velocity in ``Omega_B`` uses the Bernardi-Raugel element (vector P1 plus one
normal bubble per edge), velocity in ``Omega_D`` the lowest-order
Raviart-Thomas element with edge-flux degrees of freedom, pressure is
piecewise constant on all triangles, and the interface multiplier is
continuous piecewise linear on the paired interface partition.

The global coefficient vector is laid out in blocks::

    [ u_B (x at B-vertices | y at B-vertices | bubbles at B-edges) | u_D | p | lambda ]
"""
from dataclasses import dataclass, field

import numpy as np

from .mesh import B, BOUNDARY_B, BOUNDARY_D, D, MeshError, SIGMA
from .quadrature import edge_rule

# boundary condition kinds
DIRICHLET = "dirichlet"   # prescribed u_B
TRACTION = "traction"     # prescribed sigma_B n
FLUX = "flux"             # prescribed u_D . n
PRESSURE = "pressure"     # prescribed p_D


def _zero_vec(x):
    return np.zeros(np.shape(x)[:-1] + (2,))


def _zero_scalar(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass
class BoundaryConditions:
    """Boundary condition kinds per boundary sub-tag, plus data.

    ``kinds_B`` / ``kinds_D`` map a tag to a kind; tags not listed fall back
    to ``DIRICHLET`` on ``Gamma_B`` and ``FLUX`` on ``Gamma_D`` (the standard
    variant).  Data callables take ``(..., 2)`` point arrays.
    """

    kinds_B: dict = field(default_factory=dict)
    kinds_D: dict = field(default_factory=dict)
    velocity_B: object = _zero_vec
    velocity_D: object = _zero_vec
    traction_B: object = _zero_vec
    pressure_D: object = _zero_scalar

    @property
    def variant(self):
        alt = any(k != DIRICHLET for k in self.kinds_B.values()) or \
            any(k != FLUX for k in self.kinds_D.values())
        return "alternative" if alt else "standard"

    def kind_B(self, tag):
        return self.kinds_B.get(tag, DIRICHLET)

    def kind_D(self, tag):
        return self.kinds_D.get(tag, FLUX)


def gradients_barycentric(P):
    """Gradients of the barycentric coordinates; ``P`` has shape (n, 3, 2)."""
    x0, x1, x2 = P[:, 0], P[:, 1], P[:, 2]
    area2 = (x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x2[:, 0] - x0[:, 0]) * (x1[:, 1] - x0[:, 1])
    if np.any(area2 <= 0):
        raise MeshError("degenerate or clockwise triangle")
    G = np.empty((len(P), 3, 2))
    for i in range(3):
        a, b = P[:, (i + 1) % 3], P[:, (i + 2) % 3]
        G[:, i, 0] = (a[:, 1] - b[:, 1]) / area2
        G[:, i, 1] = (b[:, 0] - a[:, 0]) / area2
    return G


def outward_normals(P):
    """Unit outward normals of local edges (edge i opposite vertex i)."""
    N = np.empty((len(P), 3, 2))
    for i in range(3):
        d = P[:, (i + 2) % 3] - P[:, (i + 1) % 3]
        L = np.hypot(d[:, 0], d[:, 1])
        N[:, i, 0] = d[:, 1] / L
        N[:, i, 1] = -d[:, 0] / L
    return N


def br_basis(P, bary, normals=None):
    """Bernardi-Raugel shape functions on a batch of triangles.

    Parameters
    ----------
    P : (n, 3, 2) vertex coordinates (counter-clockwise)
    bary : (nq, 3) barycentric evaluation points, or (n, nq, 3)
    normals : (n, 3, 2) edge normals used by the bubbles; defaults to the
        local outward normals

    Returns
    -------
    values : (n, nq, 9, 2)
    grads : (n, nq, 9, 2, 2) with ``grads[..., c, d] = d phi_c / d x_d``

    Local ordering: x-components at the three vertices, y-components at the
    three vertices, then the bubbles of edges 0, 1, 2.
    """
    P = np.asarray(P, dtype=float)
    n = len(P)
    G = gradients_barycentric(P)
    if normals is None:
        normals = outward_normals(P)
    bary = np.asarray(bary, dtype=float)
    if bary.ndim == 2:
        bary = np.broadcast_to(bary, (n,) + bary.shape)
    nq = bary.shape[1]
    V = np.zeros((n, nq, 9, 2))
    Gr = np.zeros((n, nq, 9, 2, 2))
    for i in range(3):
        V[:, :, i, 0] = bary[:, :, i]
        V[:, :, 3 + i, 1] = bary[:, :, i]
        Gr[:, :, i, 0, :] = G[:, None, i, :]
        Gr[:, :, 3 + i, 1, :] = G[:, None, i, :]
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        bub = bary[:, :, j] * bary[:, :, k]
        gb = bary[:, :, k, None] * G[:, None, j, :] + bary[:, :, j, None] * G[:, None, k, :]
        V[:, :, 6 + i, :] = bub[..., None] * normals[:, None, i, :]
        Gr[:, :, 6 + i, :, :] = normals[:, None, i, :, None] * gb[:, :, None, :]
    return V, Gr


def br_bubble_laplacians(P, normals=None):
    """Constant Laplacians of the three bubbles, shape (n, 3, 2)."""
    G = gradients_barycentric(P)
    if normals is None:
        normals = outward_normals(P)
    L = np.empty((len(P), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        L[:, i, :] = 2.0 * np.einsum("nd,nd->n", G[:, j], G[:, k])[:, None] * normals[:, i]
    return L


def rt_basis(P, bary, signs=None):
    """Lowest-order Raviart-Thomas shape functions (unit outward edge flux).

    Returns values (n, nq, 3, 2) and divergences (n, 3).  ``signs`` flips
    functions whose global edge normal points into the triangle.
    """
    P = np.asarray(P, dtype=float)
    x0, x1, x2 = P[:, 0], P[:, 1], P[:, 2]
    area = 0.5 * ((x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x2[:, 0] - x0[:, 0]) * (x1[:, 1] - x0[:, 1]))
    if np.any(area <= 0):
        raise MeshError("degenerate or clockwise triangle")
    bary = np.asarray(bary, dtype=float)
    if bary.ndim == 2:
        bary = np.broadcast_to(bary, (len(P),) + bary.shape)
    X = np.einsum("nqi,nid->nqd", bary, P)
    if signs is None:
        signs = np.ones((len(P), 3))
    V = (X[:, :, None, :] - P[:, None, :, :]) / (2.0 * area[:, None, None, None])
    V = V * signs[:, None, :, None]
    div = signs / area[:, None]
    return V, div


def eval_basis_B(vertices, point, normals=None):
    """Values and gradients of the 9 BR shape functions at one point."""
    P = np.asarray(vertices, dtype=float)[None]
    lam = barycentric_coords(P[0], np.asarray(point, dtype=float)[None])
    V, G = br_basis(P, lam, None if normals is None else np.asarray(normals)[None])
    return V[0, 0], G[0, 0]


def eval_basis_D(vertices, point):
    """Values and divergences of the 3 RT0 shape functions at one point."""
    P = np.asarray(vertices, dtype=float)[None]
    lam = barycentric_coords(P[0], np.asarray(point, dtype=float)[None])
    V, div = rt_basis(P, lam)
    return V[0, 0], div[0]


def barycentric_coords(P, X):
    """Barycentric coordinates of points ``X`` (m, 2) in triangle ``P`` (3, 2)."""
    T = np.column_stack([P[1] - P[0], P[2] - P[0]])
    if abs(np.linalg.det(T)) < 1e-300:
        raise MeshError("degenerate triangle")
    st = np.linalg.solve(T, (np.asarray(X) - P[0]).T).T
    return np.column_stack([1.0 - st.sum(axis=1), st])


def edge_local_bary(local_edge, s):
    """Barycentric coordinates of ``x(s) = (1-s) v_{i+1} + s v_{i+2}`` on local edge i."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (3,))
    out[..., (local_edge + 1) % 3] = 1.0 - s
    out[..., (local_edge + 2) % 3] = s
    return out


class DofLayout:
    """Global numbering over the BR x RT0 x P0 x Lambda_h blocks.

    ``n_dofs`` counts the unconstrained degrees of freedom; ``n_total``
    additionally includes the Dirichlet/flux-constrained ones that carry
    lifted boundary data.
    """

    def __init__(self, mesh, bc=None):
        self.mesh = mesh
        self.bc = bc if bc is not None else BoundaryConditions()
        m = mesh
        self.tris_B = m.tris_in(B)
        self.tris_D = m.tris_in(D)
        tB, tD = self.tris_B, self.tris_D

        vB = np.unique(m.triangles[tB]) if len(tB) else np.zeros(0, dtype=np.int64)
        eB = np.unique(m.tri_edges[tB]) if len(tB) else np.zeros(0, dtype=np.int64)
        eD = np.unique(m.tri_edges[tD]) if len(tD) else np.zeros(0, dtype=np.int64)
        self.vertices_B, self.edges_B, self.edges_D = vB, eB, eD
        vmap = -np.ones(m.n_vertices, dtype=np.int64)
        vmap[vB] = np.arange(len(vB))
        emapB = -np.ones(len(m.edges), dtype=np.int64)
        emapB[eB] = np.arange(len(eB))
        emapD = -np.ones(len(m.edges), dtype=np.int64)
        emapD[eD] = np.arange(len(eD))
        self.vertex_index_B, self.edge_index_B, self.edge_index_D = vmap, emapB, emapD

        nvB, neB, neD = len(vB), len(eB), len(eD)
        self.off_ux = 0
        self.off_uy = nvB
        self.off_bub = 2 * nvB
        self.off_uD = 2 * nvB + neB
        self.off_p = self.off_uD + neD
        self.off_lam = self.off_p + m.n_triangles

        # interface multiplier on the paired partition
        chain_edges, chain_verts = m.interface_chain()
        if len(chain_edges):
            pairs = m.interface_pairs
            self.lambda_vertices = chain_verts[::2]
        else:
            pairs = []
            self.lambda_vertices = np.zeros(0, dtype=np.int64)
        self.n_lambda = len(self.lambda_vertices)
        self.n_total = self.off_lam + self.n_lambda
        # per Sigma edge: macro-edge end dofs and end coordinates
        sig_edges = chain_edges
        self.sigma_edges = sig_edges
        macro = np.repeat(np.arange(len(pairs)), 2)
        self.sigma_macro = macro
        self.sigma_lam_dofs = np.column_stack([self.off_lam + macro, self.off_lam + macro + 1]) \
            if len(pairs) else np.zeros((0, 2), dtype=np.int64)
        lv = self.lambda_vertices
        self.sigma_macro_ends = np.stack([m.points[lv[macro]], m.points[lv[macro + 1]]], axis=1) \
            if len(pairs) else np.zeros((0, 2, 2))

        # local -> global maps
        T = m.triangles[tB]
        self.cell_dofs_B = np.concatenate([
            self.off_ux + vmap[T], self.off_uy + vmap[T], self.off_bub + emapB[m.tri_edges[tB]]
        ], axis=1) if len(tB) else np.zeros((0, 9), dtype=np.int64)
        self.cell_normals_B = m.normals[m.tri_edges[tB]]  # global normals for the bubbles
        self.cell_dofs_D = self.off_uD + emapD[m.tri_edges[tD]] if len(tD) else np.zeros((0, 3), dtype=np.int64)
        self.cell_signs_D = m.tri_edge_sign[tD]

        # constraints
        constrained = np.zeros(self.n_total, dtype=bool)
        self.dirichlet_edges_B, self.traction_edges_B = [], []
        self.flux_edges_D, self.pressure_edges_D = [], []
        for e in np.flatnonzero(m.edge_kind == BOUNDARY_B):
            if self.bc.kind_B(m.edge_tags[e]) == DIRICHLET:
                self.dirichlet_edges_B.append(e)
            else:
                self.traction_edges_B.append(e)
        for e in np.flatnonzero(m.edge_kind == BOUNDARY_D):
            if self.bc.kind_D(m.edge_tags[e]) == FLUX:
                self.flux_edges_D.append(e)
            else:
                self.pressure_edges_D.append(e)
        for name in ("dirichlet_edges_B", "traction_edges_B", "flux_edges_D", "pressure_edges_D"):
            setattr(self, name, np.array(getattr(self, name), dtype=np.int64))
        de = self.dirichlet_edges_B
        if len(de):
            dv = np.unique(m.edges[de])
            constrained[self.off_ux + vmap[dv]] = True
            constrained[self.off_uy + vmap[dv]] = True
            constrained[self.off_bub + emapB[de]] = True
        if len(self.flux_edges_D):
            constrained[self.off_uD + emapD[self.flux_edges_D]] = True
        self.constrained = constrained
        self.free = np.flatnonzero(~constrained)
        self.n_dofs = len(self.free)

    @property
    def n_velocity(self):
        return self.off_p

    def block_sizes(self):
        return {
            "u_B": self.off_uD,
            "u_D": self.off_p - self.off_uD,
            "p": self.mesh.n_triangles,
            "lambda": self.n_lambda,
        }

    def free_block_sizes(self):
        fr = ~self.constrained
        return {
            "u_B": int(fr[: self.off_uD].sum()),
            "u_D": int(fr[self.off_uD: self.off_p].sum()),
            "p": self.mesh.n_triangles,
            "lambda": self.n_lambda,
        }

    def pressure_dofs(self):
        return np.arange(self.off_p, self.off_lam)

    def lambda_weights(self, edge_pos, X):
        """Hat-function weights (n, nq, 2) of the macro-edge ends at points X."""
        A = self.sigma_macro_ends[edge_pos, 0]
        Bn = self.sigma_macro_ends[edge_pos, 1]
        d = Bn - A
        tau = np.einsum("nqd,nd->nq", X - A[:, None, :], d) / np.einsum("nd,nd->n", d, d)[:, None]
        return np.stack([1.0 - tau, tau], axis=-1)

    def lambda_slope_factor(self, edge_pos):
        """d(lambda)/dt = (lam_end - lam_start) * factor on each Sigma edge."""
        A = self.sigma_macro_ends[edge_pos, 0]
        Bn = self.sigma_macro_ends[edge_pos, 1]
        d = Bn - A
        t = self.mesh.tangents[self.sigma_edges[edge_pos]]
        L2 = np.einsum("nd,nd->n", d, d)
        return np.einsum("nd,nd->n", d, t) / L2


def build_layout(mesh, bc=None):
    return DofLayout(mesh, bc)


def interpolate_dirichlet(layout, velocity_B=None, velocity_D=None, nquad=5):
    """Values of the constrained degrees of freedom from boundary data.

    Vertex values interpolate ``velocity_B``; each Dirichlet edge bubble is
    chosen so that the discrete normal flux through the edge equals
    ``int_e g . n``; Raviart-Thomas flux dofs are ``int_e velocity_D . n``.
    Returns a full-length vector that is zero on unconstrained dofs.
    """
    L, m = layout, layout.mesh
    gB = velocity_B if velocity_B is not None else layout.bc.velocity_B
    gD = velocity_D if velocity_D is not None else layout.bc.velocity_D
    x = np.zeros(L.n_total)
    s, w = edge_rule(nquad)
    de = L.dirichlet_edges_B
    if len(de):
        dv = np.unique(m.edges[de])
        vals = np.asarray(gB(m.points[dv]), dtype=float).reshape(-1, 2)
        x[L.off_ux + L.vertex_index_B[dv]] = vals[:, 0]
        x[L.off_uy + L.vertex_index_B[dv]] = vals[:, 1]
        a, b = m.points[m.edges[de, 0]], m.points[m.edges[de, 1]]
        Xq = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        g = np.asarray(gB(Xq), dtype=float)
        n = m.normals[de]
        he = m.h_e[de]
        exact_flux = he * np.einsum("q,eqd,ed->e", w, g, n)
        ga = np.asarray(gB(a), dtype=float)
        gb = np.asarray(gB(b), dtype=float)
        p1_flux = he * 0.5 * np.einsum("ed,ed->e", ga + gb, n)
        x[L.off_bub + L.edge_index_B[de]] = 6.0 * (exact_flux - p1_flux) / he
    fe = L.flux_edges_D
    if len(fe):
        a, b = m.points[m.edges[fe, 0]], m.points[m.edges[fe, 1]]
        Xq = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        g = np.asarray(gD(Xq), dtype=float)
        x[L.off_uD + L.edge_index_D[fe]] = m.h_e[fe] * np.einsum("q,eqd,ed->e", w, g, m.normals[fe])
    return x


def rt_interpolate(layout, v, nquad=7):
    """Raviart-Thomas interpolant (all D-edge flux dofs) of a vector field."""
    m = layout.mesh
    s, w = edge_rule(nquad)
    e = layout.edges_D
    a, b = m.points[m.edges[e, 0]], m.points[m.edges[e, 1]]
    Xq = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    g = np.asarray(v(Xq), dtype=float)
    out = np.zeros(layout.n_total)
    out[layout.off_uD + layout.edge_index_D[e]] = m.h_e[e] * np.einsum("q,eqd,ed->e", w, g, m.normals[e])
    return out


class CoupledSolution:
    """Coefficient vector over a :class:`DofLayout` with field evaluators."""

    def __init__(self, layout, coeffs=None):
        self.layout = layout
        self.coeffs = np.zeros(layout.n_total) if coeffs is None else np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (layout.n_total,):
            raise ValueError("coefficient vector does not match the layout")

    @property
    def mesh(self):
        return self.layout.mesh

    def _P(self, tris):
        return self.mesh.points[self.mesh.triangles[tris]]

    def u_B(self, bary, which=None):
        """u_B and its gradient at barycentric points of (selected) B triangles.

        ``which`` indexes into ``layout.tris_B``; ``bary`` is (nq, 3) or (n, nq, 3).
        Returns (n, nq, 2) values and (n, nq, 2, 2) gradients.
        """
        L = self.layout
        sel = slice(None) if which is None else which
        tris = L.tris_B[sel]
        V, G = br_basis(self._P(tris), bary, L.cell_normals_B[sel])
        c = self.coeffs[L.cell_dofs_B[sel]]
        return np.einsum("nqkc,nk->nqc", V, c), np.einsum("nqkcd,nk->nqcd", G, c)

    def laplacian_u_B(self, which=None):
        L = self.layout
        sel = slice(None) if which is None else which
        tris = L.tris_B[sel]
        lap = br_bubble_laplacians(self._P(tris), L.cell_normals_B[sel])
        c = self.coeffs[L.cell_dofs_B[sel]][:, 6:]
        return np.einsum("nkc,nk->nc", lap, c)

    def u_D(self, bary, which=None):
        """u_D values (n, nq, 2) and elementwise divergence (n,)."""
        L = self.layout
        sel = slice(None) if which is None else which
        tris = L.tris_D[sel]
        V, div = rt_basis(self._P(tris), bary, L.cell_signs_D[sel])
        c = self.coeffs[L.cell_dofs_D[sel]]
        return np.einsum("nqkc,nk->nqc", V, c), np.einsum("nk,nk->n", div, c)

    @property
    def p(self):
        L = self.layout
        return self.coeffs[L.off_p: L.off_lam]

    @property
    def lam(self):
        L = self.layout
        return self.coeffs[L.off_lam:]

    def lam_on_sigma(self, s):
        """lambda at edge parameters ``s`` on each Sigma edge (chain order).

        Returns values (nS, nq) and the constant tangential derivative (nS,).
        """
        L, m = self.layout, self.mesh
        e = L.sigma_edges
        a, b = m.points[m.edges[e, 0]], m.points[m.edges[e, 1]]
        X = a[:, None, :] + np.asarray(s)[None, :, None] * (b - a)[:, None, :]
        pos = np.arange(len(e))
        W = L.lambda_weights(pos, X)
        c = self.coeffs[L.sigma_lam_dofs]
        vals = np.einsum("nqk,nk->nq", W, c)
        slope = (c[:, 1] - c[:, 0]) * L.lambda_slope_factor(pos)
        return vals, slope


def edge_bary(mesh, tris, edges, s):
    """Barycentric coordinates in triangle ``tris[i]`` of the points
    ``(1-s) a + s b`` on global edge ``edges[i] = (a, b)``.

    Returns an array of shape (n, nq, 3).
    """
    tris = np.asarray(tris, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64)
    s = np.asarray(s, dtype=float)
    T = mesh.triangles[tris]
    a = mesh.edges[edges, 0]
    b = mesh.edges[edges, 1]
    ia = np.argmax(T == a[:, None], axis=1)
    ib = np.argmax(T == b[:, None], axis=1)
    if np.any(T[np.arange(len(T)), ia] != a) or np.any(T[np.arange(len(T)), ib] != b):
        raise MeshError("edge is not an edge of the given triangle")
    out = np.zeros((len(tris), len(s), 3))
    rows = np.arange(len(tris))
    out[rows, :, ia] = 1.0 - s
    out[rows, :, ib] = s
    return out


def edge_points(mesh, edges, s):
    """Physical points (n, nq, 2) at parameters ``s`` along global edges."""
    a = mesh.points[mesh.edges[edges, 0]]
    b = mesh.points[mesh.edges[edges, 1]]
    return a[:, None, :] + np.asarray(s)[None, :, None] * (b - a)[:, None, :]
