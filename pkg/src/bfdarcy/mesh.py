"""Two-subdomain conforming triangulations with a matched interface.

A :class:`CoupledMesh` is a single conforming triangulation whose triangles
carry a subdomain tag (``B`` for the Brinkman-Forchheimer region, ``D`` for
the Darcy region).  Edges shared by a ``B`` and a ``D`` triangle form the
interface partition; boundary edges carry a string sub-tag (``"left"``,
``"top"``, ...) that boundary conditions are keyed on.

Refinement is red-green: marked triangles are split into four similar
children, neighbours receive a green bisection, and a green triangle that
needs further refinement is first merged back into its parent, which is then
red-refined.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

B, D = 0, 1
SUBDOMAIN_NAMES = ("B", "D")

# edge classification
INTERIOR_B, INTERIOR_D, SIGMA, BOUNDARY_B, BOUNDARY_D = range(5)
EDGE_KIND_NAMES = ("interior-B", "interior-D", "Sigma", "Gamma_B", "Gamma_D")

MIN_ANGLE_DEG = 15.0


class MeshError(ValueError):
    """Raised for invalid mesh input or a broken mesh invariant."""


def _key(a, b):
    return (a, b) if a < b else (b, a)


class CoupledMesh:
    """Conforming triangulation of ``Omega_B U Sigma U Omega_D``.

    Parameters
    ----------
    points : (N, 2) array
    triangles : (M, 3) int array, counter-clockwise vertex triples
    domain : (M,) int array with values ``B`` (0) or ``D`` (1)
    boundary_tags : dict mapping sorted vertex pairs to a sub-tag string
    green : (M, 4) int array or None
        For triangles produced by a green bisection: parent vertices
        ``(a, b, c)`` with ``(a, b)`` the bisected edge, and the midpoint
        vertex.  ``-1`` rows for all other triangles.
    """

    def __init__(self, points, triangles, domain, boundary_tags=None, green=None):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        self.domain = np.ascontiguousarray(domain, dtype=np.int8).reshape(-1)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise MeshError("points must have shape (N, 2)")
        if len(self.domain) != len(self.triangles):
            raise MeshError("one subdomain tag per triangle is required")
        if green is None:
            green = -np.ones((len(self.triangles), 4), dtype=np.int64)
        self.green = np.asarray(green, dtype=np.int64).reshape(-1, 4)
        self._build_topology(boundary_tags or {})

    # ------------------------------------------------------------------
    def _build_topology(self, boundary_tags):
        p, t = self.points, self.triangles
        x0, x1, x2 = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        self.areas = 0.5 * ((x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1])
                            - (x2[:, 0] - x0[:, 0]) * (x1[:, 1] - x0[:, 1]))
        if np.any(self.areas <= 0.0):
            bad = np.flatnonzero(self.areas <= 0.0)
            raise MeshError(f"non-positive signed area for triangles {bad[:10].tolist()}")

        # local edge i is opposite local vertex i
        loc = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)  # (M,3,2)
        flat = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.edges = edges
        self.tri_edges = inverse.reshape(-1, 3)
        ne = len(edges)
        counts = np.bincount(inverse, minlength=ne)
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two triangles")
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_tris = -np.ones((ne, 2), dtype=np.int64)
        edge_tris[:, 0] = tri_of[start]
        two = counts == 2
        edge_tris[two, 1] = tri_of[start[two] + 1]

        dom = self.domain
        kind = np.empty(ne, dtype=np.int8)
        d0 = dom[edge_tris[:, 0]]
        d1 = np.where(two, dom[np.maximum(edge_tris[:, 1], 0)], -1)
        kind[~two] = np.where(d0[~two] == B, BOUNDARY_B, BOUNDARY_D)
        same = two & (d0 == d1)
        kind[same] = np.where(d0[same] == B, INTERIOR_B, INTERIOR_D)
        sig = two & (d0 != d1)
        kind[sig] = SIGMA
        # on Sigma the first adjacent triangle is the B one
        swap = sig & (d0 == D)
        edge_tris[swap] = edge_tris[swap][:, ::-1]
        self.edge_tris = edge_tris
        self.edge_kind = kind

        a, b = p[edges[:, 0]], p[edges[:, 1]]
        d = b - a
        self.h_e = np.hypot(d[:, 0], d[:, 1])
        n = np.column_stack([d[:, 1], -d[:, 0]]) / self.h_e[:, None]
        # global normal points out of the first adjacent triangle
        c0 = p[t[edge_tris[:, 0]]].mean(axis=1)
        mid = 0.5 * (a + b)
        flip = np.einsum("ij,ij->i", n, mid - c0) < 0.0
        n[flip] *= -1.0
        self.normals = n
        self.tangents = np.column_stack([-n[:, 1], n[:, 0]])
        self.midpoints = mid

        le = self.h_e[self.tri_edges]
        self.h_T = le.max(axis=1)

        # sign of the global edge normal relative to each triangle's outward normal
        self.tri_edge_sign = np.where(edge_tris[self.tri_edges, 0] == np.arange(len(t))[:, None],
                                      1.0, -1.0)

        tags = np.full(ne, "", dtype=object)
        bnd = np.flatnonzero((kind == BOUNDARY_B) | (kind == BOUNDARY_D))
        for e in bnd:
            tags[e] = boundary_tags.get((int(edges[e, 0]), int(edges[e, 1])), "boundary")
        self.edge_tags = tags
        self.boundary_tags = {(int(edges[e, 0]), int(edges[e, 1])): tags[e] for e in bnd}
        self._pairs = None
        self._chain = None

    # ------------------------------------------------------------------
    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def sigma_edges(self):
        return np.flatnonzero(self.edge_kind == SIGMA)

    def tris_in(self, subdomain):
        return np.flatnonzero(self.domain == subdomain)

    def edges_of_kind(self, kind):
        return np.flatnonzero(self.edge_kind == kind)

    def h_max(self, subdomain):
        tr = self.tris_in(subdomain)
        return float(self.h_T[tr].max()) if len(tr) else 0.0

    def subdomain_area(self, subdomain):
        return float(self.areas[self.domain == subdomain].sum())

    def min_angle(self):
        """Smallest interior angle of the mesh, in degrees."""
        if self.n_triangles == 0:
            return 180.0
        P = self.points[self.triangles]
        ang = []
        for i in range(3):
            u = P[:, (i + 1) % 3] - P[:, i]
            v = P[:, (i + 2) % 3] - P[:, i]
            c = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(ang))

    # ------------------------------------------------------------------
    def interface_chain(self):
        """Ordered Sigma edges and vertices along the interface.

        The walk starts at the chain end point with the lexicographically
        smallest coordinates.
        """
        if self._chain is None:
            self._chain = _order_chain(self)
        return self._chain

    @property
    def interface_pairs(self):
        if self._pairs is None:
            self._pairs = pair_interface(self)
        return self._pairs

    @property
    def h_sigma(self):
        """Largest macro-edge length of the paired interface partition."""
        pairs = self.interface_pairs
        if not pairs:
            return 0.0
        return float(max(self.h_e[a] + self.h_e[b] for a, b in pairs))

    def check_invariants(self):
        """Return a list of human-readable invariant violations (empty if valid)."""
        problems = []
        if np.any(self.areas <= 0):
            problems.append("non-positive triangle area")
        # conformity: every vertex used by a triangle must not lie inside another edge
        problems.extend(_hanging_nodes(self))
        sig = self.sigma_edges
        et = self.edge_tris[sig]
        if len(sig) and (np.any(self.domain[et[:, 0]] != B) or np.any(self.domain[et[:, 1]] != D)):
            problems.append("Sigma edge without one B and one D neighbour")
        if len(sig) % 2:
            problems.append(f"odd number of Sigma edges ({len(sig)})")
        else:
            try:
                pairs = pair_interface(self)
            except MeshError as exc:
                problems.append(str(exc))
            else:
                for a, b in pairs:
                    if not set(self.edges[a]) & set(self.edges[b]):
                        problems.append("Sigma macro-edge made of non-adjacent edges")
                if sorted(i for pr in pairs for i in pr) != sorted(sig.tolist()):
                    problems.append("interface pairs do not cover Sigma")
        if sig.size:
            n = self.normals[sig]
            cB = self.points[self.triangles[et[:, 0]]].mean(axis=1)
            if np.any(np.einsum("ij,ij->i", n, self.midpoints[sig] - cB) <= 0):
                problems.append("Sigma normal does not point from B into D")
        if self.min_angle() < MIN_ANGLE_DEG - 1e-9:
            problems.append(f"minimum angle {self.min_angle():.2f} below {MIN_ANGLE_DEG}")
        return problems

    def renumbered(self, rng):
        """Same mesh with randomly permuted vertex and triangle numbering."""
        perm_v = rng.permutation(self.n_vertices)
        inv = np.empty_like(perm_v)
        inv[perm_v] = np.arange(len(perm_v))
        perm_t = rng.permutation(self.n_triangles)
        tris = inv[self.triangles[perm_t]]
        shift = rng.integers(0, 3, size=len(tris))
        tris = np.array([np.roll(tr, s) for tr, s in zip(tris, shift)]).reshape(-1, 3)
        tags = {_key(int(inv[a]), int(inv[b])): v for (a, b), v in self.boundary_tags.items()}
        pts = self.points[perm_v]
        return CoupledMesh(pts, tris, self.domain[perm_t], tags)


def _hanging_nodes(mesh):
    """Detect vertices lying in the interior of a mesh edge."""
    used = np.unique(mesh.triangles)
    if len(used) == 0:
        return []
    pts = mesh.points[used]
    a = mesh.points[mesh.edges[:, 0]]
    b = mesh.points[mesh.edges[:, 1]]
    mid = 0.5 * (a + b)
    # midpoint test is enough for red-green meshes; any midpoint coincidence is a hanging node
    lookup = {(round(x, 12), round(y, 12)) for x, y in pts}
    out = []
    for e, (x, y) in enumerate(mid):
        if (round(x, 12), round(y, 12)) in lookup:
            out.append(f"hanging node at midpoint of edge {e}")
            if len(out) > 5:
                break
    return out


def _order_chain(mesh):
    sig = mesh.sigma_edges
    if len(sig) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    adj = {}
    for e in sig:
        a, b = (int(v) for v in mesh.edges[e])
        adj.setdefault(a, []).append((b, int(e)))
        adj.setdefault(b, []).append((a, int(e)))
    if any(len(v) > 2 for v in adj.values()):
        raise MeshError("interface is not a simple chain (branching vertex)")
    ends = [v for v, nb in adj.items() if len(nb) == 1]
    if len(ends) != 2:
        raise MeshError("interface must be a single open chain of edges")
    start = min(ends, key=lambda v: (mesh.points[v, 0], mesh.points[v, 1]))
    verts, edges = [start], []
    prev_edge = -1
    cur = start
    while True:
        nxt = [(w, e) for w, e in adj[cur] if e != prev_edge]
        if not nxt:
            break
        w, e = nxt[0]
        edges.append(e)
        verts.append(w)
        prev_edge, cur = e, w
    if len(edges) != len(sig):
        raise MeshError("interface must be a single connected chain")
    return np.array(edges, dtype=np.int64), np.array(verts, dtype=np.int64)


def pair_interface(mesh):
    """Group consecutive interface edges into macro-edges.

    Returns a list of ``(edge, edge)`` tuples in chain order.  Raises
    :class:`MeshError` if the interface has an odd number of edges or is not
    a simple chain.
    """
    edges, _ = mesh.interface_chain()
    if len(edges) % 2:
        raise MeshError(f"interface has an odd number of edges ({len(edges)}); cannot pair")
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]


# ----------------------------------------------------------------------
# structured meshes


def build_grid(xs, ys, classify, tagger=None, diagonal="right"):
    """Triangulate the cells of a tensor grid.

    Parameters
    ----------
    xs, ys : increasing 1D arrays of grid lines
    classify : callable ``(xc, yc) -> "B" | "D" | None`` evaluated at cell
        centres; ``None`` removes the cell
    tagger : callable ``(midpoint, subdomain) -> str`` naming boundary edges
    diagonal : ``"right"`` (SW-NE), ``"left"`` (SE-NW) or ``"mirror"``
        (mirrored about the vertical centre line of the grid)
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs) - 1, len(ys) - 1
    xc_mid = 0.5 * (xs[0] + xs[-1])
    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    pts, tris, dom = [], [], []

    def v(i, j):
        if vid[i, j] < 0:
            vid[i, j] = len(pts)
            pts.append((xs[i], ys[j]))
        return vid[i, j]

    for j in range(ny):
        for i in range(nx):
            xc, yc = 0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])
            sd = classify(xc, yc)
            if sd is None:
                continue
            tag = B if sd == "B" else D
            sw, se, ne_, nw = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
            d = diagonal
            if d == "mirror":
                d = "left" if xc < xc_mid else "right"
            if d == "right":
                tris += [(sw, se, ne_), (sw, ne_, nw)]
            else:
                tris += [(sw, se, nw), (se, ne_, nw)]
            dom += [tag, tag]
    pts = np.array(pts)
    tris = np.array(tris, dtype=np.int64)
    mesh = CoupledMesh(pts, tris, dom)
    if tagger is not None:
        tags = {}
        for e in np.flatnonzero((mesh.edge_kind == BOUNDARY_B) | (mesh.edge_kind == BOUNDARY_D)):
            sd = "B" if mesh.edge_kind[e] == BOUNDARY_B else "D"
            tags[(int(mesh.edges[e, 0]), int(mesh.edges[e, 1]))] = tagger(mesh.midpoints[e], sd)
        mesh = CoupledMesh(pts, tris, dom, tags)
    return mesh


@dataclass(frozen=True)
class StackedRectangles:
    """Two rectangles ``[x0, x1] x [y_lo, y_hi]`` sharing the horizontal line
    ``y = y_sigma``.  ``b_above`` places the B region on top."""

    x0: float
    x1: float
    y_bottom: float
    y_sigma: float
    y_top: float
    b_above: bool = True


def build_structured(layout, nx, ny_b, ny_d, diagonal="right"):
    """Structured mesh of two stacked rectangles.

    Boundary edges are tagged ``left``, ``right``, ``top`` or ``bottom``.
    ``nx`` is the number of interface edges and must be even.
    """
    if min(nx, ny_b, ny_d) < 1:
        raise MeshError("subdivision counts must be >= 1")
    if nx % 2:
        raise MeshError(f"interface subdivision count must be even, got nx={nx}")
    L = layout
    if not (L.x1 > L.x0 and L.y_top > L.y_sigma > L.y_bottom):
        raise MeshError("degenerate rectangle layout")
    ny_top, ny_bot = (ny_b, ny_d) if L.b_above else (ny_d, ny_b)
    xs = np.linspace(L.x0, L.x1, nx + 1)
    ys = np.concatenate([np.linspace(L.y_bottom, L.y_sigma, ny_bot + 1),
                         np.linspace(L.y_sigma, L.y_top, ny_top + 1)[1:]])
    top_name, bot_name = ("B", "D") if L.b_above else ("D", "B")

    def classify(xc, yc):
        return top_name if yc > L.y_sigma else bot_name

    tol = 1e-12 * max(1.0, L.x1 - L.x0, L.y_top - L.y_bottom)

    def tagger(m, sd):
        if abs(m[0] - L.x0) < tol:
            return "left"
        if abs(m[0] - L.x1) < tol:
            return "right"
        if abs(m[1] - L.y_top) < tol:
            return "top"
        return "bottom"

    return build_grid(xs, ys, classify, tagger, diagonal)


# ----------------------------------------------------------------------
# red-green refinement


class _Work:
    """Mutable element soup used while refining."""

    def __init__(self, mesh):
        self.pts = [tuple(p) for p in mesh.points]
        self.elems = {}
        self.next_id = 0
        self.edge_elems = {}
        for k in range(mesh.n_triangles):
            g = mesh.green[k]
            self.add(tuple(int(v) for v in mesh.triangles[k]), int(mesh.domain[k]),
                     tuple(int(v) for v in g) if g[0] >= 0 else None)
        self.tags = dict(mesh.boundary_tags)
        self.mid = {}
        for g in mesh.green:
            if g[0] >= 0:
                self.mid[_key(int(g[0]), int(g[1]))] = int(g[3])

    def add(self, verts, dom, green=None):
        k = self.next_id
        self.next_id += 1
        self.elems[k] = (verts, dom, green)
        for e in self.edge_keys(verts):
            self.edge_elems.setdefault(e, set()).add(k)
        return k

    def remove(self, k):
        verts, _, _ = self.elems.pop(k)
        for e in self.edge_keys(verts):
            s = self.edge_elems[e]
            s.discard(k)
            if not s:
                del self.edge_elems[e]

    @staticmethod
    def edge_keys(verts):
        a, b, c = verts
        return (_key(b, c), _key(c, a), _key(a, b))

    def midpoint(self, a, b):
        k = _key(a, b)
        m = self.mid.get(k)
        if m is None:
            pa, pb = self.pts[a], self.pts[b]
            m = len(self.pts)
            self.pts.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
            self.mid[k] = m
        tag = self.tags.get(k)
        if tag is not None:
            self.tags[_key(a, m)] = tag
            self.tags[_key(m, b)] = tag
        return m

    def sibling(self, k):
        g = self.elems[k][2]
        # siblings share the median edge (midpoint, opposite vertex)
        for j in self.edge_elems[_key(g[3], g[2])]:
            if j != k and self.elems[j][2] == g:
                return j
        raise MeshError("green triangle without its sibling")

    def restore(self, k):
        g = self.elems[k][2]
        dom = self.elems[k][1]
        j = self.sibling(k)
        a, b, c, m = g
        for kk in (k, j):
            self.remove(kk)
        ta, tb = self.tags.get(_key(a, m)), self.tags.get(_key(m, b))
        if ta is not None and ta == tb:
            self.tags[_key(a, b)] = ta
        return self.add((a, b, c), dom, None)


def _closure(work, marked_edges, force_red):
    """Propagate edge marks until every element has 0, 1 (non-green) or 3."""
    queue = list(work.elems.keys())
    while queue:
        k = queue.pop()
        if k not in work.elems:
            continue
        verts, dom, green = work.elems[k]
        keys = work.edge_keys(verts)
        nm = sum(e in marked_edges for e in keys)
        if green is not None and (nm >= 1 or k in force_red):
            force_red.discard(k)
            p = work.restore(k)
            a, b, c = work.elems[p][0]
            marked_edges.add(_key(a, b))
            force_red.add(p)
            queue.append(p)
            continue
        if (nm >= 2 or k in force_red) and nm < 3:
            for e in keys:
                if e not in marked_edges:
                    marked_edges.add(e)
                    queue.extend(work.edge_elems.get(e, ()))
            queue.append(k)


def _split(work, marked_edges):
    for k in list(work.elems.keys()):
        verts, dom, green = work.elems[k]
        keys = work.edge_keys(verts)
        flags = [e in marked_edges for e in keys]
        nm = sum(flags)
        if nm == 0:
            continue
        work.remove(k)
        x0, x1, x2 = verts
        if nm == 3:
            m01 = work.midpoint(x0, x1)
            m12 = work.midpoint(x1, x2)
            m20 = work.midpoint(x2, x0)
            work.add((x0, m01, m20), dom)
            work.add((m01, x1, m12), dom)
            work.add((m20, m12, x2), dom)
            work.add((m01, m12, m20), dom)
        elif nm == 1:
            i = flags.index(True)
            vi, vj, vk = verts[i], verts[(i + 1) % 3], verts[(i + 2) % 3]
            m = work.midpoint(vj, vk)
            parent = (vj, vk, vi, m)
            work.add((vi, vj, m), dom, parent)
            work.add((vi, m, vk), dom, parent)
        else:
            raise MeshError("closure left an element with two marked edges")


def _sigma_edges(work):
    out = []
    for e, ks in work.edge_elems.items():
        if len(ks) == 2:
            d = {work.elems[k][1] for k in ks}
            if len(d) == 2:
                out.append(e)
    return out


def refine(mesh, marked, max_passes=100):
    """Red-green refinement of the triangles whose ids are in ``marked``.

    Every marked triangle is red-refined (a marked green triangle has its
    parent red-refined instead).  The result is conforming, keeps the
    interface matched, and has an even number of interface edges.
    """
    marked = {int(k) for k in marked}
    if not marked:
        return CoupledMesh(mesh.points, mesh.triangles, mesh.domain, mesh.boundary_tags, mesh.green)
    if min(marked) < 0 or max(marked) >= mesh.n_triangles:
        raise MeshError("marked triangle id out of range")
    work = _Work(mesh)
    force_red = set(marked)  # element ids coincide with triangle ids initially
    marked_edges = set()
    for k in marked:
        marked_edges.update(work.edge_keys(work.elems[k][0]))
    for _ in range(max_passes):
        _closure(work, marked_edges, force_red)
        _split(work, marked_edges)
        marked_edges = {e for e in work.edge_elems if e in work.mid}
        force_red = set()
        if marked_edges:
            continue
        sig = _sigma_edges(work)
        if len(sig) % 2:
            P = work.pts
            longest = max(sig, key=lambda e: (math.dist(P[e[0]], P[e[1]]), -e[0], -e[1]))
            marked_edges = {longest}
            log.debug("interface parity repair: bisecting edge %s", longest)
            continue
        break
    else:
        raise MeshError("refinement did not reach a conforming mesh")

    ids = sorted(work.elems)
    tris = np.array([work.elems[k][0] for k in ids], dtype=np.int64).reshape(-1, 3)
    dom = np.array([work.elems[k][1] for k in ids], dtype=np.int8)
    green = np.array([work.elems[k][2] if work.elems[k][2] is not None else (-1, -1, -1, -1)
                      for k in ids], dtype=np.int64).reshape(-1, 4)
    pts = np.array(work.pts)
    # drop vertices no longer referenced (restored green midpoints are always reused)
    used = np.unique(tris)
    if len(used) != len(pts):
        remap = -np.ones(len(pts), dtype=np.int64)
        remap[used] = np.arange(len(used))
        pts = pts[used]
        tris = remap[tris]
        green = np.where(green >= 0, remap[np.maximum(green, 0)], -1)
        tags = {_key(int(remap[a]), int(remap[b])): v for (a, b), v in work.tags.items()
                if remap[a] >= 0 and remap[b] >= 0}
    else:
        tags = work.tags
    out = CoupledMesh(pts, tris, dom, tags, green)
    bad = [p for p in out.check_invariants() if not p.startswith("minimum angle")]
    assert not bad, bad
    return out


def refine_uniform(mesh, times=1):
    for _ in range(times):
        mesh = refine(mesh, range(mesh.n_triangles))
    return mesh
