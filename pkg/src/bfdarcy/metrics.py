"""Error norms against exact solutions, convergence rates and effectivity."""
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .quadrature import collapsed_rule, edge_rule

VOLUME_DEGREE = 12
EDGE_POINTS = 7


@dataclass
class ConvergenceRecord:
    level: int
    dof: int
    h_B: float
    h_D: float
    h_Sigma: float
    e_uB: float = math.nan
    e_pB: float = math.nan
    e_uD: float = math.nan
    e_pD: float = math.nan
    e_lambda: float = math.nan
    e_total: float = math.nan
    theta: float = math.nan
    eff: float = math.nan
    newton_iters: int = 0
    rates: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def error_norms(solution, exact, degree=VOLUME_DEGREE, edge_points=EDGE_POINTS):
    """Errors in the natural norms of each unknown.

    Returns a dict with keys ``uB`` (H1), ``uD`` (H(div)), ``pB``, ``pD``
    (L2), ``lambda`` (geometric mean of the L2 and H1 norms on the interface)
    and ``total`` (their plain sum, not a Pythagorean combination).
    """
    L, mesh = solution.layout, solution.mesh
    bary, w = collapsed_rule(degree)
    out = {}

    if len(L.tris_B):
        P = mesh.points[mesh.triangles[L.tris_B]]
        X = np.einsum("qi,nid->nqd", bary, P)
        uh, gh = solution.u_B(bary)
        du = exact.u_B(X) - uh
        dg = exact.grad_u_B(X) - gh
        dens = np.einsum("nqc,nqc->nq", du, du) + np.einsum("nqcd,nqcd->nq", dg, dg)
        out["uB"] = math.sqrt(float(np.sum((dens @ w) * mesh.areas[L.tris_B])))
        pe = exact.p(X) - solution.p[L.tris_B][:, None]
        out["pB"] = math.sqrt(float(np.sum(((pe ** 2) @ w) * mesh.areas[L.tris_B])))
    else:
        out["uB"] = out["pB"] = 0.0

    if len(L.tris_D):
        P = mesh.points[mesh.triangles[L.tris_D]]
        X = np.einsum("qi,nid->nqd", bary, P)
        uh, divh = solution.u_D(bary)
        du = exact.u_D(X) - uh
        dd = exact.div_u_D(X) - divh[:, None]
        dens = np.einsum("nqc,nqc->nq", du, du) + dd ** 2
        out["uD"] = math.sqrt(float(np.sum((dens @ w) * mesh.areas[L.tris_D])))
        pe = exact.p(X) - solution.p[L.tris_D][:, None]
        out["pD"] = math.sqrt(float(np.sum(((pe ** 2) @ w) * mesh.areas[L.tris_D])))
    else:
        out["uD"] = out["pD"] = 0.0

    se = L.sigma_edges
    if len(se):
        s, we = edge_rule(edge_points)
        a, b = mesh.points[mesh.edges[se, 0]], mesh.points[mesh.edges[se, 1]]
        X = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        lh, slope = solution.lam_on_sigma(s)
        t = mesh.tangents[se]
        el = exact.lam(X) - lh
        ed = exact.dlam_dt(X, t[:, None, :]) - slope[:, None]
        he = mesh.h_e[se]
        l2 = float(np.sum(((el ** 2) @ we) * he))
        d2 = float(np.sum(((ed ** 2) @ we) * he))
        out["lambda"] = math.sqrt(math.sqrt(l2) * math.sqrt(l2 + d2))
    else:
        out["lambda"] = 0.0
    out["total"] = out["uB"] + out["uD"] + out["pB"] + out["pD"] + out["lambda"]
    return out


def rate(e, e_prev, dof, dof_prev):
    """Experimental rate ``-2 log(e/e') / log(DoF/DoF')`` (2D, so h ~ DoF^-1/2)."""
    if e_prev is None or dof_prev is None or dof == dof_prev:
        return math.nan
    if math.isnan(e) or math.isnan(e_prev):  # no exact solution
        return math.nan
    if not (e > 0 and e_prev > 0 and dof > 0 and dof_prev > 0):
        raise ValueError("rates need positive errors and DoF counts")
    return -2.0 * math.log(e / e_prev) / math.log(dof / dof_prev)


def effectivity(e_total, theta):
    """``e_total / theta``.  Both zero (exact discrete solution) gives 1.0;
    a zero estimator with a nonzero error is an estimator failure."""
    if theta <= 0:
        if e_total == 0:
            return 1.0
        raise ValueError("estimator vanishes although the error does not")
    return e_total / theta


def attach_rates(records, keys=("uB", "pB", "uD", "pD", "lambda", "total", "theta")):
    """Fill ``rates`` of consecutive records in place."""
    attr = {"uB": "e_uB", "pB": "e_pB", "uD": "e_uD", "pD": "e_pD", "lambda": "e_lambda",
            "total": "e_total", "theta": "theta"}
    prev = None
    for rec in records:
        for k in keys:
            v = getattr(rec, attr[k])
            rec.rates[k] = math.nan if prev is None else rate(v, getattr(prev, attr[k]), rec.dof, prev.dof)
        prev = rec
    return records
