"""Plain-text exports: mesh files, legacy VTK unstructured grids and CSV tables."""
import csv
import math
import os

import numpy as np

from .mesh import EDGE_KIND_NAMES, SUBDOMAIN_NAMES, CoupledMesh, MeshError
from .quadrature import triangle_rule

VTK_TRIANGLE = 5
HISTORY_COLUMNS = ["level", "DoF", "hB", "hD", "hSigma",
                   "e_uB", "r_uB", "e_pB", "r_pB", "e_uD", "r_uD", "e_pD", "r_pD",
                   "e_lambda", "r_lambda", "e_total", "r_total", "theta", "eff", "newton_iters",
                   "r_theta"]


def fmt(v):
    """Six significant digits in scientific notation; ``nan`` for missing values."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.5e}"


def write_mesh(mesh, path):
    """Vertex list, triangle list with subdomain tags, and edge classification."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.points:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for (a, b, c), d in zip(mesh.triangles, mesh.domain):
            fh.write(f"{a} {b} {c} {SUBDOMAIN_NAMES[d]}\n")
        fh.write(f"edges {len(mesh.edges)}\n")
        for (a, b), k, tag in zip(mesh.edges, mesh.edge_kind, mesh.edge_tags):
            fh.write(f"{a} {b} {EDGE_KIND_NAMES[k]} {tag or '-'}\n")


def read_mesh(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    try:
        i = 0
        nv = int(lines[i][1]); i += 1
        pts = np.array([[float(t) for t in lines[i + k]] for k in range(nv)]); i += nv
        nt = int(lines[i][1]); i += 1
        tris = np.array([[int(t) for t in lines[i + k][:3]] for k in range(nt)], dtype=np.int64)
        dom = np.array([SUBDOMAIN_NAMES.index(lines[i + k][3]) for k in range(nt)]); i += nt
        ne = int(lines[i][1]); i += 1
        tags = {}
        for k in range(ne):
            a, b, _, tag = lines[i + k]
            if tag != "-":
                tags[(int(a), int(b))] = tag
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    return CoupledMesh(pts, tris, dom, tags)


def write_vtk(mesh, path, cell_data=None, point_data=None, title="bfdarcy"):
    """Legacy ASCII VTK unstructured grid with optional cell/point arrays.

    Arrays of shape (n,) are written as SCALARS, (n, 2) as VECTORS (padded
    with a zero third component).
    """
    pts = mesh.points
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        for x, y in pts:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        nt = mesh.n_triangles
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write(f"{VTK_TRIANGLE}\n" * nt)
        cells = {"subdomain": mesh.domain.astype(float)}
        cells.update(cell_data or {})
        _write_arrays(fh, "CELL_DATA", nt, cells)
        if point_data:
            _write_arrays(fh, "POINT_DATA", len(pts), point_data)


def _write_arrays(fh, section, n, arrays):
    fh.write(f"{section} {n}\n")
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape[0] != n:
            raise ValueError(f"array {name} has {arr.shape[0]} entries, expected {n}")
        if arr.ndim == 1:
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.17g}" for v in arr) + "\n")
        else:
            fh.write(f"VECTORS {name} double\n")
            fh.write("\n".join(f"{a:.17g} {b:.17g} 0" for a, b in arr[:, :2]) + "\n")


def solution_cell_fields(solution):
    """Cell averages of the velocity (u_B or u_D by subdomain) and the pressure."""
    L, mesh = solution.layout, solution.mesh
    bary, w = triangle_rule(2)
    vel = np.zeros((mesh.n_triangles, 2))
    if len(L.tris_B):
        u, _ = solution.u_B(bary)
        vel[L.tris_B] = np.einsum("q,nqc->nc", w, u)
    if len(L.tris_D):
        u, _ = solution.u_D(bary)
        vel[L.tris_D] = np.einsum("q,nqc->nc", w, u)
    return {"velocity": vel, "pressure": solution.p.copy()}


def write_solution_vtk(solution, path):
    write_vtk(solution.mesh, path, cell_data=solution_cell_fields(solution))


def write_estimator_csv(field_, path):
    names = list(field_.terms)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["triangle", "subdomain", "theta_sq"] + names)
        for t in range(len(field_.domain)):
            w.writerow([t, SUBDOMAIN_NAMES[field_.domain[t]], fmt(field_.theta_sq_T[t])]
                       + [fmt(field_.terms[k][t]) for k in names])


def write_estimator_vtk(mesh, field_, path):
    cells = {"theta": field_.theta_T}
    cells.update({k: v for k, v in field_.terms.items()})
    write_vtk(mesh, path, cell_data=cells)


def history_rows(records):
    rows = []
    for r in records:
        rt = r.rates
        rows.append([str(r.level), str(r.dof), fmt(r.h_B), fmt(r.h_D), fmt(r.h_Sigma),
                     fmt(r.e_uB), fmt(rt.get("uB", math.nan)),
                     fmt(r.e_pB), fmt(rt.get("pB", math.nan)),
                     fmt(r.e_uD), fmt(rt.get("uD", math.nan)),
                     fmt(r.e_pD), fmt(rt.get("pD", math.nan)),
                     fmt(r.e_lambda), fmt(rt.get("lambda", math.nan)),
                     fmt(r.e_total), fmt(rt.get("total", math.nan)),
                     fmt(r.theta), fmt(r.eff), str(r.newton_iters),
                     fmt(rt.get("theta", math.nan))])
    return rows


def write_history(records, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        w.writerows(history_rows(records))
    os.replace(tmp, path)


def read_history(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
