"""Solve / estimate / mark / refine loop with per-level history."""
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import io
from .assembly import AssembledSystem
from .estimator import estimate
from .mesh import B, D, refine, refine_uniform
from .metrics import ConvergenceRecord, attach_rates, error_norms
from .nlsolve import NewtonConfig, NewtonDivergence, solve
from .spaces import DofLayout

log = logging.getLogger(__name__)


@dataclass
class AdaptConfig:
    mode: str = "adaptive"
    c_adt: float = 0.8
    max_levels: int = 8
    dof_budget: Optional[int] = None
    theta_tol: Optional[float] = None
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    threads: Optional[int] = None
    out: Optional[str] = None
    snapshots: bool = True

    def __post_init__(self):
        if not 0.0 < self.c_adt < 1.0:
            raise ValueError("c_adt must lie in (0, 1)")
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError(f"unknown refinement mode {self.mode!r}")
        if self.max_levels < 1:
            raise ValueError("at least one level is required")
        if self.dof_budget is not None and self.dof_budget < 1:
            raise ValueError("DoF budget must be positive")


def mark(field_or_theta, c_adt=0.8):
    """Ids of triangles with ``theta_T >= c_adt * mean(theta_T)``."""
    theta = getattr(field_or_theta, "theta_T", field_or_theta)
    theta = np.asarray(theta, dtype=float)
    if len(theta) == 0 or not np.any(theta > 0):
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(theta >= c_adt * theta.mean())


@dataclass
class LevelResult:
    mesh: object
    layout: object
    solution: object
    estimator: object
    record: ConvergenceRecord
    report: object


@dataclass
class RunResult:
    records: list
    levels: list
    stopped_by: str
    error: Optional[Exception] = None


def solve_level(problem, mesh, level=0, newton=None, threads=None):
    """Assemble, solve, estimate and (if possible) measure errors on one mesh."""
    t0 = time.perf_counter()
    layout = DofLayout(mesh, problem.bc)
    system = AssembledSystem(layout, problem.coefficients, threads=threads)
    x, rep = solve(system, newton)
    sol = system.solution(x)
    est = estimate(sol, problem.coefficients, problem.rot_f_D)
    rec = ConvergenceRecord(level, layout.n_dofs, mesh.h_max(B), mesh.h_max(D), mesh.h_sigma,
                            newton_iters=rep.iterations)
    rec.theta = est.theta
    if problem.exact is not None:
        e = error_norms(sol, problem.exact)
        rec.e_uB, rec.e_pB, rec.e_uD, rec.e_pD = e["uB"], e["pB"], e["uD"], e["pD"]
        rec.e_lambda, rec.e_total = e["lambda"], e["total"]
        rec.eff = e["total"] / rec.theta if rec.theta > 0 else math.nan
    log.info("level %d: DoF %d, theta %.4e, newton %d, %.1fs", level, rec.dof, rec.theta,
             rep.iterations, time.perf_counter() - t0)
    return LevelResult(mesh, layout, sol, est, rec, rep)


def _snapshot(out, lev):
    d = os.path.join(out, f"level_{lev.record.level}")
    os.makedirs(d, exist_ok=True)
    io.write_vtk(lev.mesh, os.path.join(d, "mesh.vtk"), cell_data={"theta": lev.estimator.theta_T})
    io.write_estimator_csv(lev.estimator, os.path.join(d, "estimator.csv"))
    io.write_solution_vtk(lev.solution, os.path.join(d, "solution.vtk"))


def run(problem, config=None, mesh=None, keep_levels=False):
    """Run the refinement loop; returns a :class:`RunResult`.

    Stops at the level cap, when the DoF budget would be exceeded by the
    next level (the current level is always computed), when ``theta`` drops
    below ``theta_tol``, or when nothing is marked.  Newton divergence ends
    the loop and is stored in ``RunResult.error`` with the partial history.
    """
    config = config or AdaptConfig()
    mesh = mesh if mesh is not None else problem.initial_mesh()
    records, kept = [], []
    stopped = "levels"
    err = None
    if config.out:
        os.makedirs(config.out, exist_ok=True)
    for k in range(config.max_levels):
        try:
            lev = solve_level(problem, mesh, k, config.newton, config.threads)
        except NewtonDivergence as exc:
            err, stopped = exc, "divergence"
            break
        records.append(lev.record)
        attach_rates(records)
        if keep_levels:
            kept.append(lev)
        if config.out:
            if config.snapshots:
                _snapshot(config.out, lev)
            io.write_history(records, os.path.join(config.out, "history.csv"))
        if config.theta_tol is not None and lev.record.theta <= config.theta_tol:
            stopped = "theta"
            break
        if k == config.max_levels - 1:
            break
        if config.mode == "uniform":
            new_mesh = refine_uniform(mesh)
        else:
            marked = mark(lev.estimator, config.c_adt)
            if len(marked) == 0:
                stopped = "converged"
                break
            new_mesh = refine(mesh, marked)
        if config.dof_budget is not None and DofLayout(new_mesh, problem.bc).n_dofs > config.dof_budget:
            stopped = "dof_budget"
            break
        mesh = new_mesh
    return RunResult(records, kept, stopped, err)
