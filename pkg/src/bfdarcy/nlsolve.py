"""Newton's method for the discrete nonlinear saddle-point system."""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class NewtonDivergence(SolverError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass
class NewtonConfig:
    tol: float = 1e-6
    max_iter: int = 25
    initial_velocity: tuple = (0.1, 0.0)
    line_search: bool = True
    linear_tol: float = 1e-10

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    increments: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    damped_steps: int = 0
    factorizations: int = 0


def _refine(lu, K, r, dx, tol, steps):
    nr = np.linalg.norm(r) or 1.0
    rel = np.linalg.norm(r - K @ dx) / nr
    for _ in range(steps):
        if rel <= tol or not np.isfinite(rel):
            break
        dx = dx + lu.solve(r - K @ dx)
        rel = np.linalg.norm(r - K @ dx) / nr
    return dx, rel


def _krylov(lu, K, r, dx, tol, restart=30, cycles=3):
    M = spla.LinearOperator(K.shape, lu.solve)
    y, _ = spla.gmres(K, r, x0=dx, M=M, rtol=tol, atol=0.0, restart=restart, maxiter=cycles)
    return y, np.linalg.norm(r - K @ y) / (np.linalg.norm(r) or 1.0)


def linear_step(K, r, tol=1e-10, n_velocity=None, refine_steps=10, reg=1e-10, cache=None):
    """Solve ``K dx = r`` for the (symmetric, indefinite) saddle-point matrix.

    When ``n_velocity`` is given, the leading block is assumed positive
    definite: the trailing multiplier block gets a tiny negative shift, which
    makes the matrix quasi-definite so it can be factored with diagonal
    pivots in a fill-reducing symmetric ordering.  Iterative refinement
    against the unshifted matrix removes the perturbation; if that stalls,
    GMRES preconditioned by the same factor finishes the job.  Partial-pivoting
    LU with COLAMD is the last resort.

    ``cache`` (a dict) keeps the last factor between calls.  A factor of a
    nearby matrix (the previous Newton Jacobian) is tried first as a GMRES
    preconditioner, and a new factorisation happens only when that fails
    to reach ``tol``.  ``cache["factorizations"]`` counts the new ones.
    """
    K = sp.csc_matrix(K)
    dx, rel = None, np.inf
    if cache is not None and cache.get("lu") is not None and cache["lu"].shape == K.shape:
        dx, rel = _krylov(cache["lu"], K, r, np.zeros_like(r), tol, restart=40, cycles=2)
        if rel <= tol and np.all(np.isfinite(dx)):
            return dx, rel
        dx, rel = None, np.inf
    if cache is not None:
        cache["factorizations"] = cache.get("factorizations", 0) + 1
    if n_velocity is not None and 0 < n_velocity < K.shape[0]:
        d = np.abs(K.diagonal()[:n_velocity])
        shift = np.zeros(K.shape[0])
        shift[n_velocity:] = reg * (d.max() if len(d) else 1.0)
        try:
            lu = spla.splu((K - sp.diags(shift)).tocsc(), permc_spec="MMD_AT_PLUS_A",
                           diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
            dx, rel = _refine(lu, K, r, lu.solve(r), tol, refine_steps)
            if rel > tol and np.isfinite(rel):
                # refinement stalls once pivot growth dominates; the factor
                # is still an excellent preconditioner
                dx, rel = _krylov(lu, K, r, dx, tol)
            if cache is not None:
                cache["lu"] = lu
        except RuntimeError:
            dx, rel = None, np.inf
        if dx is not None and (rel > tol or not np.all(np.isfinite(dx))):
            log.debug("quasi-definite solve reached only %.2e; switching to pivoting LU", rel)
    if dx is None or rel > tol or not np.all(np.isfinite(dx)):
        try:
            lu = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError as exc:  # exactly singular factor
            raise SingularSystemError(str(exc)) from exc
        dx, rel = _refine(lu, K, r, lu.solve(r), tol, 3)
        if cache is not None:
            cache["lu"] = lu
    if not np.all(np.isfinite(dx)):
        raise SingularSystemError("linear solve produced non-finite values")
    return dx, rel


def initial_guess(system, config=None):
    """Lifted boundary data plus a constant velocity on the free B vertices."""
    config = config or NewtonConfig()
    L = system.layout
    x = system.lift()
    fr = ~L.constrained
    ux = np.arange(L.off_ux, L.off_uy)
    uy = np.arange(L.off_uy, L.off_bub)
    x[ux[fr[ux]]] = config.initial_velocity[0]
    x[uy[fr[uy]]] = config.initial_velocity[1]
    return x


def solve(system, config=None, x0=None):
    """Newton iteration; returns ``(x, SolveReport)``.

    Stops when ``|dx| / |x_new| <= tol``.  A halving line search on the
    residual norm is used only after the increment norm grew in two
    consecutive iterations.
    """
    config = config or NewtonConfig()
    x = initial_guess(system, config) if x0 is None else np.array(x0, dtype=float)
    free = system.free
    rep = SolveReport(False, 0)
    cache = {}
    grew = 0
    for it in range(1, config.max_iter + 1):
        K, r = system.jacobian(x)
        Kff = K[free][:, free]
        rf = r[free]
        rep.residuals.append(float(np.linalg.norm(rf)))
        try:
            dx, rel = linear_step(Kff, -rf, config.linear_tol, system.n_free_velocity, cache=cache)
            rep.factorizations = cache.get("factorizations", 0)
        except SingularSystemError as exc:
            raise SingularSystemError(
                f"singular Jacobian at iteration {it} (pressure penalty weight {system.penalty:g}): {exc}"
            ) from exc
        rep.linear_residuals.append(float(rel))
        step = 1.0
        if config.line_search and grew >= 2:
            r0 = np.linalg.norm(rf)
            while step > 1.0 / 64:
                trial = x.copy()
                trial[free] += step * dx
                if np.linalg.norm(system.residual(trial)[free]) < r0:
                    break
                step *= 0.5
            rep.damped_steps += 1
        x_new = x.copy()
        x_new[free] += step * dx
        inc = np.linalg.norm(step * dx) / max(np.linalg.norm(x_new[free]), 1e-300)
        if rep.increments and inc > rep.increments[-1]:
            grew += 1
        else:
            grew = 0
        rep.increments.append(float(inc))
        rep.iterations = it
        x = x_new
        log.debug("newton it %d: rel increment %.3e, residual %.3e", it, inc, rep.residuals[-1])
        if not np.all(np.isfinite(x)):
            raise NewtonDivergence("non-finite iterate", rep.increments)
        if inc <= config.tol:
            rep.converged = True
            return x, rep
    raise NewtonDivergence(
        f"Newton did not converge in {config.max_iter} iterations "
        f"(last relative increment {rep.increments[-1]:.3e})", rep.increments)
