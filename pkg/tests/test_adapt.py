import numpy as np
import pytest

from bfdarcy.adapt import AdaptConfig, mark, run, solve_level
from bfdarcy.assembly import ProblemCoefficients
from bfdarcy.nlsolve import NewtonConfig, NewtonDivergence
from bfdarcy.problems import ProblemDefinition, example1, example2
from bfdarcy.spaces import BoundaryConditions

from conftest import small_coupled


def test_mark_threshold():
    np.testing.assert_array_equal(mark(np.array([1.0, 2.0, 3.0, 4.0]), 0.8), [1, 2, 3])
    np.testing.assert_array_equal(mark(np.full(5, 0.3), 0.8), np.arange(5))
    assert len(mark(np.zeros(4))) == 0
    assert len(mark(np.zeros(0))) == 0


@pytest.mark.parametrize("kw", [dict(c_adt=0.0), dict(c_adt=1.0), dict(mode="random"), dict(max_levels=0),
                                dict(dof_budget=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AdaptConfig(**kw)


def zero_problem():
    return ProblemDefinition("zero", ProblemCoefficients(1.0, 10.0, 3.0, 1.0, 1.0), BoundaryConditions(),
                             lambda n=None: small_coupled())


def test_zero_data_stops_after_one_level():
    res = run(zero_problem(), AdaptConfig(max_levels=5, newton=NewtonConfig(initial_velocity=(0.0, 0.0))))
    assert len(res.records) == 1
    assert res.records[0].theta == 0.0
    assert res.stopped_by == "converged"


def test_dof_grows_and_budget_stops(tmp_path):
    res = run(example1(), AdaptConfig(mode="adaptive", max_levels=10, dof_budget=3000, out=str(tmp_path)),
              mesh=example1().initial_mesh(2))
    dofs = [r.dof for r in res.records]
    assert all(b > a for a, b in zip(dofs, dofs[1:]))
    assert dofs[-1] <= 3000
    assert res.stopped_by == "dof_budget"
    for r in res.records:
        d = tmp_path / f"level_{r.level}"
        assert (d / "mesh.vtk").exists() and (d / "estimator.csv").exists() and (d / "solution.vtk").exists()
    assert (tmp_path / "history.csv").exists()


def test_uniform_mode_quadruples_triangles():
    pb = example1()
    res = run(pb, AdaptConfig(mode="uniform", max_levels=3), mesh=pb.initial_mesh(2), keep_levels=True)
    n = [lev.mesh.n_triangles for lev in res.levels]
    assert n[1] == 4 * n[0] and n[2] == 4 * n[1]
    assert res.stopped_by == "levels"
    assert np.isnan(res.records[0].rates["uB"]) and np.isfinite(res.records[1].rates["uB"])


def test_theta_tolerance_stop():
    pb = example1()
    res = run(pb, AdaptConfig(max_levels=5, theta_tol=1e3), mesh=pb.initial_mesh(2))
    assert len(res.records) == 1 and res.stopped_by == "theta"


def test_divergence_keeps_partial_history():
    pb = example1()
    res = run(pb, AdaptConfig(max_levels=3, newton=NewtonConfig(max_iter=1)), mesh=pb.initial_mesh(2))
    assert res.stopped_by == "divergence"
    assert isinstance(res.error, NewtonDivergence)
    assert res.records == []


def test_example2_marks_near_inner_corners():
    pb = example2()
    m = pb.initial_mesh()
    lev = solve_level(pb, m)
    marked = mark(lev.estimator, 0.8)
    c = m.points[m.triangles].mean(axis=1)
    d = np.min([np.hypot(*(c - q).T) for q in ([-0.75, 0.25], [0.75, 0.25])], axis=0)
    near = d < 0.3
    assert 0 < len(marked) < m.n_triangles
    assert near[marked].mean() > 0.8
    assert near[marked].mean() > 3 * near.mean()
    assert near[np.argmax(lev.estimator.theta_T)]
