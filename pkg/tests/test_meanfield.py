import numpy as np
import pytest

from cmop_lab import algebra as alg
from cmop_lab.exact import null_state
from cmop_lab.meanfield import (
    census_seeds,
    cluster_solutions,
    damped_iteration,
    mf_evolve,
    mf_rhs,
    mf_steady_census,
)
from cmop_lab.model import ModelParams, build_site_liouvillian, make_ansatz, ring1d


def uniform(zj, **kw):
    p = ModelParams(delta=0.6, omega=1.5, gamma=1.0, j=zj / 2, **kw)
    return make_ansatz("uniform", p, ring1d(3))[0]


def test_uncoupled_fixed_point_is_single_site_state():
    sub = uniform(0.0)
    cen = mf_steady_census(sub, n_starts=3)
    assert cen.count == 1
    local = null_state(build_site_liouvillian(ModelParams(delta=0.6, omega=1.5, gamma=1.0)), 2)
    assert alg.trace_distance(cen.fixed_points[0].rho, local) < 1e-9


def test_bistable_window_has_three_roots():
    cen = mf_steady_census(uniform(3.5), n_starts=8, seed=0)
    assert cen.count == 3
    for fp in cen.fixed_points:
        assert fp.residual < 1e-10
        assert np.linalg.norm(mf_rhs([fp.rho], [uniform(3.5)])[0]) < 1e-9


def test_weak_coupling_single_root():
    assert mf_steady_census(uniform(1.0), n_starts=6, seed=3).count == 1


def test_census_deterministic():
    a = mf_steady_census(uniform(3.5), n_starts=4, seed=11)
    b = mf_steady_census(uniform(3.5), n_starts=4, seed=11)
    assert a.count == b.count
    for x, y in zip(a.fixed_points, b.fixed_points):
        assert np.array_equal(x.rho, y.rho)
        assert x.seeds == y.seeds


def test_census_seeds_order():
    s = census_seeds(2, 2, np.random.default_rng(0))
    assert len(s) == 5
    assert s[0][0, 0] == 1 and s[1][1, 1] == 1
    assert np.allclose(s[2], np.eye(2) / 2)
    for r in s:
        alg.check_density(r, tol=1e-12)


def test_cluster_solutions_merges_close_roots():
    r = np.diag([0.7, 0.3]).astype(complex)
    near = r + 1e-9 * np.array([[1, 0], [0, -1]])
    far = np.diag([0.2, 0.8]).astype(complex)
    out = cluster_solutions([(0, r, 1e-12), (1, near, 1e-13), (2, far, 1e-12)])
    assert len(out) == 2
    assert out[0].seeds == [0, 1]


def test_damped_iteration_converges_off_window():
    rho, res, it = damped_iteration(uniform(1.0), np.eye(2) / 2)
    assert res < 1e-10


def test_mf_evolution_relaxes_to_fixed_point():
    sub = uniform(1.0)
    tr = mf_evolve([np.diag([1.0, 0]).astype(complex)], [sub], 30.0, 0.01)
    cen = mf_steady_census(sub, n_starts=2)
    assert alg.trace_distance(tr.states["state0"][-1], cen.fixed_points[0].rho) < 1e-8
    assert tr.diagnostics["trace_drift"] < 1e-12


def test_census_requires_decay():
    with pytest.raises(ValueError):
        mf_steady_census(make_ansatz("uniform", ModelParams(gamma=0.0, j=1.0), ring1d(3), closed=True)[0])
