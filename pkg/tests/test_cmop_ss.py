import numpy as np
import pytest

from cmop_lab import algebra as alg
from cmop_lab.cmop_ss import (
    NoDecayError,
    SteadyProblem,
    born_term_ss,
    residual,
    solve_steady,
    solve_steady_cluster2,
    steady_census,
)
from cmop_lab.exact import steady_full
from cmop_lab.model import SIGMA, ModelParams, make_ansatz, ring1d
from conftest import random_density

P = ModelParams(delta=0.6, omega=1.5, gamma=1.0, j=0.5)
RHO = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])


def uniform(p=P):
    return make_ansatz("uniform", p, ring1d(3))


def spectral_sum(p, rho):
    """Memory integral of one bond summed over products of single-site modes."""
    l = make_ansatz("uniform", p, ring1d(3))[0].liouvillian
    sp = alg.spectral(l)
    h = -p.j * (np.kron(SIGMA.conj().T, SIGMA) + np.kron(SIGMA, SIGMA.conj().T))
    r = np.kron(rho, rho)
    y = -1j * (h @ r - r @ h)
    y4 = y.reshape(2, 2, 2, 2)
    m = y - np.kron(rho, np.einsum("iaib->ab", y4)) - np.kron(np.einsum("aibi->ab", y4), rho)
    m4 = m.reshape(2, 2, 2, 2)
    modes = [
        (sp.eigenvalues[k], sp.left[k].reshape(2, 2, order="F"), sp.right[:, k].reshape(2, 2, order="F"))
        for k in range(4)
    ]
    x = np.zeros((4, 4), complex)
    for lk, ak, rk in modes:
        for ll, al, rl in modes:
            if abs(lk + ll) < 1e-10:
                continue
            c = np.einsum("ij,ab,iajb->", ak, al, m4)
            x += c / -(lk + ll) * np.kron(rk, rl)
    return x


def test_zero_coupling_born_term_vanishes():
    subs = uniform(P.replace(j=0.0))
    assert np.abs(born_term_ss(RHO, subs)).max() < 1e-14
    res = solve_steady(subs)
    assert res.converged
    assert np.abs(residual(res.rho, subs)).max() < 1e-10


def test_undriven_vacuum_is_fixed_point():
    subs = uniform(P.replace(omega=0.0))
    vac = np.diag([1.0, 0.0]).astype(complex)
    assert np.abs(residual(vac, subs)).max() < 1e-14
    assert alg.trace_distance(solve_steady(subs).rho, vac) < 1e-10


def test_residual_anchor():
    b = born_term_ss(RHO, uniform())
    assert np.linalg.norm(b) == pytest.approx(0.04117695409528787, rel=1e-9)
    assert np.linalg.norm(residual(RHO, uniform())) == pytest.approx(0.8772436812574992, rel=1e-9)


def test_born_term_hermitian_traceless(rng):
    for _ in range(5):
        b = born_term_ss(random_density(2, rng), uniform())
        assert abs(np.trace(b)) < 1e-13
        assert alg.hermiticity_error(b) < 1e-13


def test_newton_matches_fixed_point():
    a = solve_steady(uniform())
    b = solve_steady(uniform(), method="fixed-point", tol=1e-12)
    assert a.converged and b.converged
    assert alg.trace_distance(a.rho, b.rho) < 1e-8


def test_joint_integral_matches_spectral_sum(rng):
    rho = random_density(2, rng)
    for zj in np.linspace(0.2, 4.0, 5):
        for om in np.linspace(0.25, 3.0, 5):
            p = P.replace(omega=om, j=zj / 2)
            prob = SteadyProblem(uniform(p))
            x = alg.devectorize(prob.joint_integral(0, 0, rho, rho), 4)
            ref = spectral_sum(p, rho)
            assert np.abs(x - ref).max() < 1e-8 * max(1.0, np.abs(ref).max())


def test_closed_system_raises():
    with pytest.raises(NoDecayError):
        solve_steady(uniform(P.replace(gamma=0.0)))


def test_census_single_root():
    census, unphys = steady_census(uniform(), n_starts=4, seed=7)
    assert census.count == 1
    assert not unphys


def test_cluster2_limits():
    free = solve_steady_cluster2(P.replace(j=0.0))
    site = free.states["site"]
    assert alg.trace_distance(free.states["cluster"], np.kron(site, site)) < 1e-10
    vac = solve_steady_cluster2(P.replace(omega=0.0))
    assert alg.trace_distance(vac.states["site"], np.diag([1.0, 0.0])) < 1e-10


def test_ordering_against_exact_ring():
    exact = steady_full(ring1d(5), P).states["site"]
    mf = solve_steady(uniform(), born=False).states["site"]
    c1 = solve_steady(uniform()).states["site"]
    c2 = solve_steady_cluster2(P).states["site"]
    d = [alg.trace_distance(exact, x) for x in (mf, c1, c2)]
    assert d[0] > d[1] > d[2]
