import numpy as np
import pytest

from cmop_lab import algebra as alg
from cmop_lab.model import (
    NUMBER,
    SIGMA,
    ModelParams,
    SizeCapError,
    TopologyError,
    build_cluster,
    build_full_liouvillian,
    build_interaction,
    build_site_liouvillian,
    chain1d_open,
    full_hamiltonian,
    make_ansatz,
    make_lattice,
    ring1d,
    site_hamiltonian,
    torus2d,
    torus2d_5site,
)
from conftest import random_density


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(gamma=-1)
    with pytest.raises(ValueError):
        ModelParams(j=float("nan"))
    with pytest.raises(NotImplementedError):
        ModelParams(local_dim=3)
    p = ModelParams(delta=1.0).replace(j=0.5)
    assert (p.delta, p.j) == (1.0, 0.5)


@pytest.mark.parametrize(
    "lat, z, n_bonds",
    [(ring1d(3), 2, 3), (ring1d(12), 2, 12), (chain1d_open(4), 2, 3), (torus2d_5site(), 4, 10), (torus2d(3), 4, 18)],
)
def test_lattice_bonds(lat, z, n_bonds):
    assert lat.z == z
    assert len(lat.bonds) == n_bonds
    if lat.periodic:
        assert all(len(nb) == z for nb in lat.neighbors)


def test_lattice_errors():
    with pytest.raises(TopologyError):
        ring1d(2)
    with pytest.raises(TopologyError):
        make_lattice("hexagonal", 6)
    with pytest.raises(TopologyError):
        make_lattice("torus2d_5site", 6)
    assert make_lattice("torus2d_LxL", 9).n_sites == 9


def test_site_generators():
    p = ModelParams(delta=0.6, omega=1.5, gamma=1.0)
    h = site_hamiltonian(p)
    assert alg.hermiticity_error(h) == 0
    assert np.allclose(h, 0.6 * NUMBER + 0.75 * (SIGMA + SIGMA.conj().T))
    l = build_site_liouvillian(p)
    rho = np.diag([0.3, 0.7]).astype(complex)
    out = alg.apply_super(l, rho)
    assert abs(np.trace(out)) < 1e-14
    # decay of the excited population at rate gamma, without drive
    l0 = build_site_liouvillian(p.replace(omega=0))
    assert np.isclose(alg.apply_super(l0, rho)[1, 1], -0.7)


def test_full_liouvillian_trace_preserving(rng):
    p = ModelParams(delta=0.6, omega=1.5, gamma=1.0, j=0.4)
    l = build_full_liouvillian(ring1d(3), p)
    rho = random_density(8, rng)
    out = alg.apply_super(l, rho)
    assert abs(np.trace(out)) < 1e-12
    assert alg.hermiticity_error(out) < 1e-12
    with pytest.raises(SizeCapError):
        build_full_liouvillian(ring1d(7), p)


def test_hopping_conserves_excitations():
    p = ModelParams(delta=0.3, j=1.0, gamma=0.0)
    h = full_hamiltonian(ring1d(4), p)
    n_tot = sum(alg.embed(NUMBER, k, [2] * 4) for k in range(4))
    assert np.abs(h @ n_tot - n_tot @ h).max() < 1e-12


def test_interaction_matches_full_hamiltonian():
    p = ModelParams(j=0.7, gamma=0.0)
    li = build_interaction([2], [2], [(0, 0)], p.j)
    h = full_hamiltonian(chain1d_open(2), p)
    assert np.allclose(li, alg.hamiltonian_super(h))
    with pytest.raises(TopologyError):
        build_interaction([2], [2], [(1, 0)], 1.0)


def test_uniform_ansatz_has_z_self_bonds():
    p = ModelParams(j=0.5)
    (sub,) = make_ansatz("uniform", p, torus2d_5site())
    assert len(sub.boundary_ops) == 4
    assert all(bb.neighbor == 0 and bb.neighbor_site == 0 for bb in sub.boundary_ops)


def test_ab_ansatz():
    p = ModelParams(j=1.0, gamma=0.0)
    a, b = make_ansatz("ab", p, ring1d(12), closed=True)
    assert [bb.neighbor for bb in a.boundary_ops] == [1, 1]
    assert [bb.neighbor for bb in b.boundary_ops] == [0, 0]
    pair = make_ansatz("ab", p, chain1d_open(2), closed=True)
    assert len(pair[0].boundary_ops) == 1
    with pytest.raises(TopologyError):
        make_ansatz("ab", p, ring1d(5))


def test_cluster_ansatz_boundary_layout():
    p = ModelParams(j=0.5)
    (c2,) = make_ansatz("cluster-2", p)
    assert c2.dims == (2, 2)
    assert len(c2.intra_bonds) == 1
    assert sorted((bb.site, bb.neighbor_site) for bb in c2.boundary_ops) == [(0, 1), (1, 0)]
    (c4,) = make_ansatz("cluster-4", p.replace(gamma=0.0), ring1d(12), closed=True)
    assert sorted((bb.site, bb.neighbor_site) for bb in c4.boundary_ops) == [(0, 3), (3, 0)]


def test_cluster_errors():
    p = ModelParams(j=0.5)
    with pytest.raises(ValueError):
        make_ansatz("triangle", p)
    with pytest.raises(TopologyError):
        build_cluster([0, 2], p, ring1d(6))
    with pytest.raises(ValueError):
        build_cluster([0], p, ring1d(3), closed=True)


def test_large_cluster_superoperator_capped():
    p = ModelParams(j=1.0, gamma=0.0)
    (c8,) = make_ansatz("cluster-8", p, ring1d(16), closed=True)
    assert c8.dim == 256
    with pytest.raises(SizeCapError):
        c8.liouvillian
