import numpy as np
import pytest

from cmop_lab import algebra as alg
from cmop_lab.exact import (
    NumberSectorHamiltonian,
    UniquenessError,
    closed_evolve_statevector,
    evolve_full,
    null_state,
    product_statevector,
    steady_full,
)
from cmop_lab.model import NUMBER, ModelParams, build_site_liouvillian, chain1d_open, ring1d, torus2d_5site


def qubit_steady(delta, omega, gamma):
    """Closed form stationary state of a driven decaying two-level site."""
    den = gamma**2 / 4 + delta**2 + omega**2 / 2
    n = omega**2 / 4 / den
    coh = -(omega / 2) * (delta - 1j * gamma / 2) / den  # <sigma>
    return np.array([[1 - n, np.conj(coh)], [coh, n]])


def test_null_state_single_qubit():
    p = ModelParams(delta=0.6, omega=1.5, gamma=1.0)
    rho = null_state(build_site_liouvillian(p), 2)
    expect = qubit_steady(0.6, 1.5, 1.0)
    assert np.allclose(np.diag(rho), np.diag(expect), atol=1e-12)
    assert abs(abs(rho[1, 0]) - abs(expect[1, 0])) < 1e-12


def test_steady_full_uncoupled_is_product():
    p = ModelParams(delta=0.6, omega=1.5, gamma=1.0, j=0.0)
    res = steady_full(ring1d(3), p)
    single = null_state(build_site_liouvillian(p), 2)
    assert np.allclose(res.rho, single, atol=1e-12)
    assert np.allclose(res.states["pair"], np.kron(single, single), atol=1e-12)
    assert res.diagnostics["second_singular_value"] > 1e-8


def test_steady_full_vacuum_without_drive():
    res = steady_full(ring1d(4), ModelParams(delta=0.5, omega=0.0, gamma=1.0, j=1.3))
    assert abs(res.rho[0, 0] - 1) < 1e-10


def test_steady_full_translation_invariant():
    p = ModelParams(delta=0.5, omega=1.0, gamma=1.0, j=0.4)
    res = steady_full(torus2d_5site(), p)
    for k in range(5):
        assert alg.trace_distance(res.states[f"site{k}"], res.rho) < 1e-10
    assert res.residual < 1e-10


def test_steady_full_rejects_closed():
    with pytest.raises(ValueError):
        steady_full(ring1d(3), ModelParams(gamma=0.0, j=1.0))


def test_uniqueness_error_for_tiny_gamma(monkeypatch):
    import cmop_lab.exact as ex

    monkeypatch.setattr(ex.sla, "svdvals", lambda l: np.array([0.0, 0.0, 1.0]))
    with pytest.raises(UniquenessError):
        steady_full(ring1d(3), ModelParams(gamma=1.0, omega=1.0, j=0.2))


def test_evolve_full_conserves_trace():
    p = ModelParams(delta=0.6, omega=1.5, gamma=1.0, j=0.5)
    r0 = alg.kron(np.diag([0, 1.0]), np.diag([1.0, 0]), np.diag([0, 1.0]))
    tr = evolve_full(ring1d(3), p, r0.astype(complex), 2.0, 0.05, clusters=[(0, 1)])
    assert tr.diagnostics["trace_drift"] < 1e-12
    assert tr.diagnostics["hermiticity"] < 1e-12
    assert tr.states["c0-1"].shape == (41, 4, 4)
    assert tr.observables["n0"][0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        evolve_full(ring1d(3), p, r0.astype(complex), 1.0, 0.3)


def test_statevector_matches_dense_closed():
    p = ModelParams(delta=0.2, omega=0.0, gamma=0.0, j=1.0)
    lat = ring1d(4)
    bits = [1, 0, 1, 0]
    sv = closed_evolve_statevector(lat, p, product_statevector(bits), 1.0, 0.1)
    r0 = alg.kron(*[np.diag([1.0 - b, b]).astype(complex) for b in bits])
    de = evolve_full(lat, p, r0, 1.0, 0.1)
    assert np.abs(sv.observables["n0"] - de.observables["n0"]).max() < 1e-10
    assert np.abs(sv.observables["n_total"] - 2).max() < 1e-10


def test_number_sector_requires_no_drive():
    with pytest.raises(ValueError):
        NumberSectorHamiltonian(ring1d(4), ModelParams(omega=1.0, gamma=0.0, j=1.0))


def test_two_spin_exchange():
    # |10> -> cos^2(Jt) population on site 0
    p = ModelParams(gamma=0.0, j=1.0)
    sv = closed_evolve_statevector(chain1d_open(2), p, product_statevector([1, 0]), 1.0, 0.25)
    assert np.allclose(sv.observables["n0"], np.cos(sv.times) ** 2, atol=1e-12)
    assert np.allclose(sv.observables["re_corr01"], 0, atol=1e-12)
