import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec

from cmop_lab import algebra as alg
from conftest import random_density, random_operator

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_lindbladian(d, rng, rate=1.0):
    h = random_operator(d, rng)
    h = h + h.conj().T
    l = alg.hamiltonian_super(h)
    for _ in range(2):
        l = l + alg.dissipator_super(random_operator(d, rng), rate)
    return l


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 4))
def test_vectorization_identity(seed, d):
    rng = np.random.default_rng(seed)
    a, x, b = (random_operator(d, rng) for _ in range(3))
    lhs = alg.vectorize(a @ x @ b)
    rhs = np.kron(b.T, a) @ alg.vectorize(x)
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert np.allclose(alg.sprepost(a, b) @ alg.vectorize(x), lhs, atol=1e-12)
    assert np.allclose(alg.devectorize(alg.vectorize(x)), x)


def test_vectorize_stack_matches_single(rng):
    xs = np.array([random_operator(3, rng) for _ in range(4)])
    v = alg.vectorize(xs)
    assert v.shape == (4, 9)
    for k in range(4):
        assert np.array_equal(v[k], alg.vectorize(xs[k]))
    assert np.allclose(alg.devectorize(v), xs)


def test_devectorize_rejects_bad_length():
    with pytest.raises(ValueError):
        alg.devectorize(np.zeros(5))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_partial_trace_linearity(seed):
    rng = np.random.default_rng(seed)
    dims = [2, 3, 2]
    x, y = random_operator(12, rng), random_operator(12, rng)
    a, b = rng.normal(size=2)
    for keep in ([0], [1], [0, 2], [1, 2]):
        lhs = alg.partial_trace(a * x + b * y, dims, keep)
        rhs = a * alg.partial_trace(x, dims, keep) + b * alg.partial_trace(y, dims, keep)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_partial_trace_of_product(rng):
    r = [random_density(d, rng) for d in (2, 3, 2)]
    full = alg.kron(*r)
    assert np.allclose(alg.partial_trace(full, [2, 3, 2], [1]), r[1])
    assert np.allclose(alg.partial_trace(full, [2, 3, 2], [0, 2]), np.kron(r[0], r[2]))
    assert np.isclose(alg.partial_trace(full, [2, 3, 2], []).item(), 1.0)


def test_partial_trace_errors():
    with pytest.raises(alg.SiteIndexError):
        alg.partial_trace(np.eye(4), [2, 2], [2])
    with pytest.raises(ValueError):
        alg.partial_trace(np.eye(4), [2, 3], [0])


def test_embed_and_site_errors():
    s = alg.lowering(2)
    e = alg.embed(s, 1, [2, 2, 2])
    assert np.array_equal(e, alg.kron(np.eye(2), s, np.eye(2)))
    with pytest.raises(alg.SiteIndexError):
        alg.embed(s, 3, [2, 2, 2])


def test_kron_sum_acts_on_products(rng):
    la, lb = random_lindbladian(2, rng), random_lindbladian(3, rng)
    x, y = random_operator(2, rng), random_operator(3, rng)
    joint = alg.kron_sum(la, lb) @ alg.vectorize(np.kron(x, y))
    expect = np.kron(alg.apply_super(la, x), y) + np.kron(x, alg.apply_super(lb, y))
    assert np.allclose(alg.devectorize(joint), expect, atol=1e-12)


def test_lindbladian_preserves_trace_and_hermiticity(rng):
    l = random_lindbladian(3, rng)
    rho = random_density(3, rng)
    out = alg.apply_super(l, rho)
    assert abs(np.trace(out)) < 1e-12
    assert alg.hermiticity_error(out) < 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_propagator_factorization(seed, t, s):
    rng = np.random.default_rng(seed)
    l = random_lindbladian(2, rng)
    assert np.allclose(alg.expm(l, t + s), alg.expm(l, t) @ alg.expm(l, s), atol=1e-10)


def test_spectral_propagator_matches_expm(rng):
    l = random_lindbladian(3, rng)
    sd = alg.spectral(l)
    assert np.allclose(sd.reconstruct(), l, atol=1e-9)
    assert np.allclose(sd.propagator(0.7), alg.expm(l, 0.7), atol=1e-9)
    re = sd.eigenvalues.real
    assert np.all(np.diff(re) <= 1e-12)


def test_spectral_defective_raises():
    jordan = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(alg.DefectiveMatrixError):
        alg.spectral(jordan)


def test_expm_rejects_nonfinite():
    with pytest.raises(alg.NonFiniteError):
        alg.expm(np.array([[np.nan]]))


def test_hermitian_basis_orthonormal():
    for d in (2, 3, 4):
        b = alg.hermitian_basis(d)
        assert b.shape == (d * d - 1, d, d)
        gram = np.einsum("aij,bji->ab", b, b)
        assert np.allclose(gram, np.eye(d * d - 1))
        assert np.allclose(np.einsum("aii->a", b), 0)
        assert max(alg.hermiticity_error(x) for x in b) == 0


def test_decaying_inverse_matches_quadrature(rng):
    l = random_lindbladian(2, rng)
    m = random_operator(2, rng)
    m = m - np.trace(m) / 2 * np.eye(2)  # no weight on the stationary mode
    res = alg.decaying_inverse(l, m)
    gap = -np.sort(np.linalg.eigvals(l).real)[-2]
    t_max = 40 / gap  # tail below exp(-40)
    quad, _ = quad_vec(lambda t: alg.devectorize(alg.expm(l, t) @ alg.vectorize(m)), 0, t_max, epsabs=1e-13, epsrel=1e-12)
    assert np.abs(res.value - quad).max() < 1e-8
    assert res.stationary_norm < 1e-12


def test_decaying_inverse_invertible_generator(rng):
    l = -np.eye(3) + 0.1 * random_operator(3, rng)
    m = rng.normal(size=3)
    res = alg.decaying_inverse(l, m, stationary=None)
    assert np.allclose(l @ res.value, -m)


def test_decaying_inverse_nondecay(rng):
    l = random_lindbladian(2, rng)
    m = np.eye(2)
    with pytest.raises(alg.KernelNonDecayError):
        alg.decaying_inverse(l, m)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        alg.decaying_inverse(l, m, strict=False)
    assert any(issubclass(x.category, alg.StationaryComponentWarning) for x in w)


def test_degenerate_stationary_detected():
    # two decoupled dark states
    l = alg.hamiltonian_super(np.diag([0.0, 0.0]).astype(complex))
    with pytest.raises(alg.DegenerateStationaryError):
        alg.stationary_modes(l)


def test_stationary_modes_normalised(rng):
    l = random_lindbladian(2, rng)
    r, lt = alg.stationary_modes(l)
    assert np.isclose(lt @ r, 1)
    assert np.allclose(l @ r, 0, atol=1e-10)


def test_trace_distance_properties(rng):
    a, b = random_density(3, rng), random_density(3, rng)
    d = alg.trace_distance(a, b)
    assert 0 <= d <= 1
    assert np.isclose(d, alg.trace_distance(b, a))
    assert alg.trace_distance(a, a) == 0
    p0, p1 = np.diag([1.0, 0]), np.diag([0, 1.0])
    assert np.isclose(alg.trace_distance(p0, p1), 1)
    with pytest.raises(ValueError):
        alg.trace_distance(random_operator(2, rng), p0)


def test_check_density():
    alg.check_density(np.eye(2) / 2)
    with pytest.raises(ValueError):
        alg.check_density(np.eye(2))
    with pytest.raises(ValueError):
        alg.check_density(np.array([[0.5, 1.0], [0.0, 0.5]]))
    assert alg.min_eigenvalue(np.diag([1.2, -0.2])) == pytest.approx(-0.2)
