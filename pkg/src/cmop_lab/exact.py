"""Brute-force reference solutions of the full lattice master equation."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from . import algebra as alg
from .model import (
    NUMBER,
    SIGMA,
    LatticeSpec,
    ModelParams,
    SizeCapError,
    build_full_liouvillian,
)
from .results import SteadyResult, Trajectory

MAX_STATEVECTOR_SITES = 12


class UniquenessError(RuntimeError):
    pass


def _n_steps(t_final: float, dt: float) -> int:
    n = int(round(t_final / dt))
    if n < 0 or abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"dt={dt} does not divide t_final={t_final}")
    return n


def reduced_states(x: np.ndarray, dims, clusters) -> dict[tuple[int, ...], np.ndarray]:
    return {c: alg.partial_trace(x, dims, c) for c in clusters}


def evolve_full(
    lattice: LatticeSpec,
    p: ModelParams,
    r0: np.ndarray,
    t_final: float,
    dt: float,
    clusters=(),
) -> Trajectory:
    """Propagate the full density matrix with a cached ``exp(dt L)``.

    Single-site reduced states of every site are recorded as ``site<k>``;
    each extra cluster (tuple of sites) as ``"c" + "-".join(sites)``.
    """
    n = lattice.n_sites
    dims = [p.local_dim] * n
    l = build_full_liouvillian(lattice, p)
    alg.check_density(r0, tol=1e-10)
    prop = alg.expm(l, dt)
    steps = _n_steps(t_final, dt)
    wanted = [(k,) for k in range(n)] + [tuple(c) for c in clusters]
    labels = [f"site{k}" for k in range(n)] + ["c" + "-".join(map(str, c)) for c in clusters]
    states = {lab: [] for lab in labels}
    v = alg.vectorize(np.asarray(r0, complex))
    d = r0.shape[0]
    drift, herm, mineig = 0.0, 0.0, np.inf
    for i in range(steps + 1):
        if i:
            v = prop @ v
        r = alg.devectorize(v, d)
        if not np.all(np.isfinite(r)):
            raise alg.NonFiniteError(f"non-finite state at step {i}")
        drift = max(drift, abs(np.trace(r) - 1))
        herm = max(herm, alg.hermiticity_error(r))
        mineig = min(mineig, alg.min_eigenvalue(r))
        for lab, c in zip(labels, wanted):
            states[lab].append(alg.partial_trace(r, dims, c))
    times = dt * np.arange(steps + 1)
    out = Trajectory(times, {k: np.array(v_) for k, v_ in states.items()})
    for k in range(n):
        out.observables[f"n{k}"] = np.einsum("ab,tba->t", NUMBER, out.states[f"site{k}"]).real
    out.diagnostics.update(trace_drift=float(drift), hermiticity=float(herm), min_eigenvalue=float(mineig))
    return out


def null_state(l: np.ndarray, dim: int) -> np.ndarray:
    """Unit-trace null vector of a trace-preserving generator."""
    a = np.array(l, dtype=complex)
    # the trace functional is a left null vector, so any row may be replaced
    a[0, :] = alg.vectorize(np.eye(dim))
    b = np.zeros(a.shape[0], complex)
    b[0] = 1.0
    rho = alg.devectorize(np.linalg.solve(a, b), dim)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_full(
    lattice: LatticeSpec,
    p: ModelParams,
    check_unique: bool = True,
) -> SteadyResult:
    """Stationary state of the full lattice with reduced one- and two-site states.

    Uniqueness is certified by the second-smallest singular value of the
    Liouvillian exceeding ``1e-8 gamma``.
    """
    if p.gamma <= 0:
        raise ValueError("steady state requires gamma > 0")
    n = lattice.n_sites
    dims = [p.local_dim] * n
    l = build_full_liouvillian(lattice, p)
    d = int(np.prod(dims))
    rho = null_state(l, d)
    residual = float(np.linalg.norm(l @ alg.vectorize(rho)))
    diag = {"residual": residual}
    if check_unique:
        sv = np.sort(sla.svdvals(l))
        diag["second_singular_value"] = float(sv[1])
        if sv[1] <= 1e-8 * p.gamma:
            raise UniquenessError(f"null space is degenerate (sigma_2 = {sv[1]:.3g})")
    if residual > 1e-10:
        raise RuntimeError(f"steady-state residual {residual:.3g} above 1e-10")
    states = {"full": rho, "site": alg.partial_trace(rho, dims, [0])}
    for k in range(n):
        states[f"site{k}"] = alg.partial_trace(rho, dims, [k])
    if n > 1:
        nb = 1 if 1 in lattice.neighbors[0] else lattice.neighbors[0][0]
        states["pair"] = alg.partial_trace(rho, dims, sorted({0, nb}))
    diag["min_eigenvalue"] = alg.min_eigenvalue(rho)
    return SteadyResult(states, residual, method="null-space", diagnostics=diag)


# ---------------------------------------------------------------- closed systems


def _popcount(x: np.ndarray) -> np.ndarray:
    c = np.zeros_like(x)
    y = x.copy()
    while np.any(y):
        c += y & 1
        y >>= 1
    return c


class NumberSectorHamiltonian:
    """Block eigendecomposition of the drive-free Hamiltonian by excitation number."""

    def __init__(self, lattice: LatticeSpec, p: ModelParams):
        if p.omega != 0:
            raise ValueError("number-sector decomposition requires omega = 0")
        n = lattice.n_sites
        if n > MAX_STATEVECTOR_SITES:
            raise SizeCapError(f"{n} sites exceed the statevector cap of {MAX_STATEVECTOR_SITES}")
        self.n = n
        states = np.arange(2**n)
        counts = _popcount(states)
        self.blocks = []
        for k in range(n + 1):
            basis = states[counts == k]
            index = {int(s): i for i, s in enumerate(basis)}
            h = np.diag(np.full(len(basis), p.delta * k)).astype(float)
            for a, b in lattice.bonds:
                ba, bb = 1 << (n - 1 - a), 1 << (n - 1 - b)
                for i, s in enumerate(basis):
                    s = int(s)
                    if (s & ba) and not (s & bb):
                        h[index[s ^ ba ^ bb], i] += -p.j
                        h[i, index[s ^ ba ^ bb]] += -p.j
            e, v = np.linalg.eigh(h)
            self.blocks.append((basis, e, v))

    def evolve(self, psi0: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros_like(psi0, dtype=complex)
        for basis, e, v in self.blocks:
            amp = psi0[basis]
            if not np.any(amp):
                continue
            out[basis] = v @ (np.exp(-1j * e * t) * (v.T @ amp))
        return out


def product_statevector(bits) -> np.ndarray:
    n = len(bits)
    psi = np.zeros(2**n, complex)
    idx = int("".join(str(int(b)) for b in bits), 2)
    psi[idx] = 1.0
    return psi


def _reduced_from_psi(psi: np.ndarray, n: int, sites) -> np.ndarray:
    t = psi.reshape((2,) * n)
    rest = [k for k in range(n) if k not in sites]
    m = np.transpose(t, list(sites) + rest).reshape(2 ** len(sites), -1)
    return m @ m.conj().T


def closed_evolve_statevector(
    lattice: LatticeSpec,
    p: ModelParams,
    psi0: np.ndarray,
    t_final: float,
    dt: float,
    clusters=((0,), (1,), (0, 1)),
) -> Trajectory:
    """Pure-state evolution for the closed (gamma = omega = 0) lattice.

    Observables: ``n<k>`` per site, ``n_total``, and for every two-site
    cluster ``(a, b)`` the correlation ``<s_a^+ s_b>`` as ``re_/im_corr<a><b>``.
    """
    if p.gamma != 0 or p.omega != 0:
        raise ValueError("closed evolution requires gamma = omega = 0")
    n = lattice.n_sites
    psi0 = np.asarray(psi0, complex)
    if psi0.shape != (2**n,):
        raise ValueError("statevector size does not match the lattice")
    psi0 = psi0 / np.linalg.norm(psi0)
    ham = NumberSectorHamiltonian(lattice, p)
    steps = _n_steps(t_final, dt)
    times = dt * np.arange(steps + 1)
    labels = ["c" + "-".join(map(str, c)) for c in clusters]
    states = {lab: np.empty((steps + 1, 2 ** len(c), 2 ** len(c)), complex) for lab, c in zip(labels, clusters)}
    occ = np.empty((steps + 1, n))
    masks = [((np.arange(2**n) >> (n - 1 - k)) & 1).astype(bool) for k in range(n)]
    for i, t in enumerate(times):
        psi = ham.evolve(psi0, t)
        prob = np.abs(psi) ** 2
        occ[i] = [prob[m].sum() for m in masks]
        for lab, c in zip(labels, clusters):
            states[lab][i] = _reduced_from_psi(psi, n, list(c))
    out = Trajectory(times, states)
    for k in range(n):
        out.observables[f"n{k}"] = occ[:, k]
    out.observables["n_total"] = occ.sum(axis=1)
    corr_op = np.kron(SIGMA.conj().T, SIGMA)
    for lab, c in zip(labels, clusters):
        if len(c) == 2:
            corr = np.einsum("ab,tba->t", corr_op, states[lab])
            out.observables[f"re_corr{c[0]}{c[1]}"] = corr.real
            out.observables[f"im_corr{c[0]}{c[1]}"] = corr.imag
    return out
