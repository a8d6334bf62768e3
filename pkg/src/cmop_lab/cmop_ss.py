"""Steady states of the Born-order projector equations.

With the memory integral extended to infinity and every state frozen at
``rho``, the Born term of a bond becomes

    B(rho) = Tr_nb L_I int_0^inf exp(tau L0) C L_I (rho (x) rho_nb) dtau,

where ``L0`` is the uncoupled generator of the system plus the neighbour
copy, and ``C X = X - rho (x) Tr_sys X - Tr_nb X (x) rho_nb`` removes the
factorised part.  The integral is evaluated in the joint space as a
decaying inverse of ``L0``.  The steady state is a root of
``F(rho) = L rho + MF(rho) + sum_bonds B(rho)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import algebra as alg
from .exact import null_state
from .meanfield import census_seeds, cluster_solutions, field_hamiltonian, lindblad_rhs, Census
from .model import SizeCapError, Subsystem, build_interaction
from .newton import SingularJacobianError, newton_density
from .results import SteadyResult

log = logging.getLogger(__name__)

MAX_SS_SITES = 2


class NoDecayError(ValueError):
    """Raised for closed subsystems, whose memory kernel never decays."""


@dataclass
class _BondCache:
    sys_site: int
    nb: int
    nb_site: int
    li: np.ndarray
    lu: tuple
    r: np.ndarray
    lt: np.ndarray


class SteadyProblem:
    """Residual of the stationary equations for a set of subsystems.

    Joint generators and their factorisations are built once; each residual
    evaluation then costs one triangular solve per bond.
    """

    def __init__(self, subs: Sequence[Subsystem], born: bool = True):
        self.subs = list(subs)
        for s in self.subs:
            if s.gamma <= 0:
                raise NoDecayError(
                    "steady states need gamma > 0; use the evolve mode for closed systems"
                )
            if len(s.dims) > MAX_SS_SITES:
                raise SizeCapError(f"steady-state clusters are capped at {MAX_SS_SITES} sites")
        self.born = born
        self.local_ss = [null_state(s.liouvillian, s.dim) for s in self.subs]
        self.bonds: list[tuple[int, _BondCache]] = []
        self._joint = {}
        if born:
            for k, s in enumerate(self.subs):
                for bb in s.boundary_ops:
                    self.bonds.append((k, self._bond_cache(k, bb)))

    def _bond_cache(self, k: int, bb) -> _BondCache:
        s, e = self.subs[k], self.subs[bb.neighbor]
        key = (k, bb.neighbor)
        if key not in self._joint:
            l0 = alg.kron_sum(s.liouvillian, e.liouvillian)
            r = alg.vectorize(np.kron(self.local_ss[k], self.local_ss[bb.neighbor]))
            lt = alg.vectorize(np.eye(s.dim * e.dim)).conj()
            lt = lt / (lt @ r)
            scale = max(1.0, np.linalg.norm(l0, ord=np.inf))
            lu = sla.lu_factor(l0 - scale * np.outer(r, lt))
            self._joint[key] = (lu, r, lt)
        lu, r, lt = self._joint[key]
        li = build_interaction(s.dims, e.dims, [(bb.site, bb.neighbor_site)], bb.j)
        return _BondCache(bb.site, bb.neighbor, bb.neighbor_site, li, lu, r, lt)

    def source(self, k: int, bc: _BondCache, rho_s: np.ndarray, rho_e: np.ndarray,
               ref_s: np.ndarray | None = None, ref_e: np.ndarray | None = None) -> np.ndarray:
        """``C L_I (rho_s (x) rho_e)`` as a joint-space vector.

        ``ref_s``/``ref_e`` are the projector reference states (default: the
        states themselves).
        """
        ref_s = rho_s if ref_s is None else ref_s
        ref_e = rho_e if ref_e is None else ref_e
        ds, de = rho_s.shape[0], rho_e.shape[0]
        y = alg.devectorize(bc.li @ alg.vectorize(np.kron(rho_s, rho_e)), ds * de)
        y4 = y.reshape(ds, de, ds, de)
        tr_s = np.einsum("iaib->ab", y4)
        tr_e = np.einsum("aibi->ab", y4)
        c = y - np.kron(ref_s, tr_s) - np.kron(tr_e, ref_e)
        return alg.vectorize(c)

    def bond_term(self, k: int, bc: _BondCache, rho_s, rho_e, ref_s=None, ref_e=None) -> np.ndarray:
        m = self.source(k, bc, rho_s, rho_e, ref_s, ref_e)
        comp = bc.lt @ m
        if abs(comp) > 1e-8 * max(np.linalg.norm(m), 1e-300):
            raise alg.KernelNonDecayError(f"stationary component {abs(comp):.3g} in the Born source")
        x = -sla.lu_solve(bc.lu, m - comp * bc.r)
        ds, de = rho_s.shape[0], rho_e.shape[0]
        z = alg.devectorize(bc.li @ x, ds * de).reshape(ds, de, ds, de)
        return np.einsum("aibi->ab", z)

    def joint_integral(self, k: int, idx: int, rho_s, rho_e) -> np.ndarray:
        """The joint-space integral ``X`` itself for bond ``idx`` of subsystem ``k``."""
        bc = [b for kk, b in self.bonds if kk == k][idx]
        m = self.source(k, bc, rho_s, rho_e)
        return -sla.lu_solve(bc.lu, m - (bc.lt @ m) * bc.r)

    def residual(self, states: Sequence[np.ndarray]) -> list[np.ndarray]:
        out = [
            lindblad_rhs(s, r, field_hamiltonian(self.subs, states, k))
            for k, (s, r) in enumerate(zip(self.subs, states))
        ]
        for k, bc in self.bonds:
            out[k] = out[k] + self.bond_term(k, bc, states[k], states[bc.nb])
        return out

    def frozen_generator(self, rho_bar: np.ndarray) -> np.ndarray:
        """Superoperator of ``F`` linearised with every environment frozen at ``rho_bar``.

        Only meaningful for a single translation-invariant subsystem.
        """
        s = self.subs[0]
        h = s.hamiltonian + field_hamiltonian([s], [rho_bar], 0)
        l = alg.hamiltonian_super(h)
        for c in s.jump_ops():
            l = l + alg.dissipator_super(c, s.gamma)
        if self.bonds:
            cols = []
            for q in range(s.dim * s.dim):
                e = np.zeros(s.dim * s.dim, complex)
                e[q] = 1
                x = alg.devectorize(e, s.dim)
                b = sum(self.bond_term(0, bc, x, rho_bar, rho_bar, rho_bar) for _, bc in self.bonds)
                cols.append(alg.vectorize(b))
            l = l + np.array(cols).T
        return l


def _single(problem: SteadyProblem):
    if len(problem.subs) != 1:
        raise NotImplementedError("steady-state solves support a single tracked subsystem")

    def f(rho):
        return problem.residual([rho])[0]

    return f


def fixed_point(problem: SteadyProblem, rho0: np.ndarray, alpha: float = 0.5,
                tol: float = 1e-10, max_iter: int = 1000):
    """Damped iteration ``rho <- (1-alpha) rho + alpha null(L_frozen(rho))``."""
    f = _single(problem)
    rho = rho0
    res = np.linalg.norm(f(rho))
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        new = (1 - alpha) * rho + alpha * null_state(problem.frozen_generator(rho), rho.shape[0])
        new_res = np.linalg.norm(f(new))
        if new_res > res and alpha > 1e-3:
            alpha *= 0.5
        rho, res = new, new_res
    return rho, float(res), it


def _site_states(sub: Subsystem, rho: np.ndarray) -> dict[str, np.ndarray]:
    out = {"cluster": rho, "site": alg.partial_trace(rho, sub.dims, [0])}
    if len(sub.dims) > 1:
        out["pair"] = alg.partial_trace(rho, sub.dims, [0, 1])
    return out


def solve_steady(
    subs: Sequence[Subsystem],
    rho0: np.ndarray | None = None,
    method: str = "newton",
    born: bool = True,
    tol: float = 1e-10,
    alpha: float = 0.5,
    max_iter: int | None = None,
) -> SteadyResult:
    """Stationary state of a single-subsystem ansatz.

    ``method`` is ``"newton"`` (real traceless-Hermitian chart, finite
    difference Jacobian) or ``"fixed-point"``.  The default start is the
    uncoupled stationary state.  ``born=False`` gives the mean-field root.
    """
    problem = SteadyProblem(subs, born)
    f = _single(problem)
    sub = problem.subs[0]
    start = problem.local_ss[0] if rho0 is None else np.asarray(rho0, complex)
    if method == "newton":
        nr = newton_density(f, start, tol=tol, max_iter=max_iter or 50)
        rho, res, it, ok = nr.rho, nr.residual, nr.iterations, nr.converged
        diag = {"jacobian_cond": nr.jacobian_cond}
    elif method == "fixed-point":
        rho, res, it = fixed_point(problem, start, alpha, tol, max_iter or 1000)
        ok, diag = res < tol, {}
    else:
        raise ValueError(f"unknown method {method!r}")
    rho = 0.5 * (rho + rho.conj().T)
    diag["min_eigenvalue"] = alg.min_eigenvalue(rho)
    return SteadyResult(_site_states(sub, rho), res, it, method, bool(ok), diag)


def steady_census(
    subs: Sequence[Subsystem],
    n_starts: int = 8,
    seed: int = 0,
    born: bool = True,
    tol: float = 1e-10,
    physical_tol: float = 1e-6,
    extra_seeds: Sequence[np.ndarray] = (),
) -> tuple[Census, list]:
    """Multi-start root search.

    Seeds: vacuum, fully excited, maximally mixed, the uncoupled stationary
    state, ``extra_seeds`` (e.g. mean-field roots), then random states.
    Returns the census of physical roots (minimum eigenvalue above
    ``-physical_tol``) and the list of unphysical roots found, which are
    reported but not counted.
    """
    problem = SteadyProblem(subs, born)
    f = _single(problem)
    rng = np.random.default_rng(seed)
    base = census_seeds(problem.subs[0].dim, n_starts, rng)
    seeds = base[:3] + [problem.local_ss[0]] + [np.asarray(x, complex) for x in extra_seeds] + base[3:]
    cands, bad = [], []
    for k, s in enumerate(seeds):
        try:
            nr = newton_density(f, s, tol=tol)
        except (SingularJacobianError, alg.AlgebraError):
            nr = None
        if nr is None or not nr.converged:
            try:
                rho_it, _, _ = fixed_point(problem, s, tol=tol, max_iter=200)
                nr = newton_density(f, rho_it, tol=tol)
            except (SingularJacobianError, alg.AlgebraError, np.linalg.LinAlgError):
                nr = None
        if nr is not None and nr.converged:
            cands.append((k, 0.5 * (nr.rho + nr.rho.conj().T), nr.residual))
        else:
            bad.append(k)
    roots = cluster_solutions(cands)
    phys = [r for r in roots if alg.min_eigenvalue(r.rho) > -physical_tol]
    unphys = [r for r in roots if alg.min_eigenvalue(r.rho) <= -physical_tol]
    return Census(phys, bad, seed), unphys


# ---------------------------------------------------------------- functional forms


def born_term_ss(rho_bar: np.ndarray, subs: Sequence[Subsystem]) -> np.ndarray:
    """Frozen Born operator ``sum_bonds B(rho_bar)`` of a single-subsystem ansatz."""
    problem = SteadyProblem(subs)
    _single(problem)
    return sum(
        (problem.bond_term(0, bc, rho_bar, rho_bar) for _, bc in problem.bonds),
        np.zeros_like(rho_bar, dtype=complex),
    )


def residual(rho: np.ndarray, subs: Sequence[Subsystem], born: bool = True) -> np.ndarray:
    problem = SteadyProblem(subs, born)
    return _single(problem)(np.asarray(rho, complex))


def solve_steady_cluster2(p, lattice=None, **kw) -> SteadyResult:
    """Two-site cluster c-MoP steady state on a ring; ``states["site"]`` is the
    single-site reduction."""
    from .model import make_ansatz

    if lattice is not None and lattice.kind != "ring1d":
        raise ValueError("two-site cluster steady states are implemented for rings")
    return solve_steady(make_ansatz("cluster-2", p, lattice), **kw)
