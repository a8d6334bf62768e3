"""Second-order (Born) self-consistent projector dynamics.

Each tracked subsystem evolves under its local generator, the mean-field
term of every boundary bond, and a memory integral over its own and its
neighbour's past.  For a bond coupling ``a`` (lowering operator at the
boundary site of the system) to ``b`` (same for the neighbour) the memory
term is

    -J^2 sum_j int dtau { d_j [a^j, S_tau [a, rho]] + s_j [a^j, S_tau(rho a)]
                         + i h_j [a, S_tau rho] } + h.c.,

with ``a^- = a``, ``a^+ = a^+``, ``S_tau`` the free propagator of the
system and the scalar correlation functions ``d_j``, ``s_j`` (environment)
and ``h_j`` (back-action) built from the neighbour's free propagator.  All
states inside the integral are evaluated at ``t - tau``.

Time stepping is Heun (predict, evaluate, correct, evaluate) in the
interaction picture of the local generator: the free part is applied exactly
through the one-step propagator and only the mean-field and memory terms are
extrapolated.  The memory integral uses a composite trapezoid rule on the
step grid, so a run of ``n`` steps costs ``O(n^2)`` per bond.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import algebra as alg
from .meanfield import field_hamiltonian, lindblad_rhs
from .model import SizeCapError, Subsystem
from .results import Trajectory

log = logging.getLogger(__name__)

MAX_OPEN_SITES = 2
MAX_CLOSED_SITES = 8
DEFAULT_TAU_MAX = 25.0  # in units of 1/gamma


class TraceDriftError(RuntimeError):
    pass


class HistoryUnderrunError(IndexError):
    pass


# ---------------------------------------------------------------- propagators


class ClosedPropagator:
    """``S_k X = U(k dt) X U(k dt)^+`` evaluated in the Hamiltonian eigenbasis.

    Operators are carried as flattened eigenbasis matrices; the propagator
    is then an elementwise phase.
    """

    def __init__(self, h: np.ndarray, dt: float, n_tau: int):
        e, v = np.linalg.eigh(h)
        self.v = v
        self.d = h.shape[0]
        self.dt = dt
        self.n_tau = n_tau
        self._de = (e[:, None] - e[None, :]).ravel()
        self.phases = np.exp(-1j * dt * np.arange(n_tau)[:, None] * self._de[None, :])

    def to_basis(self, x: np.ndarray) -> np.ndarray:
        return (self.v.conj().T @ x @ self.v).ravel()

    def from_basis(self, y: np.ndarray) -> np.ndarray:
        return self.v @ y.reshape(self.d, self.d) @ self.v.conj().T

    def heis(self, b: np.ndarray) -> np.ndarray:
        """Rows with ``rows[k] @ to_basis(X) == Tr(b S_k X)``."""
        bt = (self.v.conj().T @ b @ self.v).T.ravel()
        return self.phases * bt[None, :]

    def wsum(self, c: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """``to_basis(sum_k c_k S_k X_k)`` for ``ys[k] = to_basis(X_k)``."""
        n = len(c)
        return np.einsum("k,kD,kD->D", c, self.phases[:n], ys)

    def propagate(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.from_basis(self.phases[k] * self.to_basis(x))


class OpenPropagator:
    """Table of ``exp(k dt L)`` built by repeated multiplication."""

    def __init__(self, l: np.ndarray, dt: float, n_tau: int):
        self.d = int(round(np.sqrt(l.shape[0])))
        self.dt = dt
        self.n_tau = n_tau
        step = alg.expm(l, dt)
        table = np.empty((n_tau,) + l.shape, complex)
        table[0] = np.eye(l.shape[0])
        for k in range(1, n_tau):
            table[k] = step @ table[k - 1]
        self.table = table

    def to_basis(self, x: np.ndarray) -> np.ndarray:
        return alg.vectorize(x)

    def from_basis(self, y: np.ndarray) -> np.ndarray:
        return alg.devectorize(y, self.d)

    def heis(self, b: np.ndarray) -> np.ndarray:
        return np.einsum("i,kij->kj", alg.vectorize(b.T), self.table)

    def wsum(self, c: np.ndarray, ys: np.ndarray) -> np.ndarray:
        n = len(c)
        return np.einsum("k,kij,kj->i", c, self.table[:n], ys)

    def propagate(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.from_basis(self.table[k] @ self.to_basis(x))


def make_propagator(sub: Subsystem, dt: float, n_tau: int):
    if sub.gamma == 0:
        if len(sub.dims) > MAX_CLOSED_SITES:
            raise SizeCapError(f"closed clusters are capped at {MAX_CLOSED_SITES} sites")
        return ClosedPropagator(sub.hamiltonian, dt, n_tau)
    if len(sub.dims) > MAX_OPEN_SITES:
        raise SizeCapError(f"dissipative clusters are capped at {MAX_OPEN_SITES} sites")
    return OpenPropagator(sub.liouvillian, dt, n_tau)


# ---------------------------------------------------------------- correlation functions


def corr_env(kind: str, j: str, rho_past: np.ndarray, prop, k: int, b: np.ndarray) -> complex:
    """Environment correlation ``d_j`` or ``s_j`` at ``tau = k dt``.

    ``rho_past`` is the neighbour state at ``t - tau`` and ``b`` its
    boundary lowering operator.
    """
    bd = b.conj().T
    bj_dag = bd if j == "-" else b
    if kind == "d":
        first = np.trace(bj_dag @ prop.propagate(k, bd @ rho_past))
        second = np.trace(bj_dag @ prop.propagate(k, rho_past)) * np.trace(bd @ rho_past)
        return complex(first - second)
    if kind == "s":
        return complex(np.trace(bj_dag @ prop.propagate(k, bd @ rho_past - rho_past @ bd)))
    raise ValueError(f"unknown correlation kind {kind!r}")


def corr_back(
    j: str,
    rho_sys_past: np.ndarray,
    a: np.ndarray,
    rho_env_past: np.ndarray,
    prop_env,
    k: int,
    b: np.ndarray,
) -> complex:
    """Back-action correlation ``h_j`` at ``tau = k dt``."""
    aj_dag = a.conj().T if j == "-" else a
    bj = b if j == "-" else b.conj().T
    comm = bj @ rho_env_past - rho_env_past @ bj
    return complex(
        1j
        * np.trace(aj_dag @ rho_sys_past)
        * np.trace(b.conj().T @ prop_env.propagate(k, comm))
    )


# ---------------------------------------------------------------- engine


@dataclass(frozen=True)
class Bond:
    system: int
    site: int
    env: int
    env_site: int
    j: float


def collect_bonds(subs: Sequence[Subsystem]) -> list[tuple[Bond, int]]:
    """Boundary bonds with multiplicities, in a fixed order."""
    c = Counter()
    for s, sub in enumerate(subs):
        for bb in sub.boundary_ops:
            c[Bond(s, bb.site, bb.neighbor, bb.neighbor_site, bb.j)] += 1
    return sorted(c.items(), key=lambda kv: (kv[0].system, kv[0].site, kv[0].env, kv[0].env_site, kv[0].j))


class _SiteHistory:
    """Basis representations of the site-dependent operators needed by the kernel."""

    def __init__(self, n_times: int, dim: int):
        shape = (n_times, dim)
        self.comm_a = np.zeros(shape, complex)  # [a, rho]
        self.rho_a = np.zeros(shape, complex)  # rho a
        self.adag_rho = np.zeros(shape, complex)  # a^+ rho
        self.comm_adag = np.zeros(shape, complex)  # [a^+, rho]
        self.exp_a = np.zeros(n_times, complex)  # <a>
        self.exp_adag = np.zeros(n_times, complex)  # <a^+>


class CmopEngine:
    """Histories, propagator tables and the right-hand side for a set of subsystems."""

    def __init__(
        self,
        subs: Sequence[Subsystem],
        dt: float,
        n_steps: int,
        tau_max: float | None = None,
    ):
        self.subs = list(subs)
        self.dt = dt
        self.n_steps = n_steps
        self.bonds = collect_bonds(self.subs)
        open_ = [s.gamma > 0 for s in self.subs]
        if any(open_):
            gamma = min(s.gamma for s in self.subs if s.gamma > 0)
            tau_max = DEFAULT_TAU_MAX / gamma if tau_max is None else tau_max
            self.k_max = min(n_steps, int(round(tau_max / dt)))
        else:
            # no decay: the memory is never truncated
            self.k_max = n_steps
        self.props = [make_propagator(s, dt, max(self.k_max + 1, 2)) for s in self.subs]
        n_times = n_steps + 1
        self.rho = [np.zeros((n_times, s.dim, s.dim), complex) for s in self.subs]
        self.rho_b = [np.zeros((n_times, s.dim * s.dim), complex) for s in self.subs]
        sites = sorted({(b.system, b.site) for b, _ in self.bonds} | {(b.env, b.env_site) for b, _ in self.bonds})
        self.site_hist = {(s, q): _SiteHistory(n_times, self.subs[s].dim ** 2) for s, q in sites}
        self.lowering = {(s, q): self.subs[s].lowering(q) for s, q in sites}
        self.rows = {}
        for s, q in sites:
            a = self.lowering[(s, q)]
            self.rows[(s, q, "a")] = self.props[s].heis(a)
            self.rows[(s, q, "adag")] = self.props[s].heis(a.conj().T)
        self.filled = -1

    def store(self, i: int, states: Sequence[np.ndarray]) -> None:
        if i > self.filled + 1:
            raise HistoryUnderrunError(f"cannot store step {i} after {self.filled}")
        for s, rho in enumerate(states):
            self.rho[s][i] = rho
            self.rho_b[s][i] = self.props[s].to_basis(rho)
        for (s, q), h in self.site_hist.items():
            rho = states[s]
            a = self.lowering[(s, q)]
            ad = a.conj().T
            tb = self.props[s].to_basis
            h.comm_a[i] = tb(a @ rho - rho @ a)
            h.rho_a[i] = tb(rho @ a)
            h.adag_rho[i] = tb(ad @ rho)
            h.comm_adag[i] = tb(ad @ rho - rho @ ad)
            h.exp_a[i] = np.trace(a @ rho)
            h.exp_adag[i] = np.trace(ad @ rho)
        self.filled = i

    def window(self, i: int) -> int:
        return min(i, self.k_max)

    def correlations(self, bond: Bond, i: int, j: str):
        """Arrays ``d_j, s_j, h_j`` over ``tau = 0 .. n dt`` at step ``i``."""
        if i > self.filled:
            raise HistoryUnderrunError(f"step {i} requested, history filled to {self.filled}")
        n = self.window(i)
        sl = slice(i - n, i + 1)
        env = self.site_hist[(bond.env, bond.env_site)]
        sysh = self.site_hist[(bond.system, bond.site)]
        rho_e = self.rho_b[bond.env][sl][::-1]
        # rows for (b^j)^+ : j=- -> b^+, j=+ -> b
        rows_bj = self.rows[(bond.env, bond.env_site, "adag" if j == "-" else "a")][: n + 1]
        rows_bdag = self.rows[(bond.env, bond.env_site, "adag")][: n + 1]
        bdag_rho = env.adag_rho[sl][::-1]
        exp_bdag = env.exp_adag[sl][::-1]
        d = np.einsum("kD,kD->k", rows_bj, bdag_rho) - np.einsum("kD,kD->k", rows_bj, rho_e) * exp_bdag
        s = np.einsum("kD,kD->k", rows_bj, env.comm_adag[sl][::-1])
        comm_bj = (env.comm_a if j == "-" else env.comm_adag)[sl][::-1]
        exp_ajdag = (sysh.exp_adag if j == "-" else sysh.exp_a)[sl][::-1]
        h = 1j * exp_ajdag * np.einsum("kD,kD->k", rows_bdag, comm_bj)
        return d, s, h

    def born_term(self, bond: Bond, i: int) -> np.ndarray:
        n = self.window(i)
        sub = self.subs[bond.system]
        if n == 0 or bond.j == 0:
            return np.zeros((sub.dim, sub.dim), complex)
        sl = slice(i - n, i + 1)
        w = np.full(n + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        prop = self.props[bond.system]
        sysh = self.site_hist[(bond.system, bond.site)]
        comm_a = sysh.comm_a[sl][::-1]
        rho_a = sysh.rho_a[sl][::-1]
        rho_s = self.rho_b[bond.system][sl][::-1]
        a = self.lowering[(bond.system, bond.site)]
        j2 = bond.j**2
        out = np.zeros((sub.dim, sub.dim), complex)
        for j in ("-", "+"):
            d, s, h = self.correlations(bond, i, j)
            aj = a if j == "-" else a.conj().T
            yd = prop.from_basis(prop.wsum(w * d, comm_a) + prop.wsum(w * s, rho_a))
            yh = prop.from_basis(prop.wsum(w * h, rho_s))
            term = -j2 * (aj @ yd - yd @ aj) - 1j * j2 * (a @ yh - yh @ a)
            out += term + term.conj().T
        return out

    def coupling_rhs(self, i: int, born: bool = True) -> list[np.ndarray]:
        """Mean-field plus memory contributions at step ``i``."""
        states = [r[i] for r in self.rho]
        out = []
        for k, sub in enumerate(self.subs):
            h = field_hamiltonian(self.subs, states, k)
            out.append(-1j * (h @ states[k] - states[k] @ h))
        if born:
            for bond, mult in self.bonds:
                out[bond.system] += mult * self.born_term(bond, i)
        return out

    def rhs(self, i: int, born: bool = True) -> list[np.ndarray]:
        """Full time derivative of every tracked state at step ``i``."""
        local = [lindblad_rhs(sub, r[i]) for sub, r in zip(self.subs, self.rho)]
        return [a + b for a, b in zip(local, self.coupling_rhs(i, born))]

    def free_step(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.props[k].propagate(1, x)


def _observables(traj: Trajectory, subs: Sequence[Subsystem]) -> None:
    for k, sub in enumerate(subs):
        rho = traj.states[f"state{k}"]
        for q in range(len(sub.dims)):
            a = sub.lowering(q)
            traj.observables[f"n{k}.{q}"] = np.einsum("ab,tba->t", a.conj().T @ a, rho).real
        for q in range(len(sub.dims) - 1):
            op = sub.lowering(q).conj().T @ sub.lowering(q + 1)
            c = np.einsum("ab,tba->t", op, rho)
            traj.observables[f"re_corr{k}.{q}{q + 1}"] = c.real
            traj.observables[f"im_corr{k}.{q}{q + 1}"] = c.imag


def evolve_cmop(
    subs: Sequence[Subsystem],
    rho0: Sequence[np.ndarray],
    t_final: float,
    dt: float,
    tau_max: float | None = None,
    born: bool = True,
    drift_tol: float = 1e-6,
) -> Trajectory:
    """Integrate the Born-order equations from a product initial state.

    ``rho0[k]`` is the initial state of ``subs[k]``.  States are returned as
    ``state<k>``; observables as ``n<k>.<site>`` and nearest-neighbour
    ``re_/im_corr<k>.<q><q+1>`` within each cluster.  ``born=False`` drops
    the memory term (plain mean field with the same stepping).
    """
    n_steps = int(round(t_final / dt))
    if n_steps < 0 or abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"dt={dt} does not divide t_final={t_final}")
    if len(rho0) != len(subs):
        raise ValueError("one initial state per subsystem is required")
    for r, sub in zip(rho0, subs):
        if r.shape != (sub.dim, sub.dim):
            raise ValueError("initial state does not match its subsystem")
        alg.check_density(r, tol=1e-10)
    eng = CmopEngine(subs, dt, n_steps, tau_max)
    cur = [np.array(r, complex) for r in rho0]
    eng.store(0, cur)
    f0 = eng.coupling_rhs(0, born)
    drift = herm = 0.0
    for i in range(n_steps):
        s_rho = [eng.free_step(k, r) for k, r in enumerate(cur)]
        s_f = [eng.free_step(k, f) for k, f in enumerate(f0)]
        pred = [r + dt * f for r, f in zip(s_rho, s_f)]
        eng.store(i + 1, pred)
        f1 = eng.coupling_rhs(i + 1, born)
        cur = [r + 0.5 * dt * (a + b) for r, a, b in zip(s_rho, s_f, f1)]
        for r in cur:
            if not np.all(np.isfinite(r)):
                raise alg.NonFiniteError(f"non-finite state at step {i + 1}")
            drift = max(drift, abs(np.trace(r) - 1))
            herm = max(herm, alg.hermiticity_error(r))
        if drift > drift_tol:
            raise TraceDriftError(f"trace drift {drift:.3g} at step {i + 1}")
        eng.store(i + 1, cur)
        f0 = eng.coupling_rhs(i + 1, born)
    times = dt * np.arange(n_steps + 1)
    traj = Trajectory(times, {f"state{k}": eng.rho[k].copy() for k in range(len(subs))})
    _observables(traj, subs)
    mineig = min(float(np.linalg.eigvalsh(r).min()) for arr in eng.rho for r in arr)
    traj.diagnostics.update(
        trace_drift=float(drift),
        hermiticity=float(herm),
        min_eigenvalue=mineig,
        memory_steps=float(eng.k_max),
    )
    return traj
