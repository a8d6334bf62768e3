"""Gutzwiller mean-field dynamics and fixed points.

The neighbour of every boundary bond is replaced by its expectation values,
``d rho/dt = L rho + i j sum [a <b^+> + a^+ <b>, rho]``, where ``a`` acts on the
tracked subsystem and ``b`` on the neighbouring one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import algebra as alg
from .exact import null_state
from .model import Subsystem
from .newton import SingularJacobianError, newton_density
from .results import Trajectory

log = logging.getLogger(__name__)


def lindblad_rhs(sub: Subsystem, rho: np.ndarray, h_extra: np.ndarray | None = None) -> np.ndarray:
    h = sub.hamiltonian if h_extra is None else sub.hamiltonian + h_extra
    out = -1j * (h @ rho - rho @ h)
    for c in sub.jump_ops():
        cd = c.conj().T
        out += sub.gamma * (c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c))
    return out


def field_hamiltonian(subs: Sequence[Subsystem], states: Sequence[np.ndarray], k: int) -> np.ndarray:
    """Mean-field Hamiltonian ``-j sum (a <b^+> + a^+ <b>)`` on subsystem ``k``."""
    sub = subs[k]
    h = np.zeros((sub.dim, sub.dim), complex)
    for bb in sub.boundary_ops:
        nb = subs[bb.neighbor]
        b_exp = np.trace(nb.lowering(bb.neighbor_site) @ states[bb.neighbor])
        a = sub.lowering(bb.site)
        h += -bb.j * (a * np.conj(b_exp) + a.conj().T * b_exp)
    return h


def mf_rhs(states: Sequence[np.ndarray], subs: Sequence[Subsystem]) -> list[np.ndarray]:
    return [
        lindblad_rhs(sub, rho, field_hamiltonian(subs, states, k))
        for k, (sub, rho) in enumerate(zip(subs, states))
    ]


def mf_evolve(
    states0: Sequence[np.ndarray],
    subs: Sequence[Subsystem],
    t_final: float,
    dt: float,
) -> Trajectory:
    """Fixed-step RK4 integration.  States are recorded as ``state<k>``."""
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("dt must divide t_final")
    y = [np.array(s, complex) for s in states0]
    hist = [[s.copy()] for s in y]
    for _ in range(n):
        k1 = mf_rhs(y, subs)
        k2 = mf_rhs([a + 0.5 * dt * b for a, b in zip(y, k1)], subs)
        k3 = mf_rhs([a + 0.5 * dt * b for a, b in zip(y, k2)], subs)
        k4 = mf_rhs([a + dt * b for a, b in zip(y, k3)], subs)
        y = [a + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        if not all(np.all(np.isfinite(s)) for s in y):
            raise alg.NonFiniteError("mean-field state became non-finite")
        for h, s in zip(hist, y):
            h.append(s.copy())
    times = dt * np.arange(n + 1)
    traj = Trajectory(times, {f"state{k}": np.array(h) for k, h in enumerate(hist)})
    traj.diagnostics["trace_drift"] = float(
        max(np.abs(np.einsum("tii->t", v) - 1).max() for v in traj.states.values())
    )
    return traj


# ---------------------------------------------------------------- fixed points


def _single_rhs(sub: Subsystem, rho: np.ndarray) -> np.ndarray:
    return mf_rhs([rho], [sub])[0]


def frozen_fixed_point(sub: Subsystem, rho_bar: np.ndarray) -> np.ndarray:
    """Stationary state of the linear generator with the field frozen at ``rho_bar``."""
    h = sub.hamiltonian + field_hamiltonian([sub], [rho_bar], 0)
    l = alg.hamiltonian_super(h)
    for c in sub.jump_ops():
        l = l + alg.dissipator_super(c, sub.gamma)
    return null_state(l, sub.dim)


def damped_iteration(
    sub: Subsystem,
    rho0: np.ndarray,
    alpha: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[np.ndarray, float, int]:
    """Mixing iteration ``rho <- (1-alpha) rho + alpha F(rho)``; ``alpha`` halves
    whenever the residual grows."""
    rho = rho0
    res = np.linalg.norm(_single_rhs(sub, rho))
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        new = (1 - alpha) * rho + alpha * frozen_fixed_point(sub, rho)
        new_res = np.linalg.norm(_single_rhs(sub, new))
        if new_res > res and alpha > 1e-3:
            alpha *= 0.5
        rho, res = new, new_res
    return rho, float(res), it


@dataclass
class FixedPoint:
    rho: np.ndarray
    residual: float
    seeds: list[int] = field(default_factory=list)


@dataclass
class Census:
    fixed_points: list[FixedPoint]
    nonconvergent: list[int]
    rng_seed: int

    @property
    def count(self) -> int:
        return len(self.fixed_points)


def census_seeds(dim: int, n_random: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Vacuum, fully excited, maximally mixed, then random density matrices."""
    vac = np.zeros((dim, dim), complex)
    vac[0, 0] = 1
    full = np.zeros((dim, dim), complex)
    full[-1, -1] = 1
    seeds = [vac, full, np.eye(dim) / dim]
    for _ in range(n_random):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        r = g @ g.conj().T
        seeds.append(r / np.trace(r))
    return seeds


def cluster_solutions(cands: list[tuple[int, np.ndarray, float]], threshold: float = 1e-6) -> list[FixedPoint]:
    """Merge candidate roots closer than ``threshold`` in trace distance."""
    cands = sorted(cands, key=lambda c: (tuple(np.round(np.diag(c[1]).real, 8)), c[0]))
    out: list[FixedPoint] = []
    for seed, rho, res in cands:
        for fp in out:
            if alg.trace_distance(fp.rho, rho) < threshold:
                fp.seeds.append(seed)
                if res < fp.residual:
                    fp.rho, fp.residual = rho, res
                break
        else:
            out.append(FixedPoint(rho, res, [seed]))
    out.sort(key=lambda fp: fp.seeds[0])
    return out


def mf_steady_census(
    sub: Subsystem,
    n_starts: int = 8,
    seed: int = 0,
    alpha: float = 0.5,
    tol: float = 1e-10,
) -> Census:
    """Distinct mean-field fixed points of a uniform ansatz from many seeds.

    Each seed runs the damped frozen-field iteration; its end point, and the
    seed itself, are then polished by Newton on the mean-field residual so
    that unstable roots of the iteration are found as well.
    """
    if sub.gamma <= 0:
        raise ValueError("mean-field census requires gamma > 0")
    rng = np.random.default_rng(seed)
    seeds = census_seeds(sub.dim, n_starts, rng)
    cands, bad = [], []
    for k, s in enumerate(seeds):
        found = False
        rho_it, res_it, _ = damped_iteration(sub, s, alpha=alpha, tol=tol)
        for start in (rho_it, s):
            try:
                nr = newton_density(lambda r: _single_rhs(sub, r), start, tol=tol)
            except SingularJacobianError:
                continue
            if nr.converged:
                cands.append((k, nr.rho, nr.residual))
                found = True
        if not found:
            bad.append(k)
            log.debug("mean-field seed %d did not converge (residual %.3g)", k, res_it)
    return Census(cluster_solutions(cands), bad, seed)
