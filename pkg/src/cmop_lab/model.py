"""Driven-dissipative two-level lattice: parameters, topologies and generators.

Each site carries ``H_n = delta n + omega/2 (s + s^+)`` and decay at rate
``gamma`` through ``s = |0><1|``; nearest neighbours hop with
``H_I = -j sum_<n,m> (s_n^+ s_m + s_n s_m^+)``.  Site 0 is the leftmost
(most significant) tensor factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import algebra as alg

#: largest lattice whose full Liouvillian is built densely (4**6 = 4096)
MAX_DENSE_SITES = 6
#: largest Hilbert dimension for which a Subsystem builds its superoperator
MAX_SUPER_HILBERT = 64


class TopologyError(ValueError):
    pass


class SizeCapError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    delta: float = 0.0
    omega: float = 0.0
    gamma: float = 1.0
    j: float = 0.0
    local_dim: int = 2

    def __post_init__(self):
        for name in ("delta", "omega", "gamma", "j"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.local_dim != 2:
            raise NotImplementedError("only two-level sites are supported")

    def replace(self, **kw) -> "ModelParams":
        return ModelParams(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class LatticeSpec:
    kind: str
    n_sites: int
    neighbors: tuple[tuple[int, ...], ...]
    z: int

    @property
    def periodic(self) -> bool:
        return self.kind != "chain1d_open"

    @cached_property
    def bonds(self) -> tuple[tuple[int, int], ...]:
        """Every nearest-neighbour pair once, as ``(low, high)``."""
        out = set()
        for a, nbs in enumerate(self.neighbors):
            for b in nbs:
                out.add((min(a, b), max(a, b)))
        return tuple(sorted(out))

    def validate(self) -> None:
        for a, nbs in enumerate(self.neighbors):
            if len(set(nbs)) != len(nbs) or a in nbs:
                raise TopologyError(f"site {a} has repeated or self neighbours {nbs}")
            for b in nbs:
                if a not in self.neighbors[b]:
                    raise TopologyError(f"neighbour relation not symmetric at ({a}, {b})")


def ring1d(n: int) -> LatticeSpec:
    if n < 3:
        raise TopologyError("a ring needs at least 3 sites for distinct neighbours")
    nb = tuple(((k - 1) % n, (k + 1) % n) for k in range(n))
    return LatticeSpec("ring1d", n, nb, 2)


def chain1d_open(n: int) -> LatticeSpec:
    if n < 1:
        raise TopologyError("empty chain")
    nb = tuple(tuple(x for x in (k - 1, k + 1) if 0 <= x < n) for k in range(n))
    return LatticeSpec("chain1d_open", n, nb, 2 if n > 2 else n - 1)


def torus2d_5site() -> LatticeSpec:
    # Z_5 with offsets +-1 (one axis) and +-2 (the other)
    nb = tuple(((k + 1) % 5, (k - 1) % 5, (k + 2) % 5, (k - 2) % 5) for k in range(5))
    return LatticeSpec("torus2d_5site", 5, nb, 4)


def torus2d(L: int) -> LatticeSpec:
    if L < 3:
        raise TopologyError("an LxL torus needs L >= 3")

    def idx(x, y):
        return (x % L) * L + (y % L)

    nb = tuple(
        (idx(x + 1, y), idx(x - 1, y), idx(x, y + 1), idx(x, y - 1))
        for x in range(L)
        for y in range(L)
    )
    return LatticeSpec("torus2d_LxL", L * L, nb, 4)


def make_lattice(kind: str, n_sites: int | None = None) -> LatticeSpec:
    if kind == "ring1d":
        lat = ring1d(n_sites)
    elif kind == "chain1d_open":
        lat = chain1d_open(n_sites)
    elif kind == "torus2d_5site":
        if n_sites not in (None, 5):
            raise TopologyError("torus2d_5site has exactly 5 sites")
        lat = torus2d_5site()
    elif kind == "torus2d_LxL":
        L = int(round(math.sqrt(n_sites)))
        if L * L != n_sites:
            raise TopologyError("torus2d_LxL needs a square number of sites")
        lat = torus2d(L)
    else:
        raise TopologyError(f"unknown lattice kind {kind!r}")
    lat.validate()
    return lat


# ---------------------------------------------------------------- local operators

SIGMA = alg.lowering(2)
SIGMA_DAG = SIGMA.conj().T
NUMBER = SIGMA_DAG @ SIGMA


def site_hamiltonian(p: ModelParams) -> np.ndarray:
    return p.delta * NUMBER + 0.5 * p.omega * (SIGMA + SIGMA_DAG)


def build_site_liouvillian(p: ModelParams) -> np.ndarray:
    return alg.hamiltonian_super(site_hamiltonian(p)) + alg.dissipator_super(SIGMA, p.gamma)


def hopping(a: np.ndarray, b: np.ndarray, j: float) -> np.ndarray:
    """``-j (a^+ b + a b^+)`` for already-embedded lowering operators."""
    return -j * (a.conj().T @ b + a @ b.conj().T)


def build_interaction(
    sys_dims: Sequence[int],
    nb_dims: Sequence[int],
    bonds: Sequence[tuple[int, int]],
    j: float,
) -> np.ndarray:
    """``-i[H_I, .]`` on ``kron(system, neighbour)`` for bonds ``(sys_site, nb_site)``."""
    dims = list(sys_dims) + list(nb_dims)
    ns = len(sys_dims)
    h = np.zeros((int(np.prod(dims)),) * 2, complex)
    for a, b in bonds:
        if not (0 <= a < ns and 0 <= b < len(nb_dims)):
            raise TopologyError(f"bond ({a}, {b}) not contained in the subsystem pair")
        sa = alg.embed(SIGMA, a, dims)
        sb = alg.embed(SIGMA, ns + b, dims)
        h += hopping(sa, sb, j)
    return alg.hamiltonian_super(h)


# ---------------------------------------------------------------- clusters


@dataclass(frozen=True)
class BoundaryBond:
    """Cross-boundary bond: ``site`` of this cluster couples to ``neighbor_site``
    of subsystem ``neighbor`` with hopping ``j``."""

    site: int
    neighbor: int
    neighbor_site: int
    j: float
    bond: tuple[int, int] = (0, 0)


@dataclass(frozen=True, eq=False)
class Subsystem:
    sites: tuple[int, ...]
    dims: tuple[int, ...]
    hamiltonian: np.ndarray
    gamma: float
    boundary_ops: tuple[BoundaryBond, ...]
    intra_bonds: tuple[tuple[int, int], ...]
    closed: bool = False
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def lowering(self, site: int) -> np.ndarray:
        return alg.embed(SIGMA, site, self.dims)

    def jump_ops(self) -> list[np.ndarray]:
        if self.gamma == 0:
            return []
        return [self.lowering(k) for k in range(len(self.dims))]

    @property
    def liouvillian(self) -> np.ndarray:
        if "L" not in self._cache:
            if self.dim > MAX_SUPER_HILBERT:
                raise SizeCapError(
                    f"superoperator of a {self.dim}-dim cluster exceeds the dense cap; "
                    "use the Hamiltonian (closed) path"
                )
            l = alg.hamiltonian_super(self.hamiltonian)
            for c in self.jump_ops():
                l = l + alg.dissipator_super(c, self.gamma)
            self._cache["L"] = l
        return self._cache["L"]


def _check_contiguous(sites: Sequence[int], lattice: LatticeSpec) -> None:
    n = lattice.n_sites
    for a, b in zip(sites, sites[1:]):
        step = (b - a) % n if lattice.periodic else b - a
        if step != 1:
            raise TopologyError(f"cluster sites {tuple(sites)} are not contiguous")


def uniform_assignment(sites: Sequence[int], lattice: LatticeSpec) -> Callable[[int], tuple[int, int]]:
    """Translation-invariant tiling: every cluster is a copy of this one."""
    m, s0, n = len(sites), sites[0], lattice.n_sites
    return lambda g: (0, ((g - s0) % n) % m)


def build_cluster(
    sites: Sequence[int],
    p: ModelParams,
    lattice: LatticeSpec,
    closed: bool = False,
    assign: Callable[[int], tuple[int, int]] | None = None,
) -> Subsystem:
    """Cluster of contiguous ``sites`` with its intra-cluster bonds.

    ``assign`` maps an outside site to ``(subsystem id, local site)``; the
    default is the uniform tiling (valid when the cluster size divides the
    lattice size).
    """
    sites = tuple(sites)
    if len(set(sites)) != len(sites) or not sites:
        raise TopologyError("cluster sites must be distinct and non-empty")
    for s in sites:
        if not 0 <= s < lattice.n_sites:
            raise TopologyError(f"site {s} not in lattice")
    _check_contiguous(sites, lattice)
    if closed and p.gamma != 0:
        raise ValueError("a closed cluster needs gamma = 0")
    if assign is None:
        assign = uniform_assignment(sites, lattice)
    dims = (p.local_dim,) * len(sites)
    local = {g: k for k, g in enumerate(sites)}
    h = sum(alg.embed(site_hamiltonian(p), k, dims) for k in range(len(sites)))
    intra, boundary = [], []
    for a, b in lattice.bonds:
        if a in local and b in local:
            intra.append((a, b))
            h = h + hopping(alg.embed(SIGMA, local[a], dims), alg.embed(SIGMA, local[b], dims), p.j)
        elif a in local or b in local:
            inside, outside = (a, b) if a in local else (b, a)
            nid, nsite = assign(outside)
            boundary.append(BoundaryBond(local[inside], nid, nsite, p.j, (a, b)))
    boundary.sort(key=lambda bb: (bb.site, bb.bond))
    return Subsystem(
        sites=sites,
        dims=dims,
        hamiltonian=np.asarray(h, complex),
        gamma=p.gamma,
        boundary_ops=tuple(boundary),
        intra_bonds=tuple(intra),
        closed=closed,
    )


# ---------------------------------------------------------------- full lattice


def full_hamiltonian(lattice: LatticeSpec, p: ModelParams) -> np.ndarray:
    dims = [p.local_dim] * lattice.n_sites
    ops = [alg.embed(SIGMA, k, dims) for k in range(lattice.n_sites)]
    hs = site_hamiltonian(p)
    h = sum(alg.embed(hs, k, dims) for k in range(lattice.n_sites))
    for a, b in lattice.bonds:
        h = h + hopping(ops[a], ops[b], p.j)
    return np.asarray(h, complex)


def build_full_liouvillian(
    lattice: LatticeSpec, p: ModelParams, max_sites: int = MAX_DENSE_SITES
) -> np.ndarray:
    if lattice.n_sites > max_sites:
        raise SizeCapError(f"{lattice.n_sites} sites exceed the dense cap of {max_sites}")
    dims = [p.local_dim] * lattice.n_sites
    l = alg.hamiltonian_super(full_hamiltonian(lattice, p))
    if p.gamma > 0:
        for k in range(lattice.n_sites):
            l += alg.dissipator_super(alg.embed(SIGMA, k, dims), p.gamma)
    return l


# ---------------------------------------------------------------- ansatz layouts


def make_ansatz(
    kind: str,
    p: ModelParams,
    lattice: LatticeSpec | None = None,
    closed: bool = False,
) -> list[Subsystem]:
    """Tracked subsystems for a translation-invariant ansatz.

    ``"uniform"``: one site, all ``z`` neighbours share its state.
    ``"ab"``: two sublattices of single sites (needs a bipartite lattice
    such as an even ring, or the two-site chain for a coupled pair).
    ``"cluster-<m>"``: one ``m``-site block of a ring whose copies tile the
    lattice.
    """
    if kind == "uniform":
        lattice = lattice or ring1d(3)
        return [build_cluster([0], p, lattice, closed)]
    if kind == "ab":
        lattice = lattice or ring1d(4)
        if lattice.kind == "ring1d" and lattice.n_sites % 2:
            raise TopologyError("the AB ansatz needs an even ring")

        def assign(g):
            return (g % 2, 0)

        return [build_cluster([s], p, lattice, closed, assign) for s in (0, 1)]
    if kind.startswith("cluster-"):
        m = int(kind.split("-", 1)[1])
        if m < 1:
            raise TopologyError("cluster size must be positive")
        if lattice is None or lattice.n_sites % m or lattice.n_sites < 2 * m:
            lattice = ring1d(max(3, 2 * m))
        if lattice.kind != "ring1d" and m > 1:
            raise NotImplementedError("multi-site clusters are implemented for rings only")
        return [build_cluster(list(range(m)), p, lattice, closed)]
    raise ValueError(f"unknown ansatz {kind!r}")
