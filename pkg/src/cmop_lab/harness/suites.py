"""Experiment drivers.  Each returns a :class:`RunOutput` ready for :func:`emit`."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from .. import algebra as alg
from ..cmop import _observables, evolve_cmop
from ..cmop_ss import solve_steady, steady_census
from ..exact import (
    MAX_STATEVECTOR_SITES,
    closed_evolve_statevector,
    evolve_full,
    product_statevector,
    steady_full,
)
from ..meanfield import mf_evolve, mf_steady_census
from ..model import (
    NUMBER,
    SIGMA,
    LatticeSpec,
    ModelParams,
    make_ansatz,
    make_lattice,
    ring1d,
)
from ..results import Trajectory, site_observables
from .config import ConfigError, ExperimentConfig, grid
from .emit import RunOutput

log = logging.getLogger(__name__)

ORACLE_NOTE = (
    "oracle is the exact stationary state of a small periodic ring, "
    "not a large open chain; distances are desk-scale stand-ins"
)


class SolverFailure(RuntimeError):
    """A solver did not deliver a result that meets its contract."""


# ---------------------------------------------------------------- helpers


def pool_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map, concurrent when ``threads > 1``."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def model_params(cfg: ExperimentConfig, **over) -> ModelParams:
    m = dict(cfg.section("model"))
    m.update(over)
    try:
        return ModelParams(delta=m["delta"], omega=m["omega"], gamma=m["gamma"], j=m["j"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def lattice_of(d: dict) -> LatticeSpec:
    try:
        return make_lattice(d["kind"], d["n_sites"])
    except (ValueError, TypeError) as e:
        raise ConfigError(f"lattice: {e}") from None


def ansatz_of(kind: str, p: ModelParams, lattice: LatticeSpec | None):
    try:
        return make_ansatz(kind, p, lattice, closed=p.gamma == 0)
    except (ValueError, NotImplementedError) as e:
        raise ConfigError(f"ansatz: {e}") from None


_KET = {0: np.diag([1.0, 0.0]).astype(complex), 1: np.diag([0.0, 1.0]).astype(complex)}


def site_state(init: dict, g: int) -> np.ndarray:
    """Initial state of lattice site ``g``."""
    kind = init["kind"]
    if kind == "mixed":
        return np.eye(2, dtype=complex) / 2
    if kind == "vacuum":
        return _KET[0]
    if kind == "excited":
        return _KET[1]
    if kind == "staggered":
        return _KET[1] if g % 2 == 0 else _KET[0]
    bits = init["bits"]
    return _KET[int(bits[g % len(bits)])]


def bit_list(init: dict, n: int) -> list[int] | None:
    kind = init["kind"]
    if kind == "mixed":
        return None
    return [int(round(site_state(init, g)[1, 1].real)) for g in range(n)]


def subsystem_states(subs, init: dict) -> list[np.ndarray]:
    return [alg.kron(*[site_state(init, g) for g in s.sites]) for s in subs]


def state_diag(rhos) -> dict[str, float]:
    rhos = list(rhos)
    return {
        "trace_drift": max(float(abs(np.trace(r) - 1)) for r in rhos),
        "hermiticity": max(alg.hermiticity_error(r) for r in rhos),
        "min_eigenvalue": min(alg.min_eigenvalue(0.5 * (r + r.conj().T)) for r in rhos),
    }


def merge_diag(*ds: dict) -> dict[str, float]:
    out = {"trace_drift": 0.0, "hermiticity": 0.0, "min_eigenvalue": np.inf}
    for d in ds:
        out["trace_drift"] = max(out["trace_drift"], d.get("trace_drift", 0.0))
        out["hermiticity"] = max(out["hermiticity"], d.get("hermiticity", 0.0))
        out["min_eigenvalue"] = min(out["min_eigenvalue"], d.get("min_eigenvalue", np.inf))
    return out


def _header(cfg: ExperimentConfig, names: Sequence[str]) -> list[str]:
    return ["config_hash", "version", *names]


def _tag(cfg: ExperimentConfig, values: Sequence) -> list:
    return [cfg.hash(), __version__, *values]


def finalize(cfg: ExperimentConfig, command: str, run: RunOutput, diag: dict, summary: dict) -> RunOutput:
    echo = {k: v for k, v in cfg.data.items() if k != "output"}
    run.meta.update(
        command=command,
        experiment=cfg.experiment,
        config=echo,
        config_hash=cfg.hash(),
        version=__version__,
        rng_seed=cfg.section("solver")["seed"],
        diagnostics=diag,
        summary=summary,
    )
    return run


def _require_converged(res, what: str):
    if not res.converged:
        raise SolverFailure(f"{what}: residual {res.residual:.3g} after {res.iterations} iterations")
    return res


def _choose_branch(fixed_points, target: np.ndarray):
    return min(fixed_points, key=lambda fp: alg.trace_distance(fp.rho, target))


# ---------------------------------------------------------------- time evolution


def _traj_rows(cfg, traj: Trajectory, names: Sequence[str], every: int) -> list[list]:
    rows = []
    for i in range(0, len(traj.times), every):
        rows.append(_tag(cfg, [traj.times[i]] + [traj.observables[k][i] for k in names]))
    return rows


def _ab_corr(traj: Trajectory) -> None:
    a = np.einsum("ab,tba->t", SIGMA.conj().T, traj.states["state0"])
    b = np.einsum("ab,tba->t", SIGMA, traj.states["state1"])
    c = a * b
    traj.observables["re_corr_AB"] = c.real
    traj.observables["im_corr_AB"] = c.imag


def run_evolve(cfg: ExperimentConfig, threads: int = 1, mean_field: bool = False) -> RunOutput:
    """c-MoP (or mean-field) trajectory of the configured ansatz."""
    if cfg.experiment != "evolve":
        raise ConfigError("time evolution needs an evolve experiment")
    s = cfg.section("solver")
    p = model_params(cfg)
    subs = ansatz_of(cfg.ansatz, p, lattice_of(cfg.section("lattice")))
    rho0 = subsystem_states(subs, cfg.section("initial"))
    t0 = time.perf_counter()
    if mean_field:
        traj = mf_evolve(rho0, subs, s["t_final"], s["dt"])
        _observables(traj, subs)
    else:
        traj = evolve_cmop(subs, rho0, s["t_final"], s["dt"], tau_max=s["tau_max"])
    if cfg.ansatz == "ab":
        _ab_corr(traj)
    names = list(traj.observables)
    run = RunOutput(_header(cfg, ["time", *names]), _traj_rows(cfg, traj, names, s["sample_every"]))
    run.timings["solve"] = time.perf_counter() - t0
    diag = merge_diag(*(state_diag(v) for v in traj.states.values()))
    final = {k: traj.observables[k][-1] for k in names}
    return finalize(cfg, "meanfield" if mean_field else "evolve", run, diag, {"final": final})


def exact_trajectory(lattice: LatticeSpec, p: ModelParams, init: dict, t_final: float, dt: float) -> Trajectory:
    n = lattice.n_sites
    bits = bit_list(init, n)
    if p.gamma == 0 and p.omega == 0 and bits is not None and n <= MAX_STATEVECTOR_SITES:
        return closed_evolve_statevector(lattice, p, product_statevector(bits), t_final, dt)
    r0 = alg.kron(*[site_state(init, g) for g in range(n)])
    traj = evolve_full(lattice, p, r0, t_final, dt, clusters=[(0, 1)] if n > 1 else [])
    if n > 1:
        c = np.einsum("ab,tba->t", np.kron(SIGMA.conj().T, SIGMA), traj.states["c0-1"])
        traj.observables["re_corr01"] = c.real
        traj.observables["im_corr01"] = c.imag
    return traj


def run_exact(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    lattice = lattice_of(cfg.section("lattice"))
    p = model_params(cfg)
    s = cfg.section("solver")
    t0 = time.perf_counter()
    if cfg.experiment == "evolve":
        traj = exact_trajectory(lattice, p, cfg.section("initial"), s["t_final"], s["dt"])
        names = list(traj.observables)
        run = RunOutput(_header(cfg, ["time", *names]), _traj_rows(cfg, traj, names, s["sample_every"]))
        diag = merge_diag(traj.diagnostics, *(state_diag(v) for v in traj.states.values()))
        summary = {"final": {k: traj.observables[k][-1] for k in names}}
    elif cfg.experiment == "steady":
        res = steady_full(lattice, p)
        obs = site_observables(res.rho)
        names = ["n", "re_sigma", "im_sigma"]
        run = RunOutput(_header(cfg, names), [_tag(cfg, [obs[k] for k in names])])
        diag = state_diag([res.states["full"], res.rho])
        summary = {"residual": res.residual, **res.diagnostics, **obs}
    else:
        raise ConfigError("the exact command needs an evolve or steady experiment")
    run.timings["solve"] = time.perf_counter() - t0
    return finalize(cfg, "exact", run, diag, summary)


def run_meanfield(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    if cfg.experiment == "evolve":
        return run_evolve(cfg, threads, mean_field=True)
    if cfg.experiment != "steady":
        raise ConfigError("the meanfield command needs an evolve or steady experiment")
    s = cfg.section("solver")
    p = model_params(cfg)
    subs = ansatz_of(cfg.ansatz, p, lattice_of(cfg.section("lattice")))
    t0 = time.perf_counter()
    if cfg.ansatz == "uniform":
        cen = mf_steady_census(subs[0], n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"])
    else:
        cen, _ = steady_census(subs, n_starts=s["n_starts"], seed=s["seed"], born=False, tol=s["tol"])
    if not cen.fixed_points:
        raise SolverFailure("no mean-field fixed point converged")
    names = ["branch", "n", "re_sigma", "im_sigma", "residual", "min_eigenvalue"]
    rows, states, points = [], [], []
    for k, fp in enumerate(cen.fixed_points):
        site = alg.partial_trace(fp.rho, subs[0].dims, [0])
        obs = site_observables(site)
        rows.append(_tag(cfg, [k, obs["n"], obs["re_sigma"], obs["im_sigma"], fp.residual, alg.min_eigenvalue(fp.rho)]))
        states.append(fp.rho)
        points.append({"branch": k, **obs, "residual": fp.residual, "seeds": fp.seeds})
    run = RunOutput(_header(cfg, names), rows)
    run.census = {"fixed_points": points, "nonconvergent_seeds": cen.nonconvergent, "rng_seed": cen.rng_seed}
    run.timings["solve"] = time.perf_counter() - t0
    return finalize(cfg, "meanfield", run, state_diag(states), {"count": cen.count})


# ---------------------------------------------------------------- steady states


def _steady_point(cfg, subs, rho0=None, born=True):
    s = cfg.section("solver")
    return solve_steady(subs, rho0, method=s["method"], born=born, tol=s["tol"], alpha=s["alpha"], max_iter=s["max_iter"])


def run_steady(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """c-MoP steady state at one point, or along ``scan.zj`` when ``scan.axis == "zj"``."""
    if cfg.experiment != "steady":
        raise ConfigError("the steady command needs a steady experiment")
    s = cfg.section("solver")
    lattice = lattice_of(cfg.section("lattice"))
    p0 = model_params(cfg)
    sweep = cfg.section("scan")["axis"] == "zj"
    t0 = time.perf_counter()
    z = lattice.z
    values = grid(cfg.section("scan")["zj"]) if sweep else [p0.j * z]

    def solve(zj, start=None):
        subs = ansatz_of(cfg.ansatz, p0.replace(j=zj / z), lattice)
        return _require_converged(_steady_point(cfg, subs, start), f"steady state at ZJ={zj}")

    if s["mode"] == "continuation":
        results, prev = [], None
        for zj in values:
            r = solve(zj, None if prev is None else prev.states["cluster"])
            results.append(r)
            prev = r
    else:
        results = pool_map(solve, values, threads)
    names = ["zj", "n", "re_sigma", "im_sigma", "residual", "iterations", "min_eigenvalue"]
    rows, points = [], []
    for zj, r in zip(values, results):
        obs = r.observables()
        rows.append(_tag(cfg, [zj, obs["n"], obs["re_sigma"], obs["im_sigma"], r.residual, r.iterations, r.min_eigenvalue]))
        points.append({"zj": zj, **obs, "residual": r.residual, "iterations": r.iterations, "method": r.method})
    run = RunOutput(_header(cfg, names), rows)
    run.meta["points"] = points
    run.timings["solve"] = time.perf_counter() - t0
    diag = state_diag([r.states["cluster"] for r in results])
    return finalize(cfg, "steady", run, diag, {"max_residual": max(r.residual for r in results)})


# ---------------------------------------------------------------- divergence of closed dynamics


def _cluster_observables(m: int, traj: Trajectory) -> dict[str, np.ndarray]:
    o = traj.observables
    if m == 1:
        _ab_corr(traj)
        return {"n_A": o["n0.0"], "n_B": o["n1.0"], "re_corr_AB": o["re_corr_AB"], "im_corr_AB": o["im_corr_AB"]}
    return {"n_A": o["n0.0"], "n_B": o["n0.1"], "re_corr_AB": o["re_corr0.01"], "im_corr_AB": o["im_corr0.01"]}


def run_divergence_suite(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """Closed staggered ring: exact statevector oracle against c-MoP clusters.

    The divergence time of a cluster size is the first grid time at which
    ``|n_A - n_A(exact)|`` exceeds ``solver.threshold``.
    """
    s = cfg.section("solver")
    p = model_params(cfg)
    lattice = lattice_of(cfg.section("lattice"))
    if p.gamma != 0 or p.omega != 0:
        raise ConfigError("the divergence suite needs gamma = omega = 0")
    if lattice.kind != "ring1d" or lattice.n_sites % 2:
        raise ConfigError("the divergence suite needs an even ring")
    init = {"kind": "staggered", "bits": None}
    dt, tf = s["dt"], s["t_final"]
    sizes = list(s["clusters"])
    for m in sizes:
        if m > 1 and m % 2:
            raise ConfigError("cluster sizes above one must be even to hold the staggered pattern")

    def job(m):
        t = time.perf_counter()
        if m == 0:
            return exact_trajectory(lattice, p, init, tf, dt), time.perf_counter() - t
        kind = "ab" if m == 1 else f"cluster-{m}"
        subs = ansatz_of(kind, p, lattice)
        traj = evolve_cmop(subs, subsystem_states(subs, init), tf, dt, tau_max=s["tau_max"])
        return traj, time.perf_counter() - t

    outs = pool_map(job, [0, *sizes], threads)
    ex, cm = outs[0][0], [o[0] for o in outs[1:]]
    ex_obs = {
        "n_A": ex.observables["n0"],
        "n_B": ex.observables["n1"],
        "re_corr_AB": ex.observables["re_corr01"],
        "im_corr_AB": ex.observables["im_corr01"],
    }
    cols, data = ["time"], [ex.times]
    for k, v in ex_obs.items():
        cols.append(f"exact_{k}")
        data.append(v)
    t_star, early, re_max = {}, {}, {"exact": float(np.abs(ex_obs["re_corr_AB"]).max())}
    early_mask = ex.times <= s["early_time"] + 1e-12
    for m, traj in zip(sizes, cm):
        o = _cluster_observables(m, traj)
        dn = np.abs(o["n_A"] - ex_obs["n_A"])
        for k, v in o.items():
            cols.append(f"c{m}_{k}")
            data.append(v)
        cols.append(f"c{m}_dn_A")
        data.append(dn)
        over = np.flatnonzero(dn > s["threshold"])
        t_star[str(m)] = float(ex.times[over[0]]) if len(over) else None
        early[str(m)] = float(dn[early_mask].max())
        re_max[f"c{m}"] = float(np.abs(o["re_corr_AB"]).max())
    rows = [_tag(cfg, [col[i] for col in data]) for i in range(0, len(ex.times), s["sample_every"])]
    run = RunOutput(_header(cfg, cols), rows)
    run.timings = {("exact" if i == 0 else f"c{m}"): o[1] for i, (m, o) in enumerate(zip([0, *sizes], outs))}
    diag = merge_diag(
        ex.diagnostics,
        *(state_diag(v) for v in ex.states.values()),
        *(t.diagnostics for t in cm),
    )
    finite = [t_star[str(m)] if t_star[str(m)] is not None else np.inf for m in sizes]
    summary = {
        "divergence_times": t_star,
        "threshold": s["threshold"],
        "early_time": s["early_time"],
        "early_max_dn_A": early,
        "max_abs_re_corr_AB": re_max,
        "divergence_increasing": bool(all(a < b for a, b in zip(finite, finite[1:]))),
    }
    return finalize(cfg, "scan", run, diag, summary)


# ---------------------------------------------------------------- one-dimensional steady sweep


def _exact_oracle(lattice: LatticeSpec, p: ModelParams):
    ex = steady_full(lattice, p, check_unique=True)
    if ex.residual > 1e-10:
        raise SolverFailure(f"oracle residual {ex.residual:.3g}")
    return ex


def run_bistability_sweep(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """Steady states along ``ZJ/gamma`` on a ring (``Z = 2``) against an exact small ring.

    Methods: single-site and two-site mean field (``mf1``, ``mf2``) and
    c-MoP (``cmop1``, ``cmop2``).  ``mf1`` and ``cmop1`` also get a
    multi-start census; the reported ``mf1`` state is the branch closest to
    the oracle.
    """
    s = cfg.section("solver")
    sc = cfg.section("scan")
    p0 = model_params(cfg)
    if p0.gamma <= 0:
        raise ConfigError("steady sweeps need gamma > 0")
    methods = list(sc["methods"])
    values = grid(sc["zj"])
    oracle_lat = ring1d(int(sc["oracle_sites"]))
    z = 2
    t0 = time.perf_counter()

    def params(zj):
        return p0.replace(j=zj / z)

    oracles = pool_map(lambda zj: _exact_oracle(oracle_lat, params(zj)), values, threads)
    t_oracle = time.perf_counter() - t0

    def census(zj):
        p = params(zj)
        sub1 = ansatz_of("uniform", p, ring1d(3))
        mf = mf_steady_census(sub1[0], n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"])
        cm, unphys = steady_census(
            sub1, n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"], extra_seeds=[fp.rho for fp in mf.fixed_points]
        )
        return mf, cm, unphys

    censuses = pool_map(census, values, threads)
    t_census = time.perf_counter() - t0 - t_oracle

    cluster_methods = [m for m in methods if m != "mf1"]

    def subs_for(m, zj):
        p = params(zj)
        return ansatz_of("uniform", p, ring1d(3)) if m.endswith("1") else ansatz_of("cluster-2", p, None)

    def cold(args):
        m, zj = args
        res = _steady_point(cfg, subs_for(m, zj), born=m.startswith("cmop"))
        if not res.converged and m == "mf2":
            cen, _ = steady_census(subs_for(m, zj), n_starts=s["n_starts"], seed=s["seed"], born=False, tol=s["tol"])
            if cen.fixed_points:
                res = _steady_point(cfg, subs_for(m, zj), cen.fixed_points[0].rho, born=False)
        return _require_converged(res, f"{m} at ZJ={zj}")

    solved: dict[str, list] = {}
    cross = {}
    for m in cluster_methods:
        cold_res = pool_map(cold, [(m, zj) for zj in values], threads)
        if s["mode"] == "continuation":
            seq, prev = [], None
            for zj, c in zip(values, cold_res):
                start = None if prev is None else prev.states["cluster"]
                r = _steady_point(cfg, subs_for(m, zj), start, born=m.startswith("cmop"))
                if not r.converged:
                    r = c
                seq.append(r)
                prev = r
            cross[m] = max(alg.trace_distance(a.states["cluster"], b.states["cluster"]) for a, b in zip(seq, cold_res))
            solved[m] = seq
        else:
            solved[m] = cold_res
    t_solve = time.perf_counter() - t0 - t_oracle - t_census

    cols = ["zj", "exact_n", "exact_re_sigma", "exact_im_sigma"]
    for m in methods:
        cols += [f"{m}_n", f"{m}_re_sigma", f"{m}_im_sigma", f"{m}_dist"]
    cols += ["mf1_count", "cmop1_count"]
    rows, points, dists = [], [], {m: [] for m in methods}
    states_all = []
    for i, zj in enumerate(values):
        ex = oracles[i]
        mf, cm, unphys = censuses[i]
        if not mf.fixed_points:
            raise SolverFailure(f"mean-field census empty at ZJ={zj}")
        row = [zj, *site_observables(ex.rho).values()]
        for m in methods:
            rho = _choose_branch(mf.fixed_points, ex.rho).rho if m == "mf1" else solved[m][i].rho
            d = alg.trace_distance(ex.rho, rho)
            dists[m].append(d)
            states_all.append(rho)
            row += [*site_observables(rho).values(), d]
        row += [mf.count, cm.count]
        rows.append(_tag(cfg, row))
        points.append(
            {
                "zj": zj,
                "mean_field": [{**site_observables(fp.rho), "residual": fp.residual, "seeds": fp.seeds} for fp in mf.fixed_points],
                "mean_field_nonconvergent": mf.nonconvergent,
                "cmop": [{**site_observables(fp.rho), "residual": fp.residual, "seeds": fp.seeds} for fp in cm.fixed_points],
                "cmop_nonconvergent": cm.nonconvergent,
                "cmop_unphysical_roots": len(unphys),
            }
        )
    run = RunOutput(_header(cfg, cols), rows)
    run.census = {"rng_seed": s["seed"], "points": points}
    run.timings = {"oracle": t_oracle, "census": t_census, "solve": t_solve}
    mf_counts = [c[0].count for c in censuses]
    cm_counts = [c[1].count for c in censuses]
    summary = {
        "oracle": f"exact ring of {oracle_lat.n_sites} sites",
        "oracle_note": ORACLE_NOTE,
        "median_distance": {m: float(np.median(v)) for m, v in dists.items()},
        "max_distance": {m: float(np.max(v)) for m, v in dists.items()},
        "mf1_multistable_zj": [zj for zj, c in zip(values, mf_counts) if c >= 2],
        "cmop1_counts_all_one": bool(all(c == 1 for c in cm_counts)),
        "cmop1_max_count": max(cm_counts),
        "continuation_vs_cold_max_distance": cross,
        "max_oracle_residual": max(o.residual for o in oracles),
        "min_oracle_second_singular_value": min(o.diagnostics["second_singular_value"] for o in oracles),
    }
    diag = merge_diag(state_diag(states_all), state_diag([o.states["full"] for o in oracles]))
    return finalize(cfg, "scan", run, diag, summary)


# ---------------------------------------------------------------- two-parameter grid


def run_grid_comparison(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """Maps of ``D(exact, MF)`` and ``D(exact, c-MoP)`` over ``(ZJ/gamma, Omega/gamma)``.

    Single-site ansatz on each listed lattice, oracle = exact state of the
    same lattice.  The mean-field branch closest to the oracle is reported.
    """
    s = cfg.section("solver")
    sc = cfg.section("scan")
    p0 = model_params(cfg)
    if p0.gamma <= 0:
        raise ConfigError("steady grids need gamma > 0")
    zjs = grid(sc["zj"])
    omegas = ([0.0] if sc["include_zero_omega"] and grid(sc["omega"])[0] != 0 else []) + grid(sc["omega"])
    lattices = [lattice_of(d) for d in sc["lattices"]]
    t0 = time.perf_counter()

    def point(args):
        lat, om, zj = args
        p = p0.replace(omega=om, j=zj / lat.z)
        ex = _exact_oracle(lat, p)
        subs = ansatz_of("uniform", p, lat)
        cm = _steady_point(cfg, subs)
        if not cm.converged:
            cen, _ = steady_census(subs, n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"])
            if cen.fixed_points:
                cm = _steady_point(cfg, subs, _choose_branch(cen.fixed_points, ex.rho).rho)
        _require_converged(cm, f"c-MoP at {lat.kind}, omega={om}, ZJ={zj}")
        mf = mf_steady_census(subs[0], n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"])
        if not mf.fixed_points:
            raise SolverFailure(f"mean-field census empty at {lat.kind}, omega={om}, ZJ={zj}")
        mf_rho = _choose_branch(mf.fixed_points, ex.rho).rho
        return ex, cm, mf_rho, mf.count

    tasks = [(lat, om, zj) for lat in lattices for om in omegas for zj in zjs]
    res = pool_map(point, tasks, threads)
    cols = ["lattice", "n_sites", "zj", "omega", "exact_n", "mf_n", "cmop_n", "mf_dist", "cmop_dist", "mf_count"]
    rows, states_all = [], []
    per = {}
    for (lat, om, zj), (ex, cm, mf_rho, cnt) in zip(tasks, res):
        dm, dc = alg.trace_distance(ex.rho, mf_rho), alg.trace_distance(ex.rho, cm.rho)
        rows.append(
            _tag(cfg, [lat.kind, lat.n_sites, zj, om, site_observables(ex.rho)["n"], site_observables(mf_rho)["n"], cm.observables()["n"], dm, dc, cnt])
        )
        states_all += [mf_rho, cm.rho]
        per.setdefault(lat.kind, []).append((om, zj, dm, dc))
    summary = {"lattices": {}}
    for kind, vals in per.items():
        a = np.array(vals)
        nz = a[a[:, 0] > 0]
        zero = a[a[:, 0] == 0]
        summary["lattices"][kind] = {
            "max_mf_dist": float(nz[:, 2].max()),
            "max_cmop_dist": float(nz[:, 3].max()),
            "median_mf_dist": float(np.median(nz[:, 2])),
            "median_cmop_dist": float(np.median(nz[:, 3])),
            "max_zero_omega_dist": float(zero[:, 2:4].max()) if len(zero) else None,
        }
    run = RunOutput(_header(cfg, cols), rows)
    run.timings["solve"] = time.perf_counter() - t0
    diag = merge_diag(state_diag(states_all), state_diag([r[0].states["full"] for r in res]))
    return finalize(cfg, "scan", run, diag, summary)


def run_scan(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    axis = cfg.section("scan")["axis"]
    if cfg.experiment == "scan1d" and axis == "time":
        return run_divergence_suite(cfg, threads)
    if cfg.experiment == "scan1d" and axis == "zj":
        return run_bistability_sweep(cfg, threads)
    if cfg.experiment == "scan2d":
        return run_grid_comparison(cfg, threads)
    raise ConfigError("the scan command needs a scan1d or scan2d experiment")


# ---------------------------------------------------------------- census


def run_census(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """Multi-start root counts of single-site mean field and c-MoP along ``scan.zj``."""
    if cfg.experiment != "census":
        raise ConfigError("the census command needs a census experiment")
    s = cfg.section("solver")
    p0 = model_params(cfg)
    if p0.gamma <= 0:
        raise ConfigError("a census needs gamma > 0")
    lattice = lattice_of(cfg.section("lattice"))
    values = grid(cfg.section("scan")["zj"])
    t0 = time.perf_counter()

    def job(zj):
        subs = ansatz_of("uniform", p0.replace(j=zj / lattice.z), lattice)
        mf = mf_steady_census(subs[0], n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"])
        cm, unphys = steady_census(subs, n_starts=s["n_starts"], seed=s["seed"], tol=s["tol"], extra_seeds=[fp.rho for fp in mf.fixed_points])
        return mf, cm, unphys

    res = pool_map(job, values, threads)
    cols = ["zj", "mf_count", "cmop_count", "mf_nonconvergent", "cmop_nonconvergent", "cmop_unphysical"]
    rows, points, states = [], [], []
    for zj, (mf, cm, un) in zip(values, res):
        rows.append(_tag(cfg, [zj, mf.count, cm.count, len(mf.nonconvergent), len(cm.nonconvergent), len(un)]))
        points.append(
            {
                "zj": zj,
                "mean_field": [{**site_observables(fp.rho), "residual": fp.residual, "seeds": fp.seeds} for fp in mf.fixed_points],
                "mean_field_nonconvergent": mf.nonconvergent,
                "cmop": [{**site_observables(fp.rho), "residual": fp.residual, "seeds": fp.seeds} for fp in cm.fixed_points],
                "cmop_nonconvergent": cm.nonconvergent,
                "cmop_unphysical_roots": [site_observables(fp.rho) for fp in un],
            }
        )
        states += [fp.rho for fp in mf.fixed_points + cm.fixed_points]
    run = RunOutput(_header(cfg, cols), rows)
    run.census = {"rng_seed": s["seed"], "points": points}
    run.timings["solve"] = time.perf_counter() - t0
    summary = {
        "mf_multistable_zj": [zj for zj, r in zip(values, res) if r[0].count >= 2],
        "cmop_counts": sorted({r[1].count for r in res}),
    }
    return finalize(cfg, "census", run, state_diag(states) if states else merge_diag(), summary)


# ---------------------------------------------------------------- convexity


def run_convexity_diagnostic(cfg: ExperimentConfig, threads: int = 1) -> RunOutput:
    """Deviation from linearity under mixing of two product initial states.

    For the exact dynamics the mixture of full states is evolved and
    reduced; linearity makes the deviation vanish.  For c-MoP the reduced
    initial states are mixed and the deviation is only measured.
    """
    if cfg.experiment != "convexity":
        raise ConfigError("the convexity command needs a convexity experiment")
    s = cfg.section("solver")
    cv = cfg.section("convexity")
    p = model_params(cfg)
    lattice = lattice_of(cfg.section("lattice"))
    c = float(cv["weight"])
    n = lattice.n_sites
    ia = {"kind": "bits", "bits": cv["state_a"]}
    ib = {"kind": "bits", "bits": cv["state_b"]}
    t0 = time.perf_counter()
    ra = alg.kron(*[site_state(ia, g) for g in range(n)])
    rb = alg.kron(*[site_state(ib, g) for g in range(n)])
    tf, dt = s["t_final"], s["dt"]
    ex = [evolve_full(lattice, p, r, tf, dt) for r in (ra, rb, c * ra + (1 - c) * rb)]
    subs = ansatz_of(cfg.ansatz, p, lattice)
    sa, sb = subsystem_states(subs, ia), subsystem_states(subs, ib)
    mix = [c * x + (1 - c) * y for x, y in zip(sa, sb)]
    cm = [evolve_cmop(subs, r0, tf, dt, tau_max=s["tau_max"]) for r0 in (sa, sb, mix)]
    times = ex[0].times

    def dev(trajs, labels):
        out = np.zeros(len(times))
        for lab in labels:
            a, b, m = (t.states[lab] for t in trajs)
            diff = c * a + (1 - c) * b - m
            out = np.maximum(out, [0.5 * np.abs(np.linalg.eigvalsh(0.5 * (x + x.conj().T))).sum() for x in diff])
        return out

    d_ex = dev(ex, [f"site{k}" for k in range(n)])
    d_cm = dev(cm, [f"state{k}" for k in range(len(subs))])
    cols = ["time", "exact_deviation", "cmop_deviation"]
    rows = [_tag(cfg, [times[i], d_ex[i], d_cm[i]]) for i in range(0, len(times), s["sample_every"])]
    run = RunOutput(_header(cfg, cols), rows)
    run.timings["solve"] = time.perf_counter() - t0
    diag = merge_diag(*(t.diagnostics for t in ex + cm))
    summary = {"weight": c, "max_exact_deviation": float(d_ex.max()), "max_cmop_deviation": float(d_cm.max())}
    return finalize(cfg, "convexity", run, diag, summary)


COMMANDS = {
    "evolve": run_evolve,
    "steady": run_steady,
    "exact": run_exact,
    "meanfield": run_meanfield,
    "scan": run_scan,
    "census": run_census,
    "convexity": run_convexity_diagnostic,
}
