"""Experiment configuration: a versioned JSON document, validated up front."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

SCHEMA_VERSION = 1

EXPERIMENTS = ("evolve", "steady", "scan1d", "scan2d", "census", "convexity")

# section -> key -> default
_DEFAULTS: dict[str, dict[str, Any]] = {
    "model": {"delta": 0.0, "omega": 0.0, "gamma": 1.0, "j": 0.0},
    "lattice": {"kind": "ring1d", "n_sites": 3},
    "initial": {"kind": "vacuum", "bits": None},
    "solver": {
        "dt": 0.01,
        "t_final": 1.0,
        "tau_max": None,
        "method": "newton",
        "tol": 1e-10,
        "alpha": 0.5,
        "max_iter": None,
        "n_starts": 8,
        "seed": 0,
        "mode": "continuation",
        "threshold": 0.05,
        "early_time": 0.3,
        "clusters": [1, 2, 4],
        "sample_every": 1,
    },
    "scan": {
        "axis": None,
        # the upper limit 4 is a choice: bistability sits well inside it
        "zj": [0.1, 4.0, 0.1],
        "omega": [0.25, 3.0, 0.25],
        "include_zero_omega": True,
        "oracle_sites": 5,
        "lattices": [{"kind": "ring1d", "n_sites": 3}],
        "methods": ["mf1", "mf2", "cmop1", "cmop2"],
    },
    "convexity": {"state_a": [1, 0], "state_b": [0, 1], "weight": 0.5},
    "output": {"dir": "out"},
}

_TOP = ("schema_version", "experiment", "ansatz", "comment", *_DEFAULTS)
_LATTICE_KEYS = ("kind", "n_sites")


class ConfigError(ValueError):
    pass


def _range(name: str, v) -> list[float]:
    if not (isinstance(v, list) and len(v) == 3 and all(isinstance(x, (int, float)) for x in v)):
        raise ConfigError(f"scan.{name} must be [start, stop, step]")
    if v[2] <= 0 or v[1] < v[0]:
        raise ConfigError(f"scan.{name} needs step > 0 and stop >= start")
    return [float(x) for x in v]


def grid(spec: list[float]) -> list[float]:
    """Inclusive grid ``start, start+step, ... <= stop`` rounded to 12 digits."""
    start, stop, step = spec
    n = int(round((stop - start) / step + 1e-9)) + 1
    out = [round(start + k * step, 12) for k in range(n)]
    return [x for x in out if x <= stop + 1e-12]


def _lattice(d, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    for k in d:
        if k not in _LATTICE_KEYS:
            raise ConfigError(f"unknown key '{where}.{k}'")
    return {"kind": str(d.get("kind", "ring1d")), "n_sites": d.get("n_sites")}


@dataclass(frozen=True)
class ExperimentConfig:
    """Normalised configuration; ``data`` holds every key with defaults filled."""

    data: dict

    @property
    def experiment(self) -> str:
        return self.data["experiment"]

    @property
    def ansatz(self) -> str:
        return self.data["ansatz"]

    def section(self, name: str) -> dict:
        return self.data[name]

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        if out is not None:
            d["output"]["dir"] = out
        if seed is not None:
            d["solver"]["seed"] = int(seed)
        return parse_config(d)

    def hash(self) -> str:
        """Digest of everything that can change results (not the output path)."""
        d = {k: v for k, v in self.data.items() if k != "output"}
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_config(src: str | dict) -> ExperimentConfig:
    """Validate a JSON text or mapping.  Unknown keys raise ``ConfigError`` naming them."""
    if isinstance(src, str):
        try:
            raw = json.loads(src)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from None
    else:
        raw = copy.deepcopy(src)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for k in raw:
        if k not in _TOP:
            raise ConfigError(f"unknown key '{k}'")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    data: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "experiment": exp}
    data["ansatz"] = str(raw.get("ansatz", "uniform"))
    if "comment" in raw:
        data["comment"] = str(raw["comment"])
    for sec, defaults in _DEFAULTS.items():
        given = raw.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section '{sec}' must be an object")
        for k in given:
            if k not in defaults:
                raise ConfigError(f"unknown key '{sec}.{k}'")
        merged = copy.deepcopy(defaults)
        merged.update(copy.deepcopy(given))
        data[sec] = merged
    _validate(data)
    return ExperimentConfig(data)


def _num(sec: dict, key: str, where: str, positive=False, allow_none=False):
    v = sec[key]
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key} must be positive")


def _validate(d: dict) -> None:
    for k in ("delta", "omega", "gamma", "j"):
        _num(d["model"], k, "model")
    if d["model"]["gamma"] < 0:
        raise ConfigError("model.gamma must be non-negative")
    d["lattice"] = _lattice(d["lattice"], "lattice")
    s = d["solver"]
    for k in ("dt", "t_final", "tol", "alpha"):
        _num(s, k, "solver", positive=True)
    _num(s, "tau_max", "solver", positive=True, allow_none=True)
    if s["method"] not in ("newton", "fixed-point"):
        raise ConfigError("solver.method must be 'newton' or 'fixed-point'")
    if s["mode"] not in ("continuation", "cold"):
        raise ConfigError("solver.mode must be 'continuation' or 'cold'")
    if not isinstance(s["seed"], int) or s["seed"] < 0:
        raise ConfigError("solver.seed must be a non-negative integer")
    if not isinstance(s["sample_every"], int) or s["sample_every"] < 1:
        raise ConfigError("solver.sample_every must be a positive integer")
    if not isinstance(s["clusters"], list) or not all(isinstance(m, int) and m >= 1 for m in s["clusters"]):
        raise ConfigError("solver.clusters must be a list of positive integers")
    if d["initial"]["kind"] not in ("vacuum", "excited", "mixed", "staggered", "bits"):
        raise ConfigError("initial.kind must be vacuum, excited, mixed, staggered or bits")
    if d["initial"]["kind"] == "bits" and not isinstance(d["initial"]["bits"], list):
        raise ConfigError("initial.bits must list one 0/1 per site")
    sc = d["scan"]
    sc["zj"] = _range("zj", sc["zj"])
    sc["omega"] = _range("omega", sc["omega"])
    sc["lattices"] = [_lattice(x, "scan.lattices[]") for x in sc["lattices"]]
    if sc["axis"] not in (None, "time", "zj", "zj-omega"):
        raise ConfigError("scan.axis must be time, zj or zj-omega")
    if d["experiment"] == "scan1d" and sc["axis"] not in ("time", "zj"):
        raise ConfigError("scan1d needs scan.axis 'time' or 'zj'")
    if d["experiment"] == "scan2d" and sc["axis"] not in (None, "zj-omega"):
        raise ConfigError("scan2d needs scan.axis 'zj-omega'")
    for m in sc["methods"]:
        if m not in ("mf1", "mf2", "cmop1", "cmop2"):
            raise ConfigError(f"unknown method '{m}' in scan.methods")
    w = d["convexity"]["weight"]
    if not isinstance(w, (int, float)) or not 0 <= w <= 1:
        raise ConfigError("convexity.weight must lie in [0, 1]")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return parse_config(text)
