"""Deterministic CSV/JSON writers."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


@dataclass
class RunOutput:
    """Everything a run writes: curve table, metadata, census and wall times."""

    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    census: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


def write_csv(path: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            if len(r) != len(columns):
                raise ValueError(f"row of length {len(r)} for {len(columns)} columns")
            fh.write(",".join(fmt(v) for v in r) + "\n")


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit(out_dir: str, run: RunOutput) -> None:
    """Write ``curves.csv``, ``meta.json``, ``census.json`` and ``timings.json``.

    Wall-clock timings go to their own file so the other three are
    byte-identical across reruns.
    """
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "curves.csv"), run.columns, run.rows)
    write_json(os.path.join(out_dir, "meta.json"), run.meta)
    write_json(os.path.join(out_dir, "census.json"), run.census)
    write_json(os.path.join(out_dir, "timings.json"), run.timings)
