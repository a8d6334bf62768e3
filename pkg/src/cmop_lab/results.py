"""Containers shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import algebra as alg
from .model import NUMBER, SIGMA


@dataclass
class Trajectory:
    """Time series of reduced states.

    ``states`` maps a label (``"A"``, ``"site0"``, ``"cluster"``...) to an
    array of shape ``(n_times, d, d)``; ``observables`` maps a column name to
    an array of shape ``(n_times,)``.
    """

    times: np.ndarray
    states: dict[str, np.ndarray] = field(default_factory=dict)
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, float] = field(default_factory=dict)


@dataclass
class SteadyResult:
    states: dict[str, np.ndarray]
    residual: float
    iterations: int = 0
    method: str = ""
    converged: bool = True
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def rho(self) -> np.ndarray:
        """Single-site reduced state used for comparisons."""
        return self.states["site"]

    @property
    def min_eigenvalue(self) -> float:
        return alg.min_eigenvalue(self.rho)

    def observables(self) -> dict[str, float]:
        return site_observables(self.rho)


def site_observables(rho: np.ndarray) -> dict[str, float]:
    s = np.trace(SIGMA @ rho)
    return {
        "n": float(np.trace(NUMBER @ rho).real),
        "re_sigma": float(s.real),
        "im_sigma": float(s.imag),
    }
