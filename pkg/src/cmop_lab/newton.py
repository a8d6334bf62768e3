"""Newton iteration for density matrices in a real traceless-Hermitian chart.

``rho(x) = I/d + sum_a x_a B_a`` with ``Tr(B_a B_b) = delta_ab``, so every
iterate is Hermitian with unit trace by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import algebra as alg


class SingularJacobianError(ArithmeticError):
    pass


@dataclass
class NewtonResult:
    rho: np.ndarray
    residual: float
    iterations: int
    converged: bool
    jacobian_cond: float


def to_chart(rho: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("aij,ji->a", basis, rho).real


def from_chart(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    d = basis.shape[1]
    return np.eye(d) / d + np.einsum("a,aij->ij", x, basis)


def newton_density(
    residual: Callable[[np.ndarray], np.ndarray],
    rho0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-6,
) -> NewtonResult:
    """Find ``rho`` with ``residual(rho) == 0`` (a traceless Hermitian operator).

    Forward-difference Jacobian, step halving whenever the residual norm
    does not decrease.
    """
    d = rho0.shape[0]
    basis = alg.hermitian_basis(d)
    x = to_chart(rho0, basis)

    def f(x):
        return to_chart(residual(from_chart(x, basis)), basis)

    fx = f(x)
    norm = np.linalg.norm(fx)
    cond = np.nan
    it = 0
    while norm >= tol and it < max_iter:
        it += 1
        jac = np.empty((len(x), len(x)))
        for a in range(len(x)):
            xp = x.copy()
            xp[a] += fd_step
            jac[:, a] = (f(xp) - fx) / fd_step
        cond = np.linalg.cond(jac)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularJacobianError(f"Jacobian condition estimate {cond:.3g}")
        dx = -np.linalg.solve(jac, fx)
        lam = 1.0
        while True:
            xn = x + lam * dx
            fn = f(xn)
            nn = np.linalg.norm(fn)
            if nn < norm or lam < 1e-8:
                break
            lam *= 0.5
        if nn >= norm:
            break
        x, fx, norm = xn, fn, nn
    return NewtonResult(from_chart(x, basis), float(norm), it, bool(norm < tol), float(cond))
