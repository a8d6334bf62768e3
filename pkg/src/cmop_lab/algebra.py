"""Dense operator and superoperator algebra.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)``; where the
tensor structure matters (partial traces, embeddings) the local dimensions are
passed explicitly as ``dims``.  Superoperators are ``(d*d, d*d)`` arrays acting
on column-major vectorized operators, so that

    vec(A @ X @ B) == kron(B.T, A) @ vec(X).

Every superoperator constructor in the package goes through :func:`sprepost`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

HERMITIAN_TOL = 1e-9


class AlgebraError(ArithmeticError):
    """Base class for numerical failures in this module."""


class NonFiniteError(AlgebraError):
    pass


class DefectiveMatrixError(AlgebraError):
    """Raised when a generator is too close to defective for an eigenbasis.

    Callers should fall back to ``expm``-based propagation or quadrature.
    """


class DegenerateStationaryError(AlgebraError):
    pass


class KernelNonDecayError(AlgebraError):
    """The source term has weight on the stationary subspace, so the
    infinite-time integral diverges."""


class StationaryComponentWarning(RuntimeWarning):
    pass


class SiteIndexError(IndexError):
    """A site index outside the tensor structure (topology/indexing bug)."""


# ---------------------------------------------------------------- vectorization


def vectorize(x: np.ndarray) -> np.ndarray:
    """Column-major vectorization.  Works on a single operator or a stack."""
    x = np.asarray(x)
    if x.ndim == 2:
        return x.reshape(-1, order="F")
    return np.swapaxes(x, -1, -2).reshape(*x.shape[:-2], -1)


def devectorize(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    n = v.shape[-1]
    if dim is None:
        dim = int(round(np.sqrt(n)))
    if dim * dim != n:
        raise ValueError(f"vector of length {n} is not a vectorized {dim}x{dim} operator")
    if v.ndim == 1:
        return v.reshape(dim, dim, order="F")
    return np.swapaxes(v.reshape(*v.shape[:-1], dim, dim), -1, -2)


def sprepost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> a @ X @ b``."""
    return np.kron(np.asarray(b).T, np.asarray(a))


def spre(a: np.ndarray) -> np.ndarray:
    return sprepost(a, np.eye(a.shape[0]))


def spost(b: np.ndarray) -> np.ndarray:
    return sprepost(np.eye(b.shape[0]), b)


def hamiltonian_super(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> -i[h, X]``."""
    return -1j * (spre(h) - spost(h))


def dissipator_super(c: np.ndarray, rate: float = 1.0) -> np.ndarray:
    """Superoperator of ``X -> rate/2 (2 c X c^+ - c^+c X - X c^+c)``."""
    cd = c.conj().T
    cdc = cd @ c
    return 0.5 * rate * (2.0 * sprepost(c, cd) - spre(cdc) - spost(cdc))


def apply_super(l: np.ndarray, x: np.ndarray) -> np.ndarray:
    return devectorize(l @ vectorize(x), x.shape[0])


def kron_sum(la: np.ndarray, lb: np.ndarray) -> np.ndarray:
    """Lift two superoperators onto the joint space ``A (x) B``.

    The joint operator ``X (x) Y`` is ordered as in ``np.kron(X, Y)``.
    """
    da = int(round(np.sqrt(la.shape[0])))
    db = int(round(np.sqrt(lb.shape[0])))
    # reorder kron(la, lb), which acts on vec(X) (x) vec(Y), onto vec(X (x) Y)
    perm = _joint_perm(da, db)
    big = np.kron(la, np.eye(lb.shape[0])) + np.kron(np.eye(la.shape[0]), lb)
    return big[np.ix_(perm, perm)]


def _joint_perm(da: int, db: int) -> np.ndarray:
    # entry (i_a j_a) of X and (i_b j_b) of Y; in vec(X)(x)vec(Y) the index is
    # ((j_a*da + i_a)*db*db + j_b*db + i_b); in vec(X(x)Y) the row is
    # i_a*db + i_b and the column j_a*db + j_b.
    ia, ja, ib, jb = np.meshgrid(
        np.arange(da), np.arange(da), np.arange(db), np.arange(db), indexing="ij"
    )
    src = (ja * da + ia) * db * db + jb * db + ib
    d = da * db
    dst = (ja * db + jb) * d + (ia * db + ib)
    perm = np.empty(d * d, dtype=int)
    perm[dst.ravel()] = src.ravel()
    return perm


# ---------------------------------------------------------------- tensor algebra


def kron(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops)


def embed(op: np.ndarray, site: int, dims: Sequence[int]) -> np.ndarray:
    """Place a local operator on ``site`` of a tensor-product space."""
    if not 0 <= site < len(dims):
        raise SiteIndexError(f"site {site} outside 0..{len(dims) - 1}")
    factors = [np.eye(d) for d in dims]
    factors[site] = op
    return kron(*factors)


def partial_trace(x: np.ndarray, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    Kept factors stay in their original order.
    """
    dims = list(dims)
    n = len(dims)
    keep = sorted(set(keep))
    for k in keep:
        if not 0 <= k < n:
            raise SiteIndexError(f"site {k} outside 0..{n - 1}")
    if int(np.prod(dims)) != x.shape[0]:
        raise ValueError(f"dims {dims} do not match operator of size {x.shape[0]}")
    drop = [k for k in range(n) if k not in keep]
    t = x.reshape(dims + dims)
    # contract dropped pairs, highest index first so positions stay valid
    m = n
    for k in sorted(drop, reverse=True):
        t = np.trace(t, axis1=k, axis2=k + m)
        m -= 1
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(dk, dk)


def lowering(dim: int = 2) -> np.ndarray:
    """``sum_n sqrt(n)|n-1><n|``; for a qubit this is ``|0><1|``."""
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of traceless Hermitian matrices, ``Tr(B_a B_b) = delta``.

    Returns an array of shape ``(dim**2 - 1, dim, dim)``.
    """
    out = []
    for j in range(dim):
        for k in range(j + 1, dim):
            s = np.zeros((dim, dim), complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            out.append(s)
            a = np.zeros((dim, dim), complex)
            a[j, k] = -1j / np.sqrt(2)
            a[k, j] = 1j / np.sqrt(2)
            out.append(a)
    for l in range(1, dim):
        diag = np.zeros(dim)
        diag[:l] = 1.0
        diag[l] = -l
        out.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    return np.array(out)


# ---------------------------------------------------------------- matrix functions


def expm(l: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(t*l)`` by scaling and squaring with Pade approximants."""
    if not np.isfinite(t) or not np.all(np.isfinite(l)):
        raise NonFiniteError("expm of a non-finite matrix")
    return sla.expm(t * np.asarray(l))


@dataclass(frozen=True)
class SpectralDecomposition:
    """``l = right @ diag(eigenvalues) @ left``; rows of ``left`` are left
    eigenvectors normalised against the columns of ``right``."""

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residual: float

    def propagator(self, t: float) -> np.ndarray:
        return (self.right * np.exp(self.eigenvalues * t)) @ self.left

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.eigenvalues) @ self.left


def spectral(l: np.ndarray, tol: float = 1e-6) -> SpectralDecomposition:
    """Eigendecomposition sorted by descending real part.

    Raises :class:`DefectiveMatrixError` when the eigenbasis is too
    ill-conditioned to be trusted at ``tol``.
    """
    l = np.asarray(l, dtype=complex)
    if not np.all(np.isfinite(l)):
        raise NonFiniteError("spectral decomposition of a non-finite matrix")
    w, vr = sla.eig(l)
    order = np.lexsort((np.round(w.imag, 12), -np.round(w.real, 12)))
    w, vr = w[order], vr[:, order]
    cond = np.linalg.cond(vr)
    if not np.isfinite(cond) or cond * np.finfo(float).eps > tol:
        raise DefectiveMatrixError(
            f"eigenvector matrix condition {cond:.3g}; use expm-based propagation"
        )
    left = np.linalg.inv(vr)
    n = l.shape[0]
    biorth = np.abs(left @ vr - np.eye(n)).max()
    scale = max(np.linalg.norm(l), 1e-300)
    recon = np.linalg.norm((vr * w) @ left - l) / scale
    residual = float(max(biorth, recon, cond * np.finfo(float).eps))
    if residual > tol:
        raise DefectiveMatrixError(
            f"biorthogonality residual {residual:.3g}; use expm-based propagation"
        )
    return SpectralDecomposition(w, vr, left, residual)


class DecayingInverse(NamedTuple):
    value: np.ndarray
    stationary_norm: float


def stationary_modes(l: np.ndarray, zero_tol: float = 1e-10):
    """Right/left null vectors of ``l`` normalised so that ``left @ right == 1``.

    Returns ``None`` when ``l`` has no zero eigenvalue.
    """
    w, vl, vr = sla.eig(l, left=True, right=True)
    scale = max(1.0, np.abs(w).max())
    zero = np.flatnonzero(np.abs(w.real) < zero_tol * scale)
    if len(zero) > 1:
        raise DegenerateStationaryError(
            f"{len(zero)} eigenvalues with vanishing real part"
        )
    if len(zero) == 0 or abs(w[zero[0]]) > zero_tol * scale:
        return None
    k = zero[0]
    r = vr[:, k]
    lt = vl[:, k].conj()
    return r, lt / (lt @ r)


def decaying_inverse(
    l: np.ndarray,
    m: np.ndarray,
    stationary: tuple[np.ndarray, np.ndarray] | None = None,
    strict: bool = True,
) -> DecayingInverse:
    """Evaluate ``int_0^inf exp(tau*l) m dtau`` on the decaying subspace.

    ``m`` may be a vector or an operator (vectorized internally).  The
    stationary component of ``m`` is projected out and its norm reported; if
    it exceeds ``1e-8 |m|`` the integral does not converge and
    ``KernelNonDecayError`` is raised (a warning when ``strict`` is false).

    ``stationary`` optionally supplies known ``(right, left)`` null vectors
    with ``left @ right == 1``.
    """
    l = np.asarray(l, dtype=complex)
    m_in = np.asarray(m, dtype=complex)
    is_op = m_in.ndim == 2
    mv = vectorize(m_in) if is_op else m_in
    if mv.shape[0] != l.shape[0]:
        raise ValueError(f"source of length {mv.shape[0]} for generator of size {l.shape[0]}")
    if stationary is None:
        stationary = stationary_modes(l)
    scale = max(1.0, np.linalg.norm(l, ord=np.inf))
    if stationary is None:
        qm, st_norm, a = mv, 0.0, l
    else:
        r, lt = stationary
        c = lt @ mv
        st_norm = float(abs(c) * np.linalg.norm(r))
        qm = mv - c * r
        a = l - scale * np.outer(r, lt)
    mnorm = np.linalg.norm(mv)
    if st_norm > 1e-8 * max(mnorm, 1e-300):
        msg = f"stationary component {st_norm:.3g} of |m| = {mnorm:.3g}"
        if strict:
            raise KernelNonDecayError(msg)
        warnings.warn(msg, StationaryComponentWarning, stacklevel=2)
    x = -np.linalg.solve(a, qm)
    if is_op:
        x = devectorize(x, m_in.shape[0])
    return DecayingInverse(x, st_norm)


# ---------------------------------------------------------------- state metrics


def hermiticity_error(x: np.ndarray) -> float:
    return float(np.abs(x - x.conj().T).max())


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a) - np.asarray(b)
    if hermiticity_error(diff) > HERMITIAN_TOL:
        raise ValueError("trace distance requires Hermitian inputs")
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.abs(ev).sum())


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())


def check_density(rho: np.ndarray, tol: float = 1e-12) -> None:
    """Enforce Hermiticity and unit trace; positivity is only a diagnostic."""
    herm = hermiticity_error(rho)
    if herm > tol:
        raise ValueError(f"density matrix not Hermitian (error {herm:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1) > tol:
        raise ValueError(f"density matrix trace {tr:.15g} != 1")
