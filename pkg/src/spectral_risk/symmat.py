"""Dense symmetric matrices, cyclic Jacobi eigensolver and the fidelity measure.

Everything here is small-dimensional (the pipeline works in 2 and 3
dimensions) so clarity wins over speed: eigendecompositions are computed by
cyclic Jacobi rotations rather than delegated to LAPACK.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatchError,
    EigenConvergenceError,
    NotDensityMatrixError,
    NotPSDError,
)

EPS_PSD = 1e-9
TRACE_TOL = 1e-9
FIDELITY_TOL = 1e-9

# Eigenvalues this close to zero (relative to the spectral scale) are rounding
# dust; their square roots (~1e-8) would otherwise pollute the fidelity.
_DUST = 64 * np.finfo(float).eps

_MAX_SWEEPS = 60


class SymMatrix:
    """Immutable dense real symmetric matrix.

    The input is symmetrized as ``(A + A.T) / 2`` so that ``m[i, j] == m[j, i]``
    holds exactly.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionMismatchError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._data = a

    @classmethod
    def outer(cls, u) -> "SymMatrix":
        """Rank-one matrix ``u u^T``."""
        u = np.asarray(getattr(u, "components", u), dtype=float)
        return cls(np.outer(u, u))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self._data))

    def frobenius(self) -> float:
        return float(np.linalg.norm(self._data))

    @cached_property
    def _eig(self) -> "EigenDecomposition":
        return jacobi_eigh(self._data)

    def eig(self) -> "EigenDecomposition":
        return self._eig

    @cached_property
    def _root(self) -> "SymMatrix":
        return _principal_root(self._eig, EPS_PSD)

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    __hash__ = None

    def __repr__(self):
        return f"{type(self).__name__}({self._data.tolist()!r})"


class DensityMatrix(SymMatrix):
    """Symmetric PSD matrix with unit trace (a point of the spectrahedron).

    Args:
        entries: square array-like.
        psd_tol: slack allowed below zero for the smallest eigenvalue.
        trace_tol: allowed deviation of the trace from one.

    Raises:
        NotDensityMatrixError: if either constraint is violated.
    """

    def __init__(self, entries, psd_tol: float = EPS_PSD, trace_tol: float = TRACE_TOL):
        super().__init__(entries)
        tr = self.trace
        if abs(tr - 1.0) > trace_tol:
            raise NotDensityMatrixError(f"trace is {tr!r}, expected 1 within {trace_tol:g}")
        lo = float(self.eig().eigenvalues[0])
        if lo < -psd_tol:
            raise NotDensityMatrixError(f"smallest eigenvalue {lo:.3e} is below -{psd_tol:g}")

    @classmethod
    def pure(cls, u) -> "DensityMatrix":
        """Projector ``u u^T`` of a unit vector."""
        return cls(SymMatrix.outer(u).data)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in ascending order and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _as_array(m) -> np.ndarray:
    if isinstance(m, SymMatrix):
        return m.data
    return np.asarray(m, dtype=float)


def jacobi_eigh(a, max_sweeps: int = _MAX_SWEEPS) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep annihilates every off-diagonal pair once; iteration stops when
    the off-diagonal mass is negligible relative to the Frobenius norm.

    Raises:
        EigenConvergenceError: if ``max_sweeps`` sweeps do not converge.
    """
    a = np.array(_as_array(a), dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if n == 1 or scale == 0.0:
        return _sorted(np.diag(a).copy(), v)
    tol = (np.finfo(float).eps * scale) ** 2
    iu = np.triu_indices(n, 1)

    for sweep in range(max_sweeps):
        off = float(np.sum(a[iu] ** 2))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app, aqq = a[p, p], a[q, q]
                # below rounding of both diagonal entries: zero it outright
                if sweep > 3 and abs(apq) < _DUST * 0.01 * min(abs(app), abs(aqq)):
                    a[p, q] = a[q, p] = 0.0
                    continue
                diff = aqq - app
                if abs(apq) < abs(diff) * 1e-36:
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0

                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        off = float(np.sum(a[iu] ** 2))
        if off > tol:
            raise EigenConvergenceError(
                f"Jacobi iteration did not converge after {max_sweeps} sweeps "
                f"(matrix Frobenius norm {scale:.6g}, residual off-diagonal norm {math.sqrt(off):.3e})"
            )
    return _sorted(np.diag(a).copy(), v)


def _sorted(w: np.ndarray, v: np.ndarray) -> EigenDecomposition:
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomposition(w, v)


def jacobi_singular_values(x, max_sweeps: int = _MAX_SWEEPS) -> np.ndarray:
    """Singular values of a square matrix by one-sided (Hestenes) Jacobi.

    Column pairs are rotated until mutually orthogonal; the rotations
    diagonalize ``X^T X`` without ever forming it, so small singular values
    keep full absolute accuracy. Returned in ascending order.
    """
    cols = np.array(_as_array(x), dtype=float).T.copy()
    n = cols.shape[0]
    eps = np.finfo(float).eps
    # columns at rounding level of the whole matrix carry no signal to rotate
    negligible = (eps * float(np.linalg.norm(cols))) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(cols[i] @ cols[i])
                beta = float(cols[j] @ cols[j])
                gamma = float(cols[i] @ cols[j])
                if min(alpha, beta) <= negligible or abs(gamma) <= eps * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                ci, cj = cols[i].copy(), cols[j]
                cols[i] = c * ci - s * cj
                cols[j] = s * ci + c * cj
        if not rotated:
            break
    else:
        raise EigenConvergenceError(
            f"one-sided Jacobi did not converge after {max_sweeps} sweeps "
            f"(matrix Frobenius norm {float(np.linalg.norm(cols)):.6g})"
        )
    return np.sort(np.sqrt(np.sum(cols * cols, axis=1)))


def eig(a: SymMatrix) -> EigenDecomposition:
    """Eigendecomposition with eigenvalues in ascending order."""
    if isinstance(a, SymMatrix):
        return a.eig()
    return SymMatrix(a).eig()


def sqrt_psd(a, psd_tol: float = EPS_PSD) -> SymMatrix:
    """Principal square root of a PSD matrix.

    Eigenvalues in ``(-psd_tol, 0)`` and rounding dust are clamped to zero.

    Raises:
        NotPSDError: if an eigenvalue is below ``-psd_tol``.
    """
    if isinstance(a, SymMatrix) and psd_tol == EPS_PSD:
        return a._root
    return _principal_root(eig(a), psd_tol)


def _principal_root(d: EigenDecomposition, psd_tol: float) -> SymMatrix:
    w = _clamp_spectrum(d.eigenvalues, psd_tol)
    vecs = d.eigenvectors
    return SymMatrix((vecs * np.sqrt(w)) @ vecs.T)


def _clamp_spectrum(w: np.ndarray, psd_tol: float) -> np.ndarray:
    lo = float(w[0])
    if lo < -psd_tol:
        raise NotPSDError(lo)
    scale = max(1.0, float(np.max(np.abs(w))))
    return np.where(w <= _DUST * scale, 0.0, w)


def trace_inner(p, q) -> float:
    """Trace inner product ``Tr(P^T Q)``, i.e. the sum of elementwise products."""
    p, q = _as_array(p), _as_array(q)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(p * q))


def fidelity(p: DensityMatrix, q: DensityMatrix) -> float:
    """Fidelity ``Tr sqrt(P^{1/2} Q P^{1/2})`` between two density matrices.

    The result is checked to lie in ``[-1e-9, 1 + 1e-9]`` and then clamped to
    ``[0, 1]``.
    """
    if not isinstance(p, DensityMatrix):
        p = DensityMatrix(p)
    if not isinstance(q, DensityMatrix):
        q = DensityMatrix(q)
    if p.dim != q.dim:
        raise DimensionMismatchError(f"dimension mismatch: {p.dim} vs {q.dim}")
    # Tr sqrt(P^1/2 Q P^1/2) is the sum of singular values of P^1/2 Q^1/2;
    # taking them directly avoids square-rooting eigenvalue round-off.
    x = sqrt_psd(p).data @ sqrt_psd(q).data
    value = float(np.sum(jacobi_singular_values(x)))
    return _checked_unit(value, "fidelity")


def fidelity_pure(e, rho: DensityMatrix) -> float:
    """Fidelity of the projector ``e e^T`` against ``rho``: ``sqrt(e^T rho e)``.

    ``e`` is a unit vector (or a FeatureVector); a zero vector gives 0.
    """
    u = np.asarray(getattr(e, "components", e), dtype=float)
    r = _as_array(rho)
    if u.shape != (r.shape[0],):
        raise DimensionMismatchError(f"vector of shape {u.shape} against {r.shape[0]}x{r.shape[0]} matrix")
    if not np.any(u):
        return 0.0
    value = math.sqrt(max(float(u @ r @ u), 0.0))
    return _checked_unit(value, "pure-state fidelity")


def _checked_unit(value: float, what: str) -> float:
    if value < -FIDELITY_TOL or value > 1.0 + FIDELITY_TOL:
        raise ArithmeticError(f"{what} {value!r} outside [0, 1] beyond tolerance {FIDELITY_TOL:g}")
    return min(max(value, 0.0), 1.0)
