"""Dense symmetric linear algebra shared by every other module.

All routines work on 64-bit floats and accept either a :class:`SymMatrix`
or a plain square ``ndarray`` (coerced, symmetrized).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, InvalidInputError, NotPositiveDefiniteError

# Cholesky pivots at or below this are treated as not positive definite.
PD_PIVOT_TOL = 1e-12


class SymMatrix:
    """Dense symmetric matrix, symmetrized to (A + A^T)/2 at construction."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = np.asarray(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise InvalidInputError("matrix dimension must be at least 1")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("matrix entries must be finite")
        sym = a + a.T
        sym *= 0.5
        sym.setflags(write=False)
        self.entries = sym

    @classmethod
    def trusted(cls, entries: np.ndarray) -> "SymMatrix":
        """Wrap an array the caller guarantees is exactly symmetric and finite.

        Skips validation and the symmetrizing copy; for internal producers
        whose construction preserves exact symmetry.
        """
        obj = cls.__new__(cls)
        entries.setflags(write=False)
        obj.entries = entries
        return obj

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim})"


class EigenDecomposition(NamedTuple):
    """Eigenpairs of a symmetric matrix; values ascending, vectors in columns."""

    values: np.ndarray
    vectors: np.ndarray


def as_array(a) -> np.ndarray:
    """Return the ndarray behind a SymMatrix, or validate a raw square array."""
    if isinstance(a, SymMatrix):
        return a.entries
    return SymMatrix(a).entries


def sym_eigendecompose(a) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    Deterministic for a fixed input; values come back sorted ascending and
    the vectors form an orthonormal basis (columns).
    """
    m = as_array(a)
    try:
        values, vectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - hard to trigger
        raise ConvergenceError(f"eigendecomposition failed to converge: {exc}") from exc
    return EigenDecomposition(values=values, vectors=vectors)


def cholesky_factor(a, tol: float = PD_PIVOT_TOL) -> np.ndarray:
    """Lower-triangular Cholesky factor of a positive definite matrix.

    Raises :class:`NotPositiveDefiniteError` naming the first pivot whose
    squared diagonal value falls at or below ``tol``.
    """
    m = as_array(a)
    try:
        factor = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return _cholesky_slow(m, tol)
    piv = factor.diagonal() ** 2
    bad = np.nonzero(piv <= tol)[0]
    if bad.size:
        j = int(bad[0])
        raise NotPositiveDefiniteError(pivot=j, value=float(piv[j]))
    return factor

def _cholesky_slow(m: np.ndarray, tol: float) -> np.ndarray:
    # Row-by-row factorization used only to locate the failing pivot once
    # the LAPACK fast path has rejected the matrix.
    n = m.shape[0]
    factor = np.zeros_like(m)
    for j in range(n):
        d = m[j, j] - factor[j, :j] @ factor[j, :j]
        if not d > tol:
            raise NotPositiveDefiniteError(pivot=j, value=float(d))
        factor[j, j] = math.sqrt(d)
        if j + 1 < n:
            factor[j + 1 :, j] = (m[j + 1 :, j] - factor[j + 1 :, :j] @ factor[j, :j]) / factor[j, j]
    return factor


def log_det(a, tol: float = PD_PIVOT_TOL) -> float:
    """log det of a positive definite matrix via Cholesky.

    Equals the sum of 2*log(d_jj) over the factor diagonal; raises
    :class:`NotPositiveDefiniteError` on non-PD input.
    """
    factor = cholesky_factor(a, tol=tol)
    return float(2.0 * np.sum(np.log(factor.diagonal())))


def is_psd(a, tol: float = 1e-8) -> bool:
    """True iff the smallest eigenvalue is >= -tol."""
    m = as_array(a)
    values = np.linalg.eigvalsh(m)
    return bool(values[0] >= -tol)


def psd_project(a) -> SymMatrix:
    """Nearest-PSD repair: clip negative eigenvalues to zero and rebuild.

    Offered as an explicit operation; nothing in this package applies it
    silently.
    """
    decomp = sym_eigendecompose(a)
    clipped = np.maximum(decomp.values, 0.0)
    rebuilt = (decomp.vectors * clipped) @ decomp.vectors.T
    return SymMatrix(rebuilt)
