"""Dense symmetric linear algebra: norms, factorizations, PSD projection,
and the matrix <-> coordinate stacking maps used by the basis machinery.

All matrices are plain float64 ndarrays. Values are never mutated in
place, so results are safe to share across threads.
"""

import math
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """A factorization failed to converge or produced an invalid result."""


def as_matrix(a):
    """Validate and return a finite float64 array."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def is_symmetric(a, tol=0.0):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return np.all(np.abs(a - a.T) <= tol)


def sym_matrix(a):
    """Validate a square, exactly symmetric, finite matrix."""
    a = as_matrix(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.array_equal(a, a.T):
        raise ValueError("matrix is not symmetric")
    return a


def frobenius_norm(a):
    a = np.asarray(a, dtype=float)
    return math.sqrt(float(np.sum(a * a)))


def symmetrize(a):
    """Return (A + A^T)/2. The output is exactly symmetric."""
    a = as_matrix(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cannot symmetrize a non-square matrix")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigendecomposition A = Q diag(w) Q^T with eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def eig_sym(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = as_matrix(a)
    try:
        w, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    return SpectralDecomp(eigenvalues=w, eigenvectors=q)


def project_psd_mu(a, mu):
    """Frobenius-nearest symmetric matrix with all eigenvalues >= mu.

    Eigenvalues below mu are clamped to mu; the eigenbasis is kept.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    dec = eig_sym(a)
    w = np.maximum(dec.eigenvalues, mu)
    out = (dec.eigenvectors * w) @ dec.eigenvectors.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class SvdResult:
    """Singular value decomposition A = u @ diag(sigma) @ vt, sigma descending."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    def reconstruct(self):
        return (self.u * self.sigma) @ self.vt


def svd(a):
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed to converge: {exc}") from exc
    return SvdResult(u=u, sigma=s, vt=vt)


def vec(a):
    """Column-stack a matrix: (A11, ..., Ad1, A12, ..., Add)."""
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, order="F").copy()


def unvec(v, d=None):
    """Inverse of vec for square matrices."""
    v = np.asarray(v, dtype=float)
    if d is None:
        d = math.isqrt(v.size)
    if d * d != v.size:
        raise ValueError(f"cannot reshape length-{v.size} vector to {d}x{d}")
    return v.reshape((d, d), order="F").copy()


def _tril_indices_colmajor(d):
    # Lower-triangular (row, col) pairs ordered column by column.
    rows, cols = np.tril_indices(d)
    order = np.lexsort((rows, cols))
    return rows[order], cols[order]


def svec(a):
    """Stack the lower triangle of a symmetric matrix column by column,
    with strictly-lower entries doubled: (A11, 2*A21, ..., Add)."""
    a = sym_matrix(a)
    d = a.shape[0]
    rows, cols = _tril_indices_colmajor(d)
    w = a[rows, cols].copy()
    w[rows != cols] *= 2.0
    return w


def smat(v):
    """Inverse of svec: rebuild the symmetric matrix from its stacked form."""
    v = np.asarray(v, dtype=float)
    # solve d(d+1)/2 = len(v)
    d = int((math.isqrt(8 * v.size + 1) - 1) // 2)
    if d * (d + 1) // 2 != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    rows, cols = _tril_indices_colmajor(d)
    vals = np.where(rows != cols, 0.5 * v, v)
    a = np.zeros((d, d))
    a[rows, cols] = vals
    a[cols, rows] = vals
    return a


def power_iteration(a, iters=200, tol=1e-12, seed=0):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    a = as_matrix(a)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v_new = w / nw
        lam_new = float(v_new @ (a @ v_new))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        v, lam = v_new, lam_new
    return lam
