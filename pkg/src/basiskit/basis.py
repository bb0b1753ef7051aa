"""Bases of the d x d matrix space and of its symmetric subspace, with
coefficient maps and their inverses.

A basis turns a matrix into a d x d grid of coefficients (`coeffs`) and
back (`reconstruct`). For the symmetric subspace the grid is symmetric
and stores half the coefficient on each off-diagonal mirror pair, so
`reconstruct` is always the plain sum over all (j, l) grid positions
with the convention element(l, j) == element(j, l).

The named bases carry closed-form coefficient maps; the transition
matrix (whose columns stack the basis elements) is materialized only on
demand for conditioning reports, because a dense N x N solve with
N = d^2 is infeasible beyond tiny d.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import frobenius_norm, svec, smat, sym_matrix, vec

# transition matrices above this size are never materialized
_MATERIALIZE_CAP = 4096


@dataclass(frozen=True)
class BasisConditioning:
    """Operator norms of the inverse transition matrix plus the largest
    element norm; inputs to the coefficient-Lipschitz constant bounds."""

    inv_norm_2: float
    inv_norm_inf: float
    max_element_norm: float


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of the span of one client's data vectors."""

    vectors: np.ndarray  # d x r, orthonormal columns
    rank: int

    @property
    def dim(self):
        return self.vectors.shape[0]


class MatrixBasis:
    """Common interface: coefficient grid <-> matrix maps plus metadata."""

    space = "full"  # or "sym"
    closed_form = None
    psd_elements = False
    orthogonal = False

    def __init__(self, d):
        self.d = int(d)

    @property
    def n_elements(self):
        if self.space == "sym":
            return self.d * (self.d + 1) // 2
        return self.d * self.d

    @property
    def n_b(self):
        """1 when the elements are pairwise Frobenius-orthogonal, else d^2."""
        return 1 if self.orthogonal else self.d * self.d

    @property
    def active_count(self):
        """Number of coefficient-grid degrees of freedom actually used."""
        return self.n_elements

    @property
    def gradient_coeff_count(self):
        """Floats needed to transmit a gradient in this basis's coordinates."""
        return self.d

    def element(self, j, l):
        raise NotImplementedError

    def coeffs(self, a):
        raise NotImplementedError

    def reconstruct(self, grid):
        raise NotImplementedError

    @property
    def max_element_norm(self):
        raise NotImplementedError

    def _column_pairs(self):
        """(j, l) element order matching vec/svec of the coefficient grid."""
        d = self.d
        if self.space == "sym":
            return [(j, l) for l in range(d) for j in range(l, d)]
        return [(j, l) for l in range(d) for j in range(d)]

    def transition_matrix(self):
        """Stack of the (s)vec'd elements, one column per grid position."""
        n = self.n_elements
        if n > _MATERIALIZE_CAP:
            raise ValueError(
                f"transition matrix of size {n} exceeds the materialization cap"
            )
        stack = vec if self.space == "full" else svec
        cols = [stack(self.element(j, l)) for (j, l) in self._column_pairs()]
        return np.column_stack(cols)

    def conditioning(self):
        b = self.transition_matrix()
        inv = np.linalg.inv(b)
        return BasisConditioning(
            inv_norm_2=float(np.linalg.norm(inv, 2)),
            inv_norm_inf=float(np.linalg.norm(inv, np.inf)),
            max_element_norm=self.max_element_norm,
        )

    def coeff_lipschitz_bounds(self, hess_lip_frob, hess_lip_entry,
                               hess_entry_max=None):
        """Bounds on the coefficient-map Lipschitz constants, given the
        Hessian's Frobenius / entrywise Lipschitz constants (and, for the
        symmetric space, a bound on Hessian entries)."""
        cond = self.conditioning()
        if self.space == "full":
            return {
                "M1": cond.inv_norm_2 * hess_lip_frob,
                "M2": cond.inv_norm_inf * hess_lip_entry,
                "R": cond.max_element_norm,
            }
        out = {
            "M4": math.sqrt(2.0) * cond.inv_norm_2 * hess_lip_frob,
            "M5": 2.0 * cond.inv_norm_inf * hess_lip_entry,
            "R": cond.max_element_norm,
        }
        if hess_entry_max is not None:
            out["M3"] = 2.0 * hess_entry_max * cond.inv_norm_inf
        return out


class StandardBasis(MatrixBasis):
    """Unit matrices E_jl; the coefficient grid is the matrix itself."""

    closed_form = "standard"
    orthogonal = True

    def element(self, j, l):
        e = np.zeros((self.d, self.d))
        e[j, l] = 1.0
        return e

    def coeffs(self, a):
        return np.array(a, dtype=float)

    def reconstruct(self, grid):
        return np.array(grid, dtype=float)

    @property
    def max_element_norm(self):
        return 1.0

    def conditioning(self):
        return BasisConditioning(1.0, 1.0, 1.0)


class TriangularSymBasis(MatrixBasis):
    """Symmetric pair elements E_jl + E_lj on and below the diagonal and
    antisymmetric pairs E_jl - E_lj above it; for symmetric input the
    coefficients are its lower triangle."""

    closed_form = "triangular_sym"
    orthogonal = True

    def element(self, j, l):
        e = np.zeros((self.d, self.d))
        if j >= l:
            e[j, l] = 1.0
            e[l, j] = 1.0
        else:
            e[j, l] = 1.0
            e[l, j] = -1.0
        return e

    def coeffs(self, a):
        a = np.asarray(a, dtype=float)
        s = 0.5 * (a + a.T)
        k = 0.5 * (a - a.T)
        return np.tril(s, -1) + np.triu(k, 1) + np.diag(np.diag(a))

    def reconstruct(self, grid):
        g = np.asarray(grid, dtype=float)
        s = g + g.T
        k = g - g.T
        return np.tril(k, -1) + np.triu(s, 1) + np.diag(np.diag(g))

    @property
    def max_element_norm(self):
        return math.sqrt(2.0) if self.d > 1 else 1.0


class PsdSymBasis(MatrixBasis):
    """Basis of the symmetric subspace whose elements are all PSD:
    the off-diagonal element for the pair (j, l) is (e_j+e_l)(e_j+e_l)^T
    and the diagonal element is E_jj."""

    space = "sym"
    closed_form = "psd_sym"
    psd_elements = True

    def element(self, j, l):
        e = np.zeros((self.d, self.d))
        if j == l:
            e[j, j] = 1.0
        else:
            e[j, l] = e[l, j] = e[j, j] = e[l, l] = 1.0
        return e

    def coeffs(self, a):
        a = sym_matrix(a)
        # basis coefficients: off-diagonal c_jl = A_jl,
        # diagonal c_jj = A_jj - sum_{l != j} A_jl; grid halves off-diagonals
        grid = 0.5 * a
        off_rowsum = a.sum(axis=1) - np.diag(a)
        np.fill_diagonal(grid, np.diag(a) - off_rowsum)
        return grid

    def reconstruct(self, grid):
        g = np.asarray(grid, dtype=float)
        out = g + g.T
        off_rowsum = g.sum(axis=1) + g.sum(axis=0) - 2.0 * np.diag(g)
        np.fill_diagonal(out, np.diag(g) + off_rowsum)
        return out

    @property
    def max_element_norm(self):
        return 2.0 if self.d > 1 else 1.0


class SubspaceMatrixBasis(MatrixBasis):
    """Outer products v_t v_l^T of an orthonormal family completed to a
    full orthonormal basis of R^d; equivalently the standard basis in
    rotated coordinates, so coefficients are W^T A W.

    Matrices built from data inside the subspace have all their
    coefficients inside the leading rank x rank block, which is the
    whole point: that block is what gets transmitted.
    """

    closed_form = "data_subspace"
    orthogonal = True

    def __init__(self, subspace, d=None):
        v = np.asarray(subspace.vectors, dtype=float)
        if d is None:
            d = v.shape[0]
        if v.shape[0] != d:
            raise ValueError("subspace dimension does not match d")
        if subspace.rank > d:
            raise ValueError("subspace rank exceeds the ambient dimension")
        super().__init__(d)
        self.rank = subspace.rank
        q, _ = np.linalg.qr(v, mode="complete")
        w = np.hstack([v, q[:, self.rank:]])
        gram_err = np.abs(w.T @ w - np.eye(d)).max()
        if gram_err > 1e-10:
            raise ValueError(f"basis completion failed (orthogonality error {gram_err:.2e})")
        self.w = w

    def element(self, j, l):
        return np.outer(self.w[:, j], self.w[:, l])

    def coeffs(self, a):
        a = np.asarray(a, dtype=float)
        return self.w.T @ a @ self.w

    def reconstruct(self, grid):
        g = np.asarray(grid, dtype=float)
        return self.w @ g @ self.w.T

    @property
    def active_count(self):
        return self.rank * self.rank

    @property
    def gradient_coeff_count(self):
        return self.rank

    @property
    def max_element_norm(self):
        return 1.0


class GenericBasis(MatrixBasis):
    """Arbitrary element family; the coefficient map solves the stacked
    linear system through an LU factorization computed once. Intended
    for small dimensions and for cross-checking the closed forms."""

    def __init__(self, elements, space="full"):
        d = np.asarray(elements[0]).shape[0]
        super().__init__(d)
        self.space = space
        n = self.n_elements
        if len(elements) != n:
            raise ValueError(f"expected {n} elements, got {len(elements)}")
        self._elements = [np.array(e, dtype=float) for e in elements]
        if space == "sym":
            for e in self._elements:
                sym_matrix(e)
        stack = vec if space == "full" else svec
        self._transition = np.column_stack([stack(e) for e in self._elements])
        with warnings.catch_warnings():
            # singularity is detected and raised below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu = scipy.linalg.lu_factor(self._transition)
        piv_min = np.abs(np.diag(self._lu[0])).min()
        scale = np.abs(self._transition).max()
        if piv_min <= 1e-12 * max(1.0, scale):
            raise ValueError("elements are not a basis (transition matrix is singular)")
        gram = np.array([
            [float(np.sum(a * b)) for b in self._elements] for a in self._elements
        ])
        self.orthogonal = bool(
            np.abs(gram - np.diag(np.diag(gram))).max() <= 1e-10
        )
        self.psd_elements = all(
            np.linalg.eigvalsh(e).min() >= -1e-10 for e in self._elements
            if np.array_equal(e, e.T)
        ) and all(np.array_equal(e, e.T) for e in self._elements)

    def element(self, j, l):
        if self.space == "sym" and j < l:
            j, l = l, j
        pairs = self._column_pairs()
        return self._elements[pairs.index((j, l))]

    def transition_matrix(self):
        return self._transition.copy()

    def coeffs(self, a):
        a = np.asarray(a, dtype=float)
        if self.space == "full":
            coefvec = scipy.linalg.lu_solve(self._lu, vec(a))
            return coefvec.reshape((self.d, self.d), order="F")
        coefvec = scipy.linalg.lu_solve(self._lu, svec(a))
        grid = np.zeros((self.d, self.d))
        for c, (j, l) in zip(coefvec, self._column_pairs()):
            if j == l:
                grid[j, j] = c
            else:
                grid[j, l] = grid[l, j] = 0.5 * c
        return grid

    def reconstruct(self, grid):
        g = np.asarray(grid, dtype=float)
        out = np.zeros((self.d, self.d))
        if self.space == "full":
            for e, (j, l) in zip(self._elements, self._column_pairs()):
                out += g[j, l] * e
        else:
            for e, (j, l) in zip(self._elements, self._column_pairs()):
                c = g[j, j] if j == l else g[j, l] + g[l, j]
                out += c * e
        return out

    @property
    def max_element_norm(self):
        return max(frobenius_norm(e) for e in self._elements)


def standard_basis(d):
    return StandardBasis(d)


def triangular_sym_basis(d):
    return TriangularSymBasis(d)


def psd_sym_basis(d):
    return PsdSymBasis(d)


def data_subspace_basis(data, tol=1e-10):
    """Orthonormal basis of the row span of the given data vectors.

    The rank is the number of singular values above tol * sigma_max;
    every data vector must lie in the recovered span to within 1e-8
    relative residual.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("expected a non-empty 2-D array of data vectors")
    norms = np.linalg.norm(x, axis=1)
    if np.all(norms == 0.0):
        raise ValueError("all data vectors are zero")
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    r = int(np.sum(s > tol * s[0]))
    v = vt[:r].T
    resid = x - (x @ v) @ v.T
    bad = np.linalg.norm(resid, axis=1) > 1e-8 * np.maximum(norms, 1e-300)
    if np.any(bad):
        raise ValueError("data vectors fall outside the recovered span")
    return SubspaceBasis(vectors=v, rank=r)


def subspace_matrix_basis(subspace, d=None):
    return SubspaceMatrixBasis(subspace, d)


def outer_product_rank(vectors):
    """Rank of the stacked outer products {v_t v_l^T}; equals r^2 exactly
    when the r vectors are linearly independent."""
    v = np.asarray(vectors, dtype=float)
    r = v.shape[1]
    cols = [vec(np.outer(v[:, t], v[:, l])) for t in range(r) for l in range(r)]
    return int(np.linalg.matrix_rank(np.column_stack(cols)))


def build_basis(tag, d, shard_features=None, tol=1e-10):
    """Construct a basis by config tag, one per client for data bases."""
    if tag == "standard":
        return StandardBasis(d)
    if tag == "triangular_sym":
        return TriangularSymBasis(d)
    if tag == "psd_sym":
        return PsdSymBasis(d)
    if tag == "data_subspace":
        if shard_features is None:
            raise ValueError("data_subspace basis needs the client's data")
        return SubspaceMatrixBasis(data_subspace_basis(shard_features, tol), d)
    raise ValueError(f"unknown basis tag: {tag!r}")
