"""Dense linear algebra: norms, factorizations, PSD projection, and the
stacking maps."""

import math

import numpy as np
import pytest

from basiskit.linalg import (
    eig_sym, frobenius_norm, project_psd_mu, smat, svd, svec, sym_matrix,
    symmetrize, unvec, vec,
)


class TestFrobeniusNorm:
    def test_identity(self):
        assert frobenius_norm(np.eye(2)) == pytest.approx(math.sqrt(2))

    def test_zero(self):
        assert frobenius_norm(np.zeros((3, 3))) == 0.0

    def test_three_four_five(self):
        assert frobenius_norm(np.array([[3.0, 4.0], [0.0, 0.0]])) == pytest.approx(5.0)


class TestSymmetrize:
    def test_basic(self):
        out = symmetrize(np.array([[1.0, 2.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(out, [[1.0, 1.0], [1.0, 1.0]])

    def test_symmetric_unchanged(self):
        a = np.array([[2.0, -1.0], [-1.0, 3.0]])
        np.testing.assert_array_equal(symmetrize(a), a)

    def test_skew_annihilated(self):
        a = np.array([[0.0, 4.0], [-4.0, 0.0]])
        np.testing.assert_array_equal(symmetrize(a), np.zeros((2, 2)))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            symmetrize(np.zeros((2, 3)))

    def test_contraction_toward_symmetric(self):
        # ||sym(B) - A||_F <= ||B - A||_F for symmetric A
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = rng.integers(2, 6)
            b = rng.standard_normal((d, d))
            a = rng.standard_normal((d, d))
            a = 0.5 * (a + a.T)
            assert frobenius_norm(symmetrize(b) - a) <= frobenius_norm(b - a) + 1e-12

    def test_output_exactly_symmetric(self):
        rng = np.random.default_rng(1)
        b = rng.standard_normal((7, 7))
        out = symmetrize(b)
        assert np.array_equal(out, out.T)


def _charpoly_roots(a):
    """Eigenvalue oracle: characteristic polynomial coefficients by the
    Faddeev-LeVerrier recurrence (traces and matrix products only),
    roots via the companion matrix."""
    d = a.shape[0]
    coeffs = np.zeros(d + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, d + 1):
        m = a @ m + coeffs[k - 1] * np.eye(d)
        coeffs[k] = -np.trace(a @ m) / k
    return np.sort(np.roots(coeffs).real)


class TestEigSym:
    def test_diagonal(self):
        dec = eig_sym(np.diag([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(dec.eigenvalues, [1.0, 2.0, 3.0])

    def test_identity(self):
        dec = eig_sym(np.eye(4))
        np.testing.assert_allclose(dec.eigenvalues, np.ones(4))

    def test_matches_charpoly_roots(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a = rng.standard_normal((5, 5))
            a = 0.5 * (a + a.T)
            dec = eig_sym(a)
            np.testing.assert_allclose(
                np.sort(dec.eigenvalues), _charpoly_roots(a), atol=1e-8
            )

    def test_reconstruction_and_orthogonality(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((9, 9))
        a = 0.5 * (a + a.T)
        dec = eig_sym(a)
        scale = 1.0 + frobenius_norm(a)
        assert frobenius_norm(dec.reconstruct() - a) <= 1e-10 * scale
        q = dec.eigenvectors
        assert np.abs(q.T @ q - np.eye(9)).max() <= 1e-10


class TestProjectPsdMu:
    def test_already_feasible(self):
        a = np.diag([2.0, 3.0])
        np.testing.assert_allclose(project_psd_mu(a, 1.0), a, atol=1e-12)

    def test_eigenvalue_clamp(self):
        out = project_psd_mu(np.diag([-1.0, 2.0]), 0.5)
        np.testing.assert_allclose(out, np.diag([0.5, 2.0]), atol=1e-12)

    def test_result_feasible(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((4, 4))
        a = 0.5 * (a + a.T)
        out = project_psd_mu(a, 0.3)
        assert np.linalg.eigvalsh(out).min() >= 0.3 - 1e-12
        assert np.array_equal(out, out.T)

    def test_nearest_point_against_sampling(self):
        # no sampled feasible matrix may be strictly closer in Frobenius norm
        rng = np.random.default_rng(3)
        a = rng.standard_normal((3, 3))
        a = 0.5 * (a + a.T)
        mu = 0.1
        proj = project_psd_mu(a, mu)
        best = frobenius_norm(a - proj)
        for _ in range(10_000):
            # random feasible candidates, some near the projection
            if rng.random() < 0.5:
                pert = rng.standard_normal((3, 3)) * rng.choice([1e-3, 1e-1, 1.0])
                cand = proj + 0.5 * (pert + pert.T)
                cand = project_psd_mu(cand, mu)
            else:
                q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
                vals = mu + np.abs(rng.standard_normal(3)) * 2.0
                cand = (q * vals) @ q.T
            assert frobenius_norm(a - cand) >= best - 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((5, 5))
        a = 0.5 * (a + a.T)
        once = project_psd_mu(a, 0.2)
        twice = project_psd_mu(once, 0.2)
        assert frobenius_norm(twice - once) <= 1e-12 * (1 + frobenius_norm(once))

    def test_rejects_nonpositive_mu(self):
        with pytest.raises(ValueError):
            project_psd_mu(np.eye(2), 0.0)


class TestSvd:
    def test_diagonal(self):
        dec = svd(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(dec.sigma, [3.0, 1.0])

    def test_zero(self):
        dec = svd(np.zeros((3, 3)))
        np.testing.assert_allclose(dec.sigma, np.zeros(3))

    def test_sigma_matches_gram_eigenvalues(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.standard_normal((4, 4))
            dec = svd(a)
            gram_eigs = np.linalg.eigvalsh(a.T @ a)
            np.testing.assert_allclose(
                np.sort(dec.sigma), np.sqrt(np.maximum(np.sort(gram_eigs), 0.0)),
                atol=1e-8,
            )

    def test_reconstruction(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((6, 6))
        dec = svd(a)
        scale = 1.0 + frobenius_norm(a)
        assert frobenius_norm(dec.reconstruct() - a) <= 1e-10 * scale
        assert np.all(np.diff(dec.sigma) <= 0)
        assert np.all(dec.sigma >= 0)


class TestVecUnvec:
    def test_column_order(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(vec(a), [1.0, 3.0, 2.0, 4.0])

    def test_roundtrip(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((5, 5))
        np.testing.assert_array_equal(unvec(vec(a)), a)

    def test_unit_matrix(self):
        e = np.zeros((2, 2))
        e[0, 0] = 1.0
        np.testing.assert_array_equal(vec(e), [1.0, 0.0, 0.0, 0.0])

    def test_unvec_length_mismatch(self):
        with pytest.raises(ValueError):
            unvec(np.arange(5.0))

    def test_linear(self):
        rng = np.random.default_rng(10)
        a, b = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        lhs = vec(2.0 * a + 3.0 * b)
        rhs = 2.0 * vec(a) + 3.0 * vec(b)
        assert np.abs(lhs - rhs).max() <= 1e-12


class TestSvecSmat:
    def test_doubled_offdiagonal(self):
        a = np.array([[1.0, 2.0], [2.0, 5.0]])
        np.testing.assert_array_equal(svec(a), [1.0, 4.0, 5.0])

    def test_identity(self):
        np.testing.assert_array_equal(
            svec(np.eye(3)), [1.0, 0.0, 0.0, 1.0, 0.0, 1.0]
        )

    def test_roundtrip(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((6, 6))
        a = 0.5 * (a + a.T)
        np.testing.assert_allclose(smat(svec(a)), a, atol=1e-15)

    def test_smat_rejects_bad_length(self):
        with pytest.raises(ValueError):
            smat(np.arange(4.0))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            svec(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_linear(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((5, 5))
        a = 0.5 * (a + a.T)
        b = rng.standard_normal((5, 5))
        b = 0.5 * (b + b.T)
        lhs = svec(0.5 * a - 2.0 * b)
        rhs = 0.5 * svec(a) - 2.0 * svec(b)
        assert np.abs(lhs - rhs).max() <= 1e-12


class TestSymMatrix:
    def test_accepts_exact(self):
        a = np.array([[1.0, 2.0], [2.0, 1.0]])
        np.testing.assert_array_equal(sym_matrix(a), a)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sym_matrix(np.array([[1.0, 2.0], [2.0 + 1e-14, 1.0]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            sym_matrix(np.array([[np.nan, 0.0], [0.0, 1.0]]))
