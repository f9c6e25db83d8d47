"""Eigendecomposition, elastic net, least squares, matrix exponential."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kooplift.linalg import (
    ComplexSpectrum,
    DefectiveMatrix,
    NotConverged,
    eigen_real,
    elastic_net,
    elastic_net_multi,
    expm,
    lstsq,
    ridge,
    subgradient_residual,
)


def soft(z, g):
    # independent soft-threshold oracle for expected values
    return np.sign(z) * max(abs(z) - g, 0.0)


class TestEigenReal:
    def test_diagonal(self):
        dec = eigen_real(np.diag([-1.0, -5.0]))
        np.testing.assert_allclose(dec.eigenvalues, [-1.0, -5.0], rtol=0, atol=0)
        np.testing.assert_allclose(dec.V, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(dec.W, np.eye(2), atol=1e-14)

    def test_companion(self):
        A = np.array([[0.0, 1.0], [-2.0, -3.0]])
        dec = eigen_real(A)
        np.testing.assert_allclose(dec.eigenvalues, [-1.0, -2.0], atol=1e-12)
        for lam, v in zip(dec.eigenvalues, dec.V.T):
            assert np.linalg.norm(A @ v - lam * v) <= 1e-10

    def test_triangular_adjoint_by_hand(self):
        # A = [[-1, 1], [0, -2]]: v1 = e1, v2 = (1,-1)/sqrt(2); adjoint basis
        # solves W.T V = I, so w1 = (1, 1), w2 = (0, -sqrt(2)).
        A = np.array([[-1.0, 1.0], [0.0, -2.0]])
        dec = eigen_real(A)
        np.testing.assert_allclose(dec.eigenvalues, [-1.0, -2.0], atol=1e-12)
        s = np.sign(dec.V[0])  # fix the sign gauge of each column
        V = dec.V * s
        W = dec.W * s
        np.testing.assert_allclose(V[:, 0], [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(V[:, 1], [1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-12)
        np.testing.assert_allclose(W[:, 0], [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(W[:, 1], [0.0, -np.sqrt(2)], atol=1e-12)

    def test_biorthonormal_and_adjoint_property(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            # build a matrix with known separated real spectrum
            lam = np.sort(rng.uniform(-6.0, -0.5, size=4))[::-1]
            lam += np.arange(4) * -1.0  # enforce gaps
            V0 = rng.normal(size=(4, 4)) + 4 * np.eye(4)
            A = V0 @ np.diag(lam) @ np.linalg.inv(V0)
            dec = eigen_real(A)
            np.testing.assert_allclose(dec.eigenvalues, lam, rtol=1e-8)
            np.testing.assert_allclose(dec.W.T @ dec.V, np.eye(4), atol=1e-9)
            # reconstruction: A = V diag(lam) W.T
            R = dec.V @ np.diag(dec.eigenvalues) @ dec.W.T
            assert np.linalg.norm(R - A) <= 1e-7 * np.linalg.norm(A)
            # columns of W are eigenvectors of A.T
            np.testing.assert_allclose(A.T @ dec.W, dec.W @ np.diag(dec.eigenvalues), atol=1e-8 * np.linalg.norm(A))

    def test_rotation_rejected(self):
        A = np.array([[0.0, -1.0], [1.0, 0.0]])
        with pytest.raises(ComplexSpectrum):
            eigen_real(A)

    def test_repeated_eigenvalue_rejected(self):
        with pytest.raises(DefectiveMatrix):
            eigen_real(-np.eye(2))

    def test_near_defective_rejected(self):
        A = np.array([[1.0, 1.0], [0.0, 1.0 + 1e-14]])
        with pytest.raises(DefectiveMatrix):
            eigen_real(A)

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError):
            eigen_real(np.zeros((2, 3)))


class TestElasticNet:
    def test_exact_fit_unregularized(self):
        X = np.array([[1.0], [2.0]])
        y = np.array([2.0, 4.0])
        np.testing.assert_allclose(elastic_net(X, y, 0.0, 0.0), [2.0], atol=1e-12)

    def test_identity_design_soft_threshold(self):
        # X = I2 makes coordinates separable: the minimizer of
        # (1/2n)(y_j - b)^2 + l1|b| is b = S(y_j, n*l1).
        X = np.eye(2)
        y = np.array([1.0, 0.01])
        n, l1 = 2, 0.05
        expected = np.array([soft(y[0], n * l1), soft(y[1], n * l1)])
        np.testing.assert_allclose(expected, [0.9, 0.0], atol=1e-15)
        beta = elastic_net(X, y, l1, 0.0)
        np.testing.assert_allclose(beta, expected, atol=1e-10)

    def test_huge_l1_gives_zero(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 5))
        y = rng.normal(size=30)
        l1 = np.max(np.abs(X.T @ y)) / 30
        np.testing.assert_array_equal(elastic_net(X, y, l1, 0.0), np.zeros(5))

    def test_unregularized_matches_lstsq(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            X = rng.normal(size=(40, 6))
            y = rng.normal(size=40)
            beta = elastic_net(X, y, 0.0, 0.0, tol=1e-12)
            np.testing.assert_allclose(beta, lstsq(X, y), atol=1e-8)

    def test_ridge_matches_coordinate_descent(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 6))
        Y = rng.normal(size=(50, 3))
        B1 = ridge(X, Y, 0.01)
        B2 = elastic_net_multi(X, Y, 0.0, 0.01, tol=1e-12)
        np.testing.assert_allclose(B1, B2, atol=1e-8)

    def test_multi_matches_single_column(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 8))
        Y = rng.normal(size=(60, 4))
        B = elastic_net_multi(X, Y, 1e-3, 1e-4, tol=1e-12)
        for j in range(Y.shape[1]):
            bj = elastic_net(X, Y[:, j], 1e-3, 1e-4, tol=1e-12)
            np.testing.assert_allclose(B[:, j], bj, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10**6),
        l1=st.sampled_from([0.0, 1e-4, 1e-3, 1e-2, 0.1]),
        l2=st.sampled_from([0.0, 1e-4, 1e-2]),
    )
    def test_subgradient_optimality(self, seed, l1, l2):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 7))
        y = X @ rng.normal(size=7) + 0.1 * rng.normal(size=40)
        beta = elastic_net(X, y, l1, l2, tol=1e-10)
        assert subgradient_residual(X, y, beta, l1, l2) <= 1e-7

    def test_not_converged_carries_partial(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(20, 5))
        y = rng.normal(size=20)
        with pytest.raises(NotConverged) as err:
            elastic_net(X, y, 0.0, 0.0, tol=0.0, max_iter=3)
        assert err.value.iterations == 3
        assert err.value.beta.shape == (5,)

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError):
            elastic_net(np.eye(2), np.ones(2), -1.0, 0.0)

    def test_zero_column_stays_zero(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        y = np.array([1.0, 2.0, 3.0])
        beta = elastic_net(X, y, 0.0, 0.0)
        np.testing.assert_allclose(beta, [1.0, 0.0], atol=1e-10)


class TestLstsq:
    def test_identity(self):
        np.testing.assert_allclose(lstsq(np.eye(3), np.arange(3.0)), np.arange(3.0), atol=1e-14)

    def test_overdetermined_average(self):
        A = np.array([[1.0], [1.0]])
        y = np.array([1.0, 3.0])
        np.testing.assert_allclose(lstsq(A, y), [2.0], atol=1e-12)

    def test_minimum_norm_on_rank_deficient(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        y = np.array([2.0, 2.0])
        np.testing.assert_allclose(lstsq(A, y), [2.0, 0.0], atol=1e-12)


class TestExpm:
    def test_zero(self):
        np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))

    def test_nilpotent(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(expm(A), [[1.0, 1.0], [0.0, 1.0]], atol=1e-15)

    def test_diagonal(self):
        np.testing.assert_allclose(
            expm(np.diag([-1.0, -2.0])), np.diag(np.exp([-1.0, -2.0])), rtol=1e-12
        )

    def test_inverse_identity(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(5, 5))
        A /= max(np.linalg.norm(A, 2), 1.0)
        np.testing.assert_allclose(expm(A) @ expm(-A), np.eye(5), atol=1e-10)
