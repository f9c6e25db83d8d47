"""Eigenfunction construction: principal pairs, exponent tuples, scaling,
basis evaluation and its invariants."""

import json

import numpy as np
import pytest

from kooplift.koopman import (
    EigenfunctionBasis,
    InsufficientDegree,
    ScalingMap,
    UnstableClosedLoop,
    build_basis,
    generate_tuples,
    principal_eigenpairs,
    tuple_eigenvalue,
)
from kooplift.linalg import DefectiveMatrix, expm


class TestPrincipal:
    def test_diagonal_system(self):
        dec = principal_eigenpairs(np.diag([-1.0, -5.0]))
        np.testing.assert_allclose(dec.eigenvalues, [-1.0, -5.0], atol=0)
        np.testing.assert_allclose(dec.W, np.eye(2), atol=1e-14)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableClosedLoop):
            principal_eigenpairs(np.diag([0.5, -1.0]))

    def test_repeated_eigenvalues_rejected(self):
        with pytest.raises(DefectiveMatrix):
            principal_eigenpairs(-np.eye(2))


class TestTuples:
    def test_first_tuples_are_principal(self):
        np.testing.assert_array_equal(generate_tuples(2, 2, 3), [[1, 0], [0, 1]])

    def test_graded_lexicographic_order(self):
        expected = [[1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
        np.testing.assert_array_equal(generate_tuples(2, 5, 2), expected)

    def test_insufficient_degree(self):
        with pytest.raises(InsufficientDegree):
            generate_tuples(2, 6, 2)  # only 5 tuples of degree <= 2 exist

    def test_deterministic(self):
        a = generate_tuples(4, 81, 5)
        b = generate_tuples(4, 81, 5)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (81, 4)
        # degrees are nondecreasing along the list
        degrees = a.sum(axis=1)
        assert np.all(np.diff(degrees) >= 0)

    def test_count_bound(self):
        # 4 variables have C(k+3,3) tuples of degree exactly k; cumulative
        # 4, 14, 34, 69, 125 for degrees 1..5
        assert generate_tuples(4, 125, 5).shape == (125, 4)
        with pytest.raises(InsufficientDegree):
            generate_tuples(4, 126, 5)

    def test_product_eigenvalue_is_weighted_sum(self):
        lam = np.array([-1.0, -5.0])
        assert tuple_eigenvalue(np.array([1, 0]), lam) == -1.0
        assert tuple_eigenvalue(np.array([1, 1]), lam) == -6.0
        assert tuple_eigenvalue(np.array([2, 1]), lam) == -7.0

    def test_product_eigenvalue_against_simulated_flow(self):
        # oracle: for ydot = diag(lam) y the product y1*y2 must decay at the
        # summed rate
        lam = np.array([-1.0, -5.0])
        y0 = np.array([0.8, -0.6])
        rate = tuple_eigenvalue(np.array([1, 1]), lam)
        for t in np.linspace(0.0, 2.0, 9):
            y = expm(np.diag(lam) * t) @ y0
            assert abs(y[0] * y[1] - np.exp(rate * t) * y0[0] * y0[1]) <= 1e-9


class TestScaling:
    def test_radii_from_data(self):
        states = np.array([[1.0, -2.0], [0.5, 4.0]])
        scaling = ScalingMap.from_data(states, margin=1.1)
        np.testing.assert_allclose(scaling.radii, [1.1, 4.4], rtol=1e-15)
        scaled = scaling.apply(states)
        assert np.max(np.abs(scaled)) <= 1.0 / 1.1 + 1e-12

    def test_dead_dimension_keeps_unit_radius(self):
        scaling = ScalingMap.from_data(np.array([[1.0, 0.0], [2.0, 0.0]]))
        np.testing.assert_allclose(scaling.radii, [2.2, 1.0])

    def test_bad_margin_rejected(self):
        with pytest.raises(ValueError):
            ScalingMap.from_data(np.ones((2, 2)), margin=0.0)


class TestBasis:
    def stable_basis(self, count=9, diffeo=None):
        # construct a closed loop with known distinct real spectrum
        rng = np.random.default_rng(0)
        V0 = rng.normal(size=(4, 4)) + 3 * np.eye(4)
        A_cl = V0 @ np.diag([-1.5, -2.5, -3.5, -4.5]) @ np.linalg.inv(V0)
        states = rng.uniform(-2, 2, size=(50, 4))
        return build_basis(A_cl, states, count, max_degree=3, diffeo=diffeo), A_cl

    def test_identity_diffeo_principal_functions_are_scaled_projections(self):
        A_cl = np.diag([-1.0, -5.0])
        states = np.array([[2.0, 0.5], [-1.0, -0.25]])
        basis = build_basis(A_cl, states, count=2, max_degree=1)
        x = np.array([0.4, -0.1])
        phi = basis.evaluate(x)
        # for a diagonal closed loop each psi_j is proportional to y_j, and
        # the sup-norm normalization over the data pins the constant: the
        # margin in the scaling radii cancels against the data peak
        np.testing.assert_allclose(phi, [x[0] / 2.0, x[1] / 0.5], rtol=1e-12)

    def test_principal_functions_peak_at_one_on_training_data(self):
        rng = np.random.default_rng(5)
        V0 = rng.normal(size=(4, 4)) + 3 * np.eye(4)
        A_cl = V0 @ np.diag([-1.5, -2.5, -3.5, -4.5]) @ np.linalg.inv(V0)
        states = rng.uniform(-2, 2, size=(60, 4))
        basis = build_basis(A_cl, states, count=14, max_degree=3)
        Phi = np.abs(basis.evaluate(states))
        degree_one = basis.exponents.sum(axis=1) == 1
        np.testing.assert_allclose(Phi[:, degree_one].max(axis=0), 1.0, rtol=1e-12)
        # and every product of peak-1 factors stays bounded by 1 on the data
        assert Phi.max() <= 1.0 + 1e-12
        np.testing.assert_allclose(basis.principal.W.T @ basis.principal.V, np.eye(4), atol=1e-9)

    def test_zero_state_maps_to_zero(self):
        basis, _ = self.stable_basis()
        np.testing.assert_array_equal(basis.evaluate(np.zeros(4)), np.zeros(basis.n_functions))

    def test_products_compose(self):
        # the basis contains (1,0..), (0,1,..) and (1,1,0,0); the third must be
        # the product of the first two with summed eigenvalue
        basis, _ = self.stable_basis(count=14)
        exps = [tuple(row) for row in basis.exponents]
        i = exps.index((1, 0, 0, 0))
        j = exps.index((0, 1, 0, 0))
        k = exps.index((1, 1, 0, 0))
        X = np.random.default_rng(1).uniform(-1, 1, size=(20, 4))
        Phi = basis.evaluate(X)
        np.testing.assert_allclose(Phi[:, k], Phi[:, i] * Phi[:, j], rtol=1e-12)
        np.testing.assert_allclose(
            basis.eigenvalues[k], basis.eigenvalues[i] + basis.eigenvalues[j], rtol=1e-12
        )

    def test_linear_flow_eigenfunction_property(self):
        # along the exact linear flow, every basis element evolves as
        # exp(eigenvalue * t); expm gives the exact flow map
        basis, A_cl = self.stable_basis(count=14)
        x0 = np.array([1.5, -0.8, 0.3, 0.6])
        phi0 = basis.evaluate(x0)
        for t in np.linspace(0.0, 2.0, 11):
            xt = expm(A_cl * t) @ x0
            phit = basis.evaluate(xt)
            expected = np.exp(basis.eigenvalues * t) * phi0
            np.testing.assert_allclose(phit, expected, rtol=1e-6, atol=1e-12)

    def test_evaluate_is_bitwise_deterministic(self):
        basis, _ = self.stable_basis()
        X = np.random.default_rng(2).normal(size=(30, 4))
        np.testing.assert_array_equal(basis.evaluate(X), basis.evaluate(X))

    def test_dimension_mismatch_rejected(self):
        basis, _ = self.stable_basis()
        with pytest.raises(ValueError):
            basis.evaluate(np.zeros(3))

    def test_serialization_roundtrip_bitexact(self):
        basis, _ = self.stable_basis(count=14)
        data = json.loads(json.dumps(basis.to_dict()))
        back = EigenfunctionBasis.from_dict(data)
        X = np.random.default_rng(3).normal(size=(10, 4))
        np.testing.assert_array_equal(basis.evaluate(X), back.evaluate(X))
        np.testing.assert_array_equal(basis.exponents, back.exponents)
