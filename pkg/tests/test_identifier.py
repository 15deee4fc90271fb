import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import Chebyshev

from chebident.cheb_basis import Interval, eval_shifted_basis
from chebident.errors import DimensionMismatchError, DomainError, SingularSystemError
from chebident.identifier import (
    CoefficientSet,
    RegularizerConfig,
    continuity_matrix,
    continuity_rhs,
    design_matrix,
    fit_window,
    predict_dynamics,
    solve_theta,
)
from chebident.windowing import WindowRecord, time_nodes


def make_record(iv, M, xdot, index=1):
    t = time_nodes(iv, M)
    xdot = np.asarray(xdot, dtype=float).reshape(M + 1, -1)
    n = xdot.shape[1]
    return WindowRecord(
        index=index,
        interval=iv,
        M=M,
        node_times=t,
        sampled_states=np.zeros((M + 1, n)),
        sampled_states_lagged=np.zeros((M + 1, n)),
        derivative_estimates=xdot,
        window_start_state=np.zeros(n),
    )


coef_matrices = st.integers(0, 8).flatmap(
    lambda M: st.lists(st.floats(-5, 5), min_size=2 * (M + 1), max_size=2 * (M + 1)).map(
        lambda v: np.array(v).reshape(M + 1, 2)
    )
)


class TestCoefficientSet:
    def test_read_only_and_shape(self):
        c = CoefficientSet(1, [1.0, 2.0, 3.0])
        assert c.degree == 2 and c.n_states == 1
        with pytest.raises(ValueError):
            c.matrix[0, 0] = 5.0

    def test_rejects_bad_kind_and_nan(self):
        with pytest.raises(ValueError):
            CoefficientSet(1, np.ones((2, 2)), kind="phi")
        with pytest.raises(ValueError):
            CoefficientSet(1, [[np.nan]])


class TestRegularizer:
    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            RegularizerConfig(np.diag([1.0, -1.0]), np.zeros((2, 1)))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            RegularizerConfig(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros((2, 1)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            RegularizerConfig(np.eye(3), np.zeros((2, 2)))


class TestFitWindow:
    def test_design_matrix_orientation(self):
        iv = Interval(0.0, 0.2)
        T = design_matrix(time_nodes(iv, 2), iv, 2)
        assert T.shape == (3, 3)
        np.testing.assert_allclose(T[:, 1], [1.0, 0.0, -1.0], atol=1e-15)

    @given(coef_matrices)
    def test_recovers_polynomial_coefficients(self, eta_true):
        M = eta_true.shape[0] - 1
        iv = Interval(0.4, 0.6)
        t = time_nodes(iv, M)
        rec = make_record(iv, M, eval_shifted_basis(t, iv, M) @ eta_true)
        eta = fit_window(rec, RegularizerConfig.ridge(M, 2))
        assert np.max(np.abs(eta.matrix - eta_true)) <= 1e-5

    def test_zero_data_zero_estimate(self):
        rec = make_record(Interval(0.0, 0.2), 3, np.zeros((4, 2)))
        np.testing.assert_array_equal(fit_window(rec, RegularizerConfig.ridge(3, 2)).matrix, 0.0)

    def test_strong_prior_dominates(self):
        prior = np.arange(6.0).reshape(3, 2)
        rec = make_record(Interval(0.0, 0.2), 2, np.ones((3, 2)))
        eta = fit_window(rec, RegularizerConfig(1e12 * np.eye(3), prior))
        np.testing.assert_allclose(eta.matrix, prior, atol=1e-6)

    def test_unregularized_interpolates(self):
        iv = Interval(1.0, 1.2)
        xdot = np.column_stack([np.sin(np.arange(5.0)), np.cos(np.arange(5.0))])
        rec = make_record(iv, 4, xdot)
        eta = fit_window(rec, RegularizerConfig(np.zeros((5, 5)), np.zeros((5, 2))))
        fitted = eval_shifted_basis(rec.node_times, iv, 4) @ eta.matrix
        assert np.max(np.abs(fitted - xdot)) <= 1e-9

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(3)
        iv = Interval(0.0, 0.2)
        xdot = rng.normal(size=(4, 2))
        R0 = np.diag([0.1, 0.2, 0.3, 0.4])
        eta0 = rng.normal(size=(4, 2))
        T = eval_shifted_basis(time_nodes(iv, 3), iv, 3).T
        expected = np.linalg.inv(T @ T.T + R0) @ (R0 @ eta0 + T @ xdot)
        eta = fit_window(make_record(iv, 3, xdot), RegularizerConfig(R0, eta0))
        np.testing.assert_allclose(eta.matrix, expected, atol=1e-12)

    def test_dimension_checks(self):
        rec = make_record(Interval(0.0, 0.2), 2, np.ones((3, 2)))
        with pytest.raises(DimensionMismatchError):
            fit_window(rec, RegularizerConfig.ridge(3, 2))
        with pytest.raises(DimensionMismatchError):
            fit_window(rec, RegularizerConfig.ridge(2, 1))

    def test_singular_normal_matrix(self):
        # duplicated node makes T T^T singular; a tiny ridge cannot rescue it below the condition limit
        iv = Interval(0.0, 0.2)
        rec = make_record(iv, 2, np.ones((3, 1)))
        dup = WindowRecord(1, iv, 2, np.array([0.1, 0.1, 0.1]), rec.sampled_states.copy()[:, :1],
                           rec.sampled_states_lagged.copy()[:, :1], np.ones((3, 1)), np.zeros(1))
        with pytest.raises(SingularSystemError):
            fit_window(dup, RegularizerConfig(1e-20 * np.eye(3), np.zeros((3, 1))))
        with pytest.raises(SingularSystemError):
            fit_window(dup, RegularizerConfig(np.zeros((3, 3)), np.zeros((3, 1))))


class TestContinuityMatrix:
    def test_linear_case(self):
        np.testing.assert_allclose(continuity_matrix(Interval(0.2, 0.4), 1), [[1.0, -1.0], [0.0, 10.0]])

    def test_upper_triangular_nonsingular(self):
        for M in range(0, 9):
            A = continuity_matrix(Interval(0.0, 0.2), M)
            np.testing.assert_array_equal(A, np.triu(A))
            assert np.all(np.diag(A) != 0.0)

    def test_finite_difference_rows(self):
        iv = Interval(0.2, 0.4)
        A = continuity_matrix(iv, 4)
        h = 1e-5
        f = lambda s: eval_shifted_basis(s, iv, 4, extrapolate=True)
        fd1 = (f(iv.a + h) - f(iv.a - h)) / (2 * h)
        fd2 = (f(iv.a + h) - 2 * f(iv.a) + f(iv.a - h)) / h**2
        np.testing.assert_allclose(A[1], fd1, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(A[2], fd2, rtol=1e-4, atol=1e-2)


class TestSolveTheta:
    def test_constant(self):
        eta = CoefficientSet(1, [[2.5, -1.0]])
        theta = solve_theta(eta, Interval(0.0, 0.2), Interval(0.2, 0.4))
        np.testing.assert_array_equal(theta.matrix, [[2.5, -1.0]])
        assert theta.kind == "theta" and theta.window_index == 2

    def test_linear(self):
        eta = CoefficientSet(1, [[1.0], [3.0]])
        theta = solve_theta(eta, Interval(0.0, 0.2), Interval(0.2, 0.4))
        np.testing.assert_allclose(theta.matrix[:, 0], [1.0 + 2 * 3.0, 3.0])

    @settings(max_examples=60)
    @given(coef_matrices, st.floats(-10, 10), st.floats(0.05, 2.0))
    def test_matches_numpy_reexpansion(self, eta_mat, a, tau):
        iv_prev, iv_new = Interval(a, a + tau), Interval(a + tau, a + 2 * tau)
        theta = solve_theta(CoefficientSet(1, eta_mat), iv_prev, iv_new)
        for j in range(2):
            oracle = Chebyshev(eta_mat[:, j], domain=[iv_prev.a, iv_prev.b]).convert(domain=[iv_new.a, iv_new.b])
            expected = np.zeros(eta_mat.shape[0])
            expected[: len(oracle.coef)] = oracle.coef
            scale = max(1.0, np.abs(expected).max())
            assert np.max(np.abs(theta.matrix[:, j] - expected)) <= 1e-10 * scale

    @given(coef_matrices)
    def test_analytic_continuation(self, eta_mat):
        iv_prev, iv_new = Interval(0.0, 0.2), Interval(0.2, 0.4)
        theta = solve_theta(CoefficientSet(1, eta_mat), iv_prev, iv_new)
        t = np.linspace(iv_new.a, iv_new.b, 17)
        ext = eval_shifted_basis(t, iv_prev, eta_mat.shape[0] - 1, extrapolate=True) @ eta_mat
        scale = max(1.0, np.abs(ext).max())
        assert np.max(np.abs(predict_dynamics(theta, iv_new, t) - ext)) <= 1e-10 * scale

    @given(coef_matrices)
    def test_boundary_value_preserved(self, eta_mat):
        iv_prev, iv_new = Interval(0.0, 0.2), Interval(0.2, 0.4)
        theta = solve_theta(CoefficientSet(1, eta_mat), iv_prev, iv_new)
        # evaluating theta at -1 cancels terms of size |theta|
        scale = max(1.0, np.abs(theta.matrix).sum())
        left = predict_dynamics(theta, iv_new, iv_new.a)
        right = predict_dynamics(CoefficientSet(1, eta_mat), iv_prev, iv_prev.b)
        assert np.max(np.abs(left - right)) <= 1e-12 * scale

    @given(coef_matrices, st.floats(0.0, 1.0))
    def test_delay_identity(self, eta_mat, s):
        # reusing eta on the next window reproduces the previous window shifted by tau
        iv_prev, iv_new = Interval(0.4, 0.6), Interval(0.6, 0.8)
        eta = CoefficientSet(1, eta_mat)
        t = iv_new.a + s * 0.2
        lhs = predict_dynamics(eta, iv_new, min(t, iv_new.b))
        rhs = predict_dynamics(eta, iv_prev, min(t - 0.2, iv_prev.b))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.abs(eta_mat).sum())

    @given(coef_matrices)
    def test_triangular_residual(self, eta_mat):
        iv_prev, iv_new = Interval(1.0, 1.2), Interval(1.2, 1.4)
        eta = CoefficientSet(1, eta_mat)
        theta = solve_theta(eta, iv_prev, iv_new)
        A = continuity_matrix(iv_new, eta.degree)
        rhs = continuity_rhs(eta, iv_prev)
        rel = np.linalg.norm(A @ theta.matrix - rhs) / max(1.0, np.linalg.norm(rhs))
        assert rel <= 1e-12

    def test_rejects_gap_and_width_change(self):
        eta = CoefficientSet(1, np.ones((3, 2)))
        with pytest.raises(DomainError):
            solve_theta(eta, Interval(0.0, 0.2), Interval(0.3, 0.5))
        with pytest.raises(DomainError):
            solve_theta(eta, Interval(0.0, 0.2), Interval(0.2, 0.5))


class TestPredictDynamics:
    def test_monomial_oracle(self):
        iv = Interval(0.6, 0.8)
        c = np.array([[0.3, -1.0], [1.2, 0.5], [-0.4, 2.0], [0.1, 0.0]])
        t = np.linspace(iv.a, iv.b, 9)
        expected = np.column_stack([Chebyshev(c[:, j], domain=[iv.a, iv.b])(t) for j in range(2)])
        np.testing.assert_allclose(predict_dynamics(CoefficientSet(4, c), iv, t), expected, atol=1e-13)

    def test_outside_window(self):
        c = CoefficientSet(1, np.ones((3, 2)))
        with pytest.raises(DomainError):
            predict_dynamics(c, Interval(0.0, 0.2), 0.3)
        assert predict_dynamics(c, Interval(0.0, 0.2), 0.3, extrapolate=True).shape == (2,)
