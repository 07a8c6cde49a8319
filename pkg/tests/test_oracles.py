"""Ground-truth machinery: finite differences, truncated sums, variance maps."""

import math

import numpy as np
import pytest

from gohess import nodes, oracles
from gohess.oracles import (
    VarianceMapRow,
    finite_diff,
    nb_cutoff,
    truncated_sum_expectation,
    variance_map,
)


class TestFiniteDiff:
    def test_first_derivative_of_square(self):
        d = finite_diff(lambda x: float(x[0] ** 2), np.array([3.0]), order=1)
        assert abs(d.reshape(-1)[0] - 6.0) < 1e-9

    def test_second_derivative_of_sine_at_zero(self):
        d = finite_diff(lambda x: math.sin(x[0]), np.array([0.0]), order=2)
        assert abs(d.reshape(-1)[0]) < 1e-6

    def test_richardson_sharpens(self):
        # large step so truncation error dominates rounding
        f = lambda x: math.exp(x[0])
        plain = abs(finite_diff(f, np.array([1.0]), order=1, step=1e-3).reshape(-1)[0] - math.e)
        rich = abs(
            finite_diff(f, np.array([1.0]), order=1, step=1e-3, richardson=True).reshape(-1)[0]
            - math.e
        )
        assert rich < plain / 100

    def test_vector_jacobian_shape(self):
        J = finite_diff(lambda x: np.array([x[0] * x[1], x[0] ** 2]), np.array([2.0, 3.0]), order=1)
        assert J.shape == (2, 2)
        assert np.allclose(J, [[3.0, 2.0], [4.0, 0.0]], atol=1e-7)

    def test_hessian_of_quadratic_form(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        H = finite_diff(lambda x: 0.5 * float(x @ A @ x), np.array([0.3, -0.7]), order=2)
        assert np.max(np.abs(H - A)) < 1e-5

    def test_cdf_alpha_derivative_consistent_with_pack(self):
        # d/dalpha P(alpha, y) = -g * pdf
        alpha, y = 3.0, 2.0
        import gohess.xprec as xp

        fd = finite_diff(
            lambda a: float(xp.inc_gamma(a[0], y, "regularized")),
            np.array([alpha]),
            order=1,
        ).reshape(-1)[0]
        g = nodes.gamma_unit_nabla_pack(alpha, y, order=1).nabla[0]
        pdf = math.exp((alpha - 1) * math.log(y) - y - math.lgamma(alpha))
        assert abs(fd + g * pdf) < 1e-6 * abs(g * pdf)

    def test_nonfinite_evaluation_raises(self):
        with pytest.raises(ArithmeticError):
            finite_diff(lambda x: float("nan"), np.array([1.0]), order=1)

    def test_order_validation(self):
        with pytest.raises(ValueError):
            finite_diff(lambda x: 0.0, np.array([1.0]), order=3)


class TestTruncatedSum:
    def test_normalization(self):
        tol = 1e-12
        value, grad, _ = truncated_sum_expectation(10.0, 0.5, lambda y, r, p: 1.0, tail_tol=tol)
        assert abs(value - 1.0) < 10 * tol
        assert np.max(np.abs(grad)) < 10 * tol * 100  # score-weighted tail

    def test_mean_identity(self):
        value, _, _ = truncated_sum_expectation(10.0, 0.5, lambda y, r, p: float(y), tail_tol=1e-12)
        assert abs(value - 10.0) < 1e-9

    def test_tail_tolerance_stability(self):
        from gohess.models import NbKlProblem

        prob = NbKlProblem(nodes.NbParams(10.0, 0.5))
        q = nodes.NbParams(9.0, 0.45)
        _, g1, h1 = prob.truncated_truth(q, tail_tol=1e-10)
        _, g2, h2 = prob.truncated_truth(q, tail_tol=1e-14)
        assert np.max(np.abs(h1 - h2)) < 1e-8
        assert np.max(np.abs(g1 - g2)) < 1e-8

    def test_gradient_matches_finite_differences(self):
        # independent cross-check of the pmf-derivative accumulation
        def kl_value(c):
            from gohess.oracles import nb_logpmf_derivs_ref

            def f(y, r, p):
                lq = nb_logpmf_derivs_ref(r, p, y)[0]
                lp = nb_logpmf_derivs_ref(10.0, 0.5, y)[0]
                return lq - lp

            def df(y, r, p):
                return nb_logpmf_derivs_ref(r, p, y)[1]

            v, _, _ = truncated_sum_expectation(c[0], c[1], f, df, tail_tol=1e-13)
            return v

        from gohess.models import NbKlProblem

        prob = NbKlProblem(nodes.NbParams(10.0, 0.5))
        point = np.array([9.0, 0.45])
        _, grad, hess = prob.truncated_truth(nodes.NbParams(9.0, 0.45))
        fd_g = finite_diff(kl_value, point, order=1, richardson=True)
        fd_h = finite_diff(kl_value, point, order=2, richardson=True)
        assert np.max(np.abs(grad - fd_g)) < 1e-7
        assert np.max(np.abs(hess - fd_h)) < 1e-5

    def test_cutoff_cap(self):
        with pytest.raises(ValueError, match="hard cap"):
            nb_cutoff(10.0, 0.5, 1e-12, hard_cap=10)


class TestVarianceMap:
    def test_delta_graph_zero_error(self):
        truth = np.array([[2.0, 0.0], [0.0, 1.0]])
        rows = variance_map(
            [(1.0, 1.0), (2.0, 0.5)],
            {"go": lambda point, i: truth.copy()},
            lambda point: truth,
            replicates=17,
        )
        assert all(r.median_error == 0.0 and r.mean_error == 0.0 for r in rows)
        assert all(r.replicates == 17 for r in rows)

    def test_errors_are_frobenius_norms(self):
        truth = np.zeros((2, 2))
        off = np.array([[1.0, 0.0], [0.0, 1.0]])
        rows = variance_map(
            [(0.0,)], {"go": lambda point, i: off}, lambda point: truth, replicates=3
        )
        assert rows[0].median_error == pytest.approx(math.sqrt(2.0))

    def test_row_invariant(self):
        with pytest.raises(ValueError):
            VarianceMapRow(point=(1.0,), estimator="go", median_error=-1.0, mean_error=0.0, replicates=1)
