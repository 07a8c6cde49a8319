"""Derivative packs against independent CDF-derivative oracles.

The oracles here are finite differences of CDFs computed with mpmath (a
separate arbitrary-precision library) or of the packs themselves; nothing
reuses the pack formulas being tested.
"""

import math

import mpmath
import numpy as np
import pytest
import scipy.stats as stats

from gohess import nodes
from gohess.nodes import GammaParams, MuSigmaParams, NbParams
from gohess.oracles import finite_diff, nb_logpmf_derivs_ref
from gohess.samplers import RngStream

mpmath.mp.dps = 80


def gamma_g_oracle(alpha: float, y: float):
    """-d/dalpha P(alpha, y) / pdf(alpha, y), by high-precision FD."""
    a = mpmath.mpf(alpha)
    z = mpmath.mpf(y)
    h = mpmath.mpf("1e-20")
    dP = (
        mpmath.gammainc(a + h, 0, z, regularized=True)
        - mpmath.gammainc(a - h, 0, z, regularized=True)
    ) / (2 * h)
    pdf = z ** (a - 1) * mpmath.exp(-z) / mpmath.gamma(a)
    return -dP / pdf


def nb_gr_oracle(r: float, p: float, y: int):
    """-d/dr CDF(y) / pmf(y) with CDF = I_{1-p}(r, y+1), by mpmath FD."""
    rm = mpmath.mpf(r)
    h = mpmath.mpf("1e-20")
    cdf = lambda rr: mpmath.betainc(rr, y + 1, 0, 1 - mpmath.mpf(p), regularized=True)
    dC = (cdf(rm + h) - cdf(rm - h)) / (2 * h)
    pmf = (
        mpmath.gamma(y + rm)
        / (mpmath.factorial(y) * mpmath.gamma(rm))
        * (1 - mpmath.mpf(p)) ** rm
        * mpmath.mpf(p) ** y
    )
    return -dC / pmf


class TestGammaUnitPack:
    def test_g_matches_cdf_derivative_oracle(self):
        pk = nodes.gamma_unit_nabla_pack(3.0, 2.0)
        ref = gamma_g_oracle(3.0, 2.0)
        assert abs(pk.nabla[0] - float(ref)) < 1e-6 * abs(float(ref))

    def test_dg_dy_matches_finite_difference(self):
        a, y = 10.0, 10.0
        pk = nodes.gamma_unit_nabla_pack(a, y)
        h = y * 1e-6
        fd = (
            nodes.gamma_unit_nabla_pack(a, y + h, order=1).nabla[0]
            - nodes.gamma_unit_nabla_pack(a, y - h, order=1).nabla[0]
        ) / (2 * h)
        assert abs(pk.dnabla_dy[0] - fd) < 1e-6 * abs(fd)

    def test_mean_of_g_is_one(self):
        # d/dalpha E[y] = 1 for Gam(alpha, 1)
        alpha = 3.0
        n = 100_000
        gen = RngStream(23, 0).generator()
        vals = np.empty(n)
        from gohess.samplers import gamma_unit_sample

        for i in range(n):
            y = gamma_unit_sample(alpha, gen)
            vals[i] = nodes.gamma_unit_nabla_pack(alpha, y, order=1).nabla[0]
        se = vals.std() / math.sqrt(n)
        assert abs(vals.mean() - 1.0) < 3 * se

    @pytest.mark.parametrize("alpha", [0.05, 0.5, 10.0, 300.0])
    def test_finite_on_clamped_domain(self, alpha):
        ys = [1e-120] + [
            float(stats.gamma.ppf(q, alpha)) for q in (1e-4, 0.5, 0.9999)
        ]
        for y in ys:
            pk = nodes.gamma_unit_nabla_pack(alpha, max(y, 1e-120))
            assert np.all(np.isfinite(pk.nabla))
            assert np.all(np.isfinite(pk.dnabla_dy))
            assert np.all(np.isfinite(pk.dnabla_dparams))


class TestGammaRateNode:
    def test_deterministic_rate_entries(self):
        gp = GammaParams(3.0, 2.0)
        y_unit = 4.0
        pk = nodes.gamma_rate_node(gp, y_unit)
        assert pk.nabla[1] == -y_unit / gp.beta**2
        h = pk.variable_hess()
        assert abs(h[1, 1] - 2 * y_unit / gp.beta**3) < 1e-15
        assert abs(h[0, 1] - h[1, 0]) < 1e-15

    def test_full_hessian_of_linear_objective(self):
        # E[y] = alpha/beta; its Hessian is [[0, -1/b^2], [-1/b^2, 2a/b^3]]
        from gohess import estimators as est

        gp = GammaParams(3.0, 2.0)
        obj = est.ObjectiveOracle(
            f=lambda y, c: float(y[0]),
            df_dy=lambda y, c: np.array([1.0]),
            d2f_dy2=lambda y, c: np.array([[0.0]]),
        )
        n = 100_000
        hest = est.go_hessian(
            nodes.GammaNode(), obj, gp.as_array(), n, RngStream(29, 0), keep_samples=True
        )
        truth = np.array([[0.0, -1 / gp.beta**2], [-1 / gp.beta**2, 2 * gp.alpha / gp.beta**3]])
        se = hest.samples.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(hest.matrix - truth) <= 3 * se + 1e-12)


class TestGammaLogpdf:
    def test_score_zero_mean(self):
        gp = GammaParams(3.0, 2.0)
        n = 100_000
        gen = RngStream(31, 0).generator()
        from gohess.samplers import gamma_sample

        scores = np.empty((n, 2))
        for i in range(n):
            y = gamma_sample(gp.alpha, gp.beta, gen)
            scores[i] = nodes.gamma_logpdf_derivs(gp, y)[1]
        se = scores.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(scores.mean(axis=0)) < 3 * se)

    def test_hessian_symmetric_and_value(self):
        gp = GammaParams(1.0, 1.0)
        lp, grad, hess = nodes.gamma_logpdf_derivs(gp, 1.0)
        assert lp == pytest.approx(-1.0, abs=1e-15)
        assert hess[0, 1] == hess[1, 0]

    def test_gradient_matches_finite_difference(self):
        gp = GammaParams(3.0, 2.0)
        y = 1.7

        def lp(c):
            return nodes.gamma_logpdf_derivs(GammaParams(c[0], c[1]), y)[0]

        _, grad, hess = nodes.gamma_logpdf_derivs(gp, y)
        assert np.max(np.abs(grad - finite_diff(lp, gp.as_array(), order=1))) < 1e-8
        assert np.max(np.abs(hess - finite_diff(lp, gp.as_array(), order=2, richardson=True))) < 1e-6


class TestNbPack:
    def test_g_p_closed_form(self):
        pk = nodes.nb_nabla_pack(NbParams(10.0, 0.5), 10)
        assert pk.nabla[1] == pytest.approx(40.0, abs=1e-12)
        assert pk.dnabla_dparams[1, 1] == pytest.approx(80.0, abs=1e-12)
        assert pk.dnabla_dparams[0, 1] == pytest.approx(2.0, abs=1e-12)
        assert pk.dnabla_dy[1] == pytest.approx(2.0, abs=1e-12)

    def test_g_r_matches_cdf_derivative_oracle(self):
        pk = nodes.nb_nabla_pack(NbParams(3.0, 0.4), 2)
        ref = float(nb_gr_oracle(3.0, 0.4, 2))
        assert abs(pk.nabla[0] - ref) < 1e-5 * abs(ref)

    @pytest.mark.parametrize("r,p,y", [(3.0, 0.4, 2), (10.0, 0.5, 10), (7.0, 0.65, 0)])
    def test_param_derivatives_match_finite_differences(self, r, p, y):
        pk = nodes.nb_nabla_pack(NbParams(r, p), y)
        hr = r * 1e-6
        fd_r = (
            nodes.nb_nabla_pack(NbParams(r + hr, p), y, order=1).nabla[0]
            - nodes.nb_nabla_pack(NbParams(r - hr, p), y, order=1).nabla[0]
        ) / (2 * hr)
        hp = 1e-7
        fd_p = (
            nodes.nb_nabla_pack(NbParams(r, p + hp), y, order=1).nabla[0]
            - nodes.nb_nabla_pack(NbParams(r, p - hp), y, order=1).nabla[0]
        ) / (2 * hp)
        assert abs(pk.dnabla_dparams[0, 0] - fd_r) < 1e-5 * max(1.0, abs(fd_r))
        assert abs(pk.dnabla_dparams[1, 0] - fd_p) < 1e-5 * max(1.0, abs(fd_p))

    def test_forward_difference_slot(self):
        r, p, y = 9.0, 0.45, 3
        pk = nodes.nb_nabla_pack(NbParams(r, p), y)
        g_here = nodes.nb_nabla_pack(NbParams(r, p), y, order=1).nabla[0]
        g_next = nodes.nb_nabla_pack(NbParams(r, p), y + 1, order=1).nabla[0]
        assert pk.dnabla_dy[0] == pytest.approx(g_next - g_here, abs=1e-12)

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            nodes.nb_nabla_pack(NbParams(3.0, 0.4), -1)
        with pytest.raises(ValueError):
            nodes.nb_nabla_pack(NbParams(3.0, 0.4), 1.5)


class TestNbLogpmf:
    def test_geometric_head(self):
        lp, _, _ = nodes.nb_logpdf_derivs(NbParams(1.0, 0.5), 0)
        assert lp == pytest.approx(math.log(0.5), abs=1e-15)

    def test_matches_scipy_reference(self):
        lp, grad, hess = nodes.nb_logpdf_derivs(NbParams(10.0, 0.5), 7)
        lp2, grad2, hess2 = nb_logpmf_derivs_ref(10.0, 0.5, 7)
        assert lp == pytest.approx(lp2, rel=1e-12)
        assert np.allclose(grad, grad2, rtol=1e-10)
        assert np.allclose(hess, hess2, rtol=1e-10)

    def test_gradient_matches_finite_differences(self):
        nb = NbParams(10.0, 0.5)
        y = 10

        def lp(c):
            return nodes.nb_logpdf_derivs(NbParams(c[0], c[1]), y)[0]

        _, grad, _ = nodes.nb_logpdf_derivs(nb, y)
        fd = finite_diff(lp, nb.as_array(), order=1)
        assert np.max(np.abs(grad - fd)) < 1e-8

    def test_score_zero_mean(self):
        nb = NbParams(10.0, 0.5)
        n = 100_000
        gen = RngStream(37, 0).generator()
        from gohess.samplers import nb_sample

        scores = np.empty((n, 2))
        for i in range(n):
            y = nb_sample(nb.r, nb.p, gen)
            scores[i] = nodes.nb_logpdf_derivs(nb, y)[1]
        se = scores.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(scores.mean(axis=0)) < 3 * se)


class TestDeltaNode:
    def test_identity_map(self):
        y, packs = nodes.delta_node(
            lambda c: (np.array([c[0]]), np.array([[1.0]]), np.zeros((1, 1, 1))),
            np.array([2.5]),
        )
        assert y[0] == 2.5
        idx, pk = packs[0]
        assert pk.nabla[0] == 1.0
        assert pk.dnabla_dy[0] == 0.0
        assert pk.dnabla_dparams[0, 0] == 0.0

    def test_square_map(self):
        gamma = 1.3
        y, packs = nodes.delta_node(
            lambda c: (
                np.array([c[0] ** 2]),
                np.array([[2 * c[0]]]),
                np.full((1, 1, 1), 2.0),
            ),
            np.array([gamma]),
        )
        _, pk = packs[0]
        assert pk.nabla[0] == 2 * gamma
        assert pk.variable_hess()[0, 0] == 2.0


class TestParamSpaceMap:
    def test_mu_sigma_unit_point(self):
        raw = np.array([nodes.softplus_inverse(1.0), nodes.softplus_inverse(1.0)])
        gp, _, _ = nodes.param_space_map("mu-sigma", raw)
        assert gp.alpha == pytest.approx(1.0, rel=1e-12)
        assert gp.beta == pytest.approx(1.0, rel=1e-12)

    def test_alpha_beta_softplus_at_zero(self):
        gp, _, _ = nodes.param_space_map("alpha-beta", np.zeros(2))
        assert gp.alpha == pytest.approx(math.log(2.0), rel=1e-12)
        assert gp.beta == pytest.approx(math.log(2.0), rel=1e-12)

    @pytest.mark.parametrize("space", ["alpha-beta", "mu-sigma"])
    def test_jacobian_and_hessians_match_finite_differences(self, space):
        raw = np.array([0.3, -0.2])
        _, J, S = nodes.param_space_map(space, raw)
        fd_J = finite_diff(
            lambda r: nodes.param_space_map(space, r)[0].as_array(), raw, order=1
        )
        assert np.max(np.abs(J - fd_J)) < 1e-8
        for i in range(2):
            fd_S = finite_diff(
                lambda r: nodes.param_space_map(space, r)[0].as_array()[i],
                raw,
                order=2,
                richardson=True,
            )
            assert np.max(np.abs(S[i] - fd_S)) < 1e-6

    def test_mu_sigma_params_type(self):
        ms = MuSigmaParams(0.3, -0.2)
        gp = ms.to_gamma()
        mu, sigma = ms.mu_sigma()
        assert gp.alpha == pytest.approx(mu**2 / sigma**2)
        assert gp.beta == pytest.approx(mu / sigma**2)

    def test_underflow_raises_numeric_error(self):
        with pytest.raises(ArithmeticError):
            nodes.param_space_map("mu-sigma", np.array([-800.0, 0.0]))

    def test_unknown_space(self):
        with pytest.raises(ValueError):
            nodes.param_space_map("polar", np.zeros(2))


class TestParamContainers:
    def test_gamma_clamp(self):
        assert GammaParams(0.01, 1.0).alpha == 0.05
        with pytest.raises(ValueError):
            GammaParams(-1.0, 1.0)
        with pytest.raises(ValueError):
            GammaParams(1.0, 0.0)

    def test_nb_validation(self):
        with pytest.raises(ValueError):
            NbParams(0.0, 0.5)
        with pytest.raises(ValueError):
            NbParams(1.0, 1.0)
