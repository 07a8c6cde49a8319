"""Concrete expectation-based objectives: gamma reverse KL, NB reverse KL,
and mean-field variational inference for a Poisson factor model.

Each objective is wired as an :class:`~gohess.estimators.ObjectiveOracle`
over the distribution-parameter coordinates of its random node(s), plus a
problem wrapper that chains estimates into unconstrained raw coordinates
for the optimizers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimators as est
from . import nodes
from .nodes import (
    GammaNode,
    GammaParams,
    GammaVectorNode,
    NbNode,
    NbParams,
    gamma_logpdf_derivs,
    nb_logpdf_derivs,
    param_space_map,
    softplus,
    softplus_inverse,
)
from .samplers import SAMPLE_MIN, RngStream
from . import xprec as xp

__all__ = [
    "GammaKlProblem",
    "NbKlProblem",
    "PfaModel",
    "analytic_gamma_kl",
    "gamma_kl_objective",
    "load_count_csv",
    "nb_kl_objective",
    "pfa_elbo_objective",
]


# ----------------------------------------------------------------------
# Closed-form gamma KL (shape/rate coordinates of q; target p fixed).
#
# In shape/scale (k, theta) coordinates,
#   KL(q||p) = (k_q - k_p) psi(k_q) - lnGamma(k_q) + lnGamma(k_p)
#              + k_p (ln theta_p - ln theta_q) + k_q (theta_q - theta_p)/theta_p
# which in shape/rate (alpha, beta = 1/theta) of q reads
#   KL = (a_q - a_p) psi(a_q) - lnG(a_q) + lnG(a_p)
#        + a_p ln(b_q/b_p) + a_q (b_p - b_q)/b_q.
# The gradient/Hessian below are the direct derivatives of that form; they
# are gated against finite differences once per process.

_KL_CHECKED = False


def _psi(m: int, x: float) -> float:
    return float(xp.digamma_polygamma(m, x))


def analytic_gamma_kl(
    q: GammaParams, p: GammaParams
) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(q || p) with gradient and Hessian w.r.t. (alpha_q, beta_q)."""
    aq, bq = q.alpha, q.beta
    ap, bp = p.alpha, p.beta
    value = (
        (aq - ap) * _psi(0, aq)
        - math.lgamma(aq)
        + math.lgamma(ap)
        + ap * math.log(bq / bp)
        + aq * (bp - bq) / bq
    )
    grad = np.array(
        [
            (aq - ap) * _psi(1, aq) + bp / bq - 1.0,
            ap / bq - aq * bp / (bq * bq),
        ]
    )
    hess = np.array(
        [
            [_psi(1, aq) + (aq - ap) * _psi(2, aq), -bp / (bq * bq)],
            [-bp / (bq * bq), -ap / (bq * bq) + 2.0 * aq * bp / bq**3],
        ]
    )
    global _KL_CHECKED
    if not _KL_CHECKED:
        _KL_CHECKED = True
        _gate_kl_derivatives()
    return value, grad, hess


def _gate_kl_derivatives() -> None:
    from .oracles import finite_diff

    q0 = GammaParams(9.0, 11.0)
    p0 = GammaParams(10.0, 10.0)

    def val(c):
        return analytic_gamma_kl(GammaParams(c[0], c[1]), p0)[0]

    point = q0.as_array()
    _, grad, hess = analytic_gamma_kl(q0, p0)
    fd_g = finite_diff(val, point, order=1)
    fd_h = finite_diff(val, point, order=2, richardson=True)
    if np.max(np.abs(fd_g - grad)) > 1e-7 or np.max(np.abs(fd_h - hess)) > 1e-5:
        raise ArithmeticError("analytic gamma KL derivatives failed the FD gate")


def gamma_kl_objective(target: GammaParams) -> est.ObjectiveOracle:
    """Reverse-KL integrand f(y, (a, b)) = log q(y; a, b) - log p(y; target).

    f depends on the parameters directly, so the full set of cross
    derivatives is supplied.
    """
    ap, bp = target.alpha, target.beta

    def f(y, c):
        yv = float(y[0])
        lq, _, _ = gamma_logpdf_derivs(GammaParams(c[0], c[1]), yv)
        lp, _, _ = gamma_logpdf_derivs(target, yv)
        return lq - lp

    def df_dy(y, c):
        yv = float(y[0])
        return np.array([(c[0] - ap) / yv - (c[1] - bp)])

    def d2f_dy2(y, c):
        yv = float(y[0])
        return np.array([[-(c[0] - ap) / (yv * yv)]])

    def df_dparams(y, c):
        _, g, _ = gamma_logpdf_derivs(GammaParams(c[0], c[1]), float(y[0]))
        return g

    def d2f_dparamsdy(y, c):
        return np.array([[1.0 / float(y[0])], [-1.0]])

    def d2f_dparams2(y, c):
        _, _, h = gamma_logpdf_derivs(GammaParams(c[0], c[1]), float(y[0]))
        return h

    return est.ObjectiveOracle(
        f=f,
        df_dy=df_dy,
        d2f_dy2=d2f_dy2,
        df_dparams=df_dparams,
        d2f_dparamsdy=d2f_dparamsdy,
        d2f_dparams2=d2f_dparams2,
    )


class GammaKlProblem:
    """min over raw coordinates of KL(Gam(q) || target) in a chosen space."""

    dim = 2

    def __init__(self, target: GammaParams, space: str = "mu-sigma"):
        if space not in ("alpha-beta", "mu-sigma"):
            raise ValueError(f"unknown space {space!r}")
        self.target = target
        self.space = space
        self.node = GammaNode()
        self.obj = gamma_kl_objective(target)

    def raw_from_params(self, params: GammaParams) -> np.ndarray:
        if self.space == "alpha-beta":
            return np.array(
                [softplus_inverse(params.alpha), softplus_inverse(params.beta)]
            )
        mu = params.alpha / params.beta
        sigma = math.sqrt(params.alpha) / params.beta
        return np.array([softplus_inverse(mu), softplus_inverse(sigma)])

    def map_raw(self, raw: np.ndarray):
        return param_space_map(self.space, raw)

    def gradient_estimate(self, raw: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
        params, J, _ = self.map_raw(raw)
        grad_c = est.go_gradient(self.node, self.obj, params.as_array(), n, rng)
        return est.chain_gradient(grad_c, J)

    def _dense_raw_hessian(self, raw: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
        # chain per-sample (gradient and Hessian from the same draw)
        params, J, S = self.map_raw(raw)
        c = params.as_array()
        acc = np.zeros((2, 2))
        for i in range(n):
            gen = rng.child(i).generator()
            y = self.node.sample(c, gen)
            piece, grad_c = est._continuous_pieces(self.node, self.obj, c, y)
            acc += est.chain_hessian(grad_c, piece.dense(), J, S)
        return acc / n

    def hessian_operator(self, raw: np.ndarray, n: int, rng: RngStream):
        H = self._dense_raw_hessian(raw, n, rng)
        return lambda v: H @ v

    def objective_value(self, raw: np.ndarray) -> float:
        params, _, _ = self.map_raw(raw)
        return analytic_gamma_kl(params, self.target)[0]


# ----------------------------------------------------------------------
# NB reverse KL (discrete leaf).


def nb_kl_objective(target: NbParams) -> est.ObjectiveOracle:
    """f(y, (r, p)) = log q(y; r, p) - log p0(y; target), forward-difference flavor."""

    def f(y, c):
        yv = int(y[0])
        lq, _, _ = nb_logpdf_derivs(NbParams(c[0], c[1]), yv)
        lp, _, _ = nb_logpdf_derivs(target, yv)
        return lq - lp

    def df_dparams(y, c):
        _, g, _ = nb_logpdf_derivs(NbParams(c[0], c[1]), int(y[0]))
        return g

    def d2f_dparams2(y, c):
        _, _, h = nb_logpdf_derivs(NbParams(c[0], c[1]), int(y[0]))
        return h

    return est.ObjectiveOracle(
        f=f,
        df_dparams=df_dparams,
        d2f_dparams2=d2f_dparams2,
    )


class NbKlProblem:
    """KL(NB(r, p) || target) over the (r, p) coordinates directly."""

    dim = 2

    def __init__(self, target: NbParams):
        self.target = target
        self.node = NbNode()
        self.obj = nb_kl_objective(target)

    def truncated_truth(self, params: NbParams, tail_tol: float = 1e-12):
        """Exact (value, gradient, Hessian) via the truncated-sum oracle."""
        from .oracles import nb_logpmf_derivs_ref, truncated_sum_expectation

        tr, tp = self.target.r, self.target.p

        def f(y, r, p):
            lq, _, _ = nb_logpmf_derivs_ref(r, p, y)
            lp0, _, _ = nb_logpmf_derivs_ref(tr, tp, y)
            return lq - lp0

        def df(y, r, p):
            _, g, _ = nb_logpmf_derivs_ref(r, p, y)
            return g

        def d2f(y, r, p):
            _, _, h = nb_logpmf_derivs_ref(r, p, y)
            return h

        return truncated_sum_expectation(
            params.r, params.p, f, df, d2f, tail_tol=tail_tol
        )


# ----------------------------------------------------------------------
# Poisson factor analysis, mean-field variational inference.
#
# Generative model: x ~ Pois(W z), z_k ~ Gam(alpha0, beta0), W columns on
# the simplex.  Variational family per datum: independent gammas in the
# mean/std parameterization, q(z_k) = Gam(mu_k^2/sigma_k^2, mu_k/sigma_k^2)
# with mu, sigma softplus-mapped from raw coordinates.


def pfa_elbo_objective(
    W: np.ndarray, x: np.ndarray, alpha0: float, beta0: float
) -> est.ObjectiveOracle:
    """Per-datum ELBO integrand over z, in the interleaved (a1, b1, a2, b2, ...)
    distribution-parameter coordinates of the variational gammas.

    f(z, c) = log Pois(x | W z) + log Gam(z | alpha0, beta0) - log q(z; c).
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    V, K = W.shape
    log_prior_const = K * (alpha0 * math.log(beta0) - math.lgamma(alpha0))
    lgx = float(np.sum([math.lgamma(xv + 1.0) for xv in x]))

    def _ab(c):
        return c[0::2], c[1::2]

    def f(z, c):
        lam = W @ z
        a, b = _ab(c)
        ll = float(x @ np.log(lam) - np.sum(lam)) - lgx
        lp = log_prior_const + float((alpha0 - 1.0) * np.sum(np.log(z)) - beta0 * np.sum(z))
        lq = float(
            np.sum(
                a * np.log(b)
                - np.array([math.lgamma(av) for av in a])
                + (a - 1.0) * np.log(z)
                - b * z
            )
        )
        return ll + lp - lq

    def df_dy(z, c):
        lam = W @ z
        a, _b = _ab(c)
        return (
            W.T @ (x / lam - 1.0)
            + (alpha0 - 1.0) / z
            - beta0
            - ((a - 1.0) / z - _b)
        )

    def d2f_dy2(z, c):
        lam = W @ z
        a, _b = _ab(c)
        H = -(W.T * (x / lam**2)) @ W
        H[np.diag_indices(K)] += -(alpha0 - 1.0) / z**2 + (a - 1.0) / z**2
        return H

    def df_dparams(z, c):
        a, b = _ab(c)
        out = np.empty(2 * K)
        psi_a = np.array([float(xp.digamma_polygamma(0, av)) for av in a])
        out[0::2] = -(np.log(b) - psi_a + np.log(z))
        out[1::2] = -(a / b - z)
        return out

    def d2f_dparamsdy(z, c):
        out = np.zeros((2 * K, K))
        for k in range(K):
            out[2 * k, k] = -1.0 / z[k]
            out[2 * k + 1, k] = 1.0
        return out

    def d2f_dparams2(z, c):
        a, b = _ab(c)
        out = np.zeros((2 * K, 2 * K))
        for k in range(K):
            psi1 = float(xp.digamma_polygamma(1, a[k]))
            out[2 * k, 2 * k] = psi1
            out[2 * k, 2 * k + 1] = out[2 * k + 1, 2 * k] = -1.0 / b[k]
            out[2 * k + 1, 2 * k + 1] = a[k] / b[k] ** 2
        return out

    return est.ObjectiveOracle(
        f=f,
        df_dy=df_dy,
        d2f_dy2=d2f_dy2,
        df_dparams=df_dparams,
        d2f_dparamsdy=d2f_dparamsdy,
        d2f_dparams2=d2f_dparams2,
    )


def _column_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def load_count_csv(path: str) -> np.ndarray:
    """Count matrix: header row of column ids, one row of nonnegative ints per datum."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            vals = [int(tok) for tok in line.split(",")]
            if len(vals) != len(header):
                raise ValueError(f"row width {len(vals)} != header width {len(header)}")
            if any(v < 0 for v in vals):
                raise ValueError("count matrix entries must be nonnegative")
            rows.append(vals)
    if header is None or not rows:
        raise ValueError(f"no count data found in {path}")
    return np.asarray(rows, dtype=np.int64)


class PfaModel:
    """Topic matrix + per-datum variational parameters, with estimator plumbing.

    The per-datum variational raw coordinates are interleaved
    (gamma_mu_1, gamma_sigma_1, ..., gamma_mu_K, gamma_sigma_K); the topic
    matrix keeps every column on the simplex through a per-column softmax
    over raw logits.
    """

    def __init__(
        self,
        data: np.ndarray,
        n_topics: int = 20,
        alpha0: float = 1.0,
        beta0: float = 1.0,
        init_rng: RngStream | None = None,
    ):
        self.X = np.asarray(data, dtype=np.int64)
        self.N, self.V = self.X.shape
        self.K = n_topics
        self.alpha0 = float(alpha0)
        self.beta0 = float(beta0)
        gen = (init_rng or RngStream(0)).generator()
        self.W_logits = 0.1 * gen.standard_normal((self.V, self.K))
        raw0 = softplus_inverse(1.0)
        self.phis = np.full((self.N, 2 * self.K), raw0, dtype=float)
        self.node = GammaVectorNode(self.K)

    # -- parameter maps ------------------------------------------------

    def topics(self) -> np.ndarray:
        return _column_softmax(self.W_logits)

    def phi_to_dist(self, phi: np.ndarray):
        """Chain one datum's raw coordinates to interleaved (a, b) params."""
        K = self.K
        c = np.empty(2 * K)
        J = np.zeros((2 * K, 2 * K))
        stacks = [None] * (2 * K)
        for k in range(K):
            gp, Jk, Sk = param_space_map("mu-sigma", phi[2 * k : 2 * k + 2])
            c[2 * k] = gp.alpha
            c[2 * k + 1] = gp.beta
            J[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = Jk
            stacks[2 * k] = (k, Sk[0])
            stacks[2 * k + 1] = (k, Sk[1])
        return c, J, stacks

    # -- per-datum estimates --------------------------------------------

    def _datum_sample_terms(
        self, i: int, W: np.ndarray, rng: RngStream, order: int
    ):
        """One z draw for datum i: raw-space gradient (and Hessian), the
        one-sample ELBO value, and the topic-logit gradient from the same z."""
        obj = pfa_elbo_objective(W, self.X[i], self.alpha0, self.beta0)
        phi = self.phis[i]
        c, J, stacks = self.phi_to_dist(phi)
        gen = rng.generator()
        z = self.node.sample(c, gen)
        hess_raw = None
        if order < 2:
            grad_c = est._continuous_gradient(self.node, obj, c, z)
        else:
            piece, grad_c = est._continuous_pieces(self.node, obj, c, z)
            H = J.T @ piece.dense() @ J
            for idx, (k, S2) in enumerate(stacks):
                sl = slice(2 * k, 2 * k + 2)
                H[sl, sl] += S2 * grad_c[idx]
            hess_raw = H
        grad_raw = J.T @ grad_c
        elbo = float(obj.f(z, c))
        lam = W @ z
        gW = np.outer(self.X[i] / lam - 1.0, z)
        gl = W * (gW - np.sum(gW * W, axis=0, keepdims=True))
        return grad_raw, hess_raw, elbo, gl

    def phi_gradients(self, rng: RngStream):
        """One-sample ELBO gradients for every datum (ascent direction).

        Returns (grads (N, 2K), mean one-sample ELBO, mean topic-logit
        gradient), all from the same z draws.
        """
        W = self.topics()
        grads = np.empty((self.N, 2 * self.K))
        elbo_acc = 0.0
        gl_acc = np.zeros_like(self.W_logits)
        for i in range(self.N):
            g, _, elbo, gl = self._datum_sample_terms(i, W, rng.child(i), order=1)
            grads[i] = g
            elbo_acc += elbo
            gl_acc += gl
        return grads, elbo_acc / self.N, gl_acc / self.N

    def phi_hessian_blocks(self, rng: RngStream) -> list[np.ndarray]:
        """One-sample per-datum ELBO Hessian blocks in raw coordinates."""
        W = self.topics()
        return [
            self._datum_sample_terms(i, W, rng.child(i), order=2)[1]
            for i in range(self.N)
        ]

    def elbo_estimate(self, rng: RngStream) -> float:
        W = self.topics()
        total = 0.0
        for i in range(self.N):
            obj = pfa_elbo_objective(W, self.X[i], self.alpha0, self.beta0)
            c, _, _ = self.phi_to_dist(self.phis[i])
            z = self.node.sample(c, rng.child(i).generator())
            total += float(obj.f(z, c))
        return total / self.N
