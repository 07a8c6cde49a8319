"""Per-distribution derivative packs for gamma, negative-binomial, and
delta (deterministic) nodes, plus the parameter-space maps.

A pack holds, for one random node and one realized sample, the pieces the
estimators assemble:

* ``nabla``          -- per-parameter g, the CDF-derivative ratio
                        -dQ/dparam / pdf ("the derivative of the sample");
* ``dnabla_dy``      -- d(nabla)/dy, or the forward difference for
                        discrete nodes;
* ``dnabla_dparams`` -- [b, a] = d(nabla_a)/dparam_b.

The second-order combination outer(nabla, dnabla_dy) + dnabla_dparams is
what enters the Hessian estimators' tensor term.

All special-function work runs in extended precision (see
:mod:`gohess.xprec`); the gamma assembly subtracts terms that grow like
exp(y) relative to the result in the right tail, so each pack evaluation
monitors its own cancellation and retries with more digits when the
working precision would not survive it.  Results are downcast to float64
at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np

from . import xprec as xp
from .samplers import SAMPLE_MIN, SHAPE_MIN, clamp_shape, gamma_sample, nb_sample
from .xprec import NonConvergenceError

__all__ = [
    "GammaParams",
    "MuSigmaParams",
    "NbParams",
    "NodeDerivatives",
    "DeltaNode",
    "GammaNode",
    "GammaUnitNode",
    "GammaVectorNode",
    "NbNode",
    "delta_node",
    "gamma_logpdf_derivs",
    "gamma_rate_node",
    "gamma_unit_nabla_pack",
    "nb_logpdf_derivs",
    "nb_nabla_pack",
    "param_space_map",
    "softplus",
    "softplus_inverse",
]


# ----------------------------------------------------------------------
# Parameter containers.


@dataclass(frozen=True)
class GammaParams:
    """Gamma shape/rate; the shape clamp is applied at construction."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"gamma shape must be positive, got {self.alpha!r}")
        if not self.beta > 0:
            raise ValueError(f"gamma rate must be positive, got {self.beta!r}")
        object.__setattr__(self, "alpha", clamp_shape(float(self.alpha)))
        object.__setattr__(self, "beta", float(self.beta))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta])


@dataclass(frozen=True)
class NbParams:
    """Negative binomial (failures r, success probability p)."""

    r: float
    p: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"NB r must be positive, got {self.r!r}")
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"NB p must be in (0, 1), got {self.p!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.p])


def softplus(x: float) -> float:
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def softplus_d1(x: float) -> float:
    # sigmoid
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def softplus_d2(x: float) -> float:
    s = softplus_d1(x)
    return s * (1.0 - s)


def softplus_inverse(y: float) -> float:
    if not y > 0:
        raise ValueError(f"softplus inverse needs y > 0, got {y!r}")
    # log(e^y - 1), stable for large y
    if y > 30:
        return y
    return math.log(math.expm1(y))


@dataclass(frozen=True)
class MuSigmaParams:
    """Unconstrained mean/std coordinates for a gamma node.

    mu = softplus(gamma_mu), sigma = softplus(gamma_sigma), inducing
    shape mu^2/sigma^2 and rate mu/sigma^2.
    """

    gamma_mu: float
    gamma_sigma: float

    def mu_sigma(self) -> tuple[float, float]:
        return softplus(self.gamma_mu), softplus(self.gamma_sigma)

    def to_gamma(self) -> GammaParams:
        mu, sigma = self.mu_sigma()
        return GammaParams(mu * mu / (sigma * sigma), mu / (sigma * sigma))


@dataclass
class NodeDerivatives:
    """Derivative pack of one node at one sample (see module docstring)."""

    nabla: np.ndarray
    dnabla_dy: np.ndarray
    dnabla_dparams: np.ndarray

    def variable_hess(self) -> np.ndarray:
        """[b, a] = nabla_b * d(nabla_a)/dy + d(nabla_a)/dparam_b."""
        return np.outer(self.nabla, self.dnabla_dy) + self.dnabla_dparams


def _finite_or_raise(pack: NodeDerivatives, what: str) -> NodeDerivatives:
    # hot path: arrays here have at most a handful of entries
    for arr in (pack.nabla, pack.dnabla_dy, pack.dnabla_dparams):
        for v in arr.flat:
            if not math.isfinite(v):
                raise ArithmeticError(f"nonfinite {what} derivative pack: {pack}")
    return pack


# ----------------------------------------------------------------------
# Gamma node, unit rate.
#
# For y ~ Gam(alpha, 1) with q the pdf, Q the CDF:
#   g        = -dQ/dalpha / q
#            = (psi(alpha) - log y) * gamma(alpha,y)/(y^(alpha-1) e^-y)
#              + (y e^y / alpha^2) * 2F2(alpha,alpha; alpha+1,alpha+1; -y)
#   dg/dy    = (psi(alpha) - log y) + g * (y - alpha + 1)/y
#   dg/dalpha= psi'(alpha) * gamma(alpha,y)/(y^(alpha-1) e^-y)
#              + (log y - psi(alpha)) * (y e^y / alpha^2) * 2F2(...)
#              - (2 y e^y / alpha^3) * 3F3(alpha x3; alpha+1 x3; -y)


def _gamma_ratio_series(a: float, z: float, order: int, d: int):
    """R0 = gamma(a,z)/core, R1 = [gamma(a,z) ln z - d_a gamma(a,z)]/core,
    R2 = [d2_a gamma - 2 ln z d_a gamma + gamma ln^2 z]/core, with
    core = z^(a-1) e^-z.

    Differentiating gamma's ascending series termwise gives, with
    c_n = z^(n+1)/(a(a+1)...(a+n)), S_n = sum 1/(a+j), T_n = sum 1/(a+j)^2,

        R0 = sum c_n,   R1 = sum c_n S_n,   R2 = sum c_n (S_n^2 + T_n),

    all terms positive, so no precision is lost to an alternating hump and
    the sums converge for every z (geometric once n > z - a).
    """
    with xp.precision_context(d):
        am = gmpy2.mpfr(a)
        zm = gmpy2.mpfr(z)
        eps = gmpy2.exp2(-(xp.dps_to_bits(d) + 8))
        u = 1 / am
        c = zm * u
        S = u
        second = order >= 2
        T = u * u if second else None
        r0 = c
        r1 = c * S
        r2 = c * (S * S + T) if second else gmpy2.mpfr(0)
        n = 1
        n_cap = 10 * math.ceil(z) + 10_000
        lo = z - a
        while n < n_cap:
            u = 1 / (am + n)
            c = c * zm * u
            S += u
            r0 += c
            w = c * S
            r1 += w
            if second:
                T += u * u
                r2 += c * (S * S + T)
            if n > lo and w < eps * r1:
                return r0, r1, r2
            n += 1
        raise NonConvergenceError(
            f"incomplete-gamma derivative series stalled at alpha={a}, y={z}"
        )


def _cancel_digits(peak, val, d: int) -> float:
    """Decimal digits lost assembling ``val`` from terms peaking at ``peak``.

    Compares binary exponents only; exact magnitudes are irrelevant here.
    """
    if peak == 0:
        return 0.0
    if val == 0:
        return float(d)
    pm, pe = peak.as_mantissa_exp()
    vm, ve = abs(val).as_mantissa_exp()
    bits = (pe + pm.bit_length()) - (ve + vm.bit_length())
    return max(0.0, 0.30103 * float(bits))


def _gamma_pack_attempt(a: float, z: float, order: int, d: int):
    # g       = (psi(a) - ln z) R0 + R1
    # dg/da   = psi'(a) R0 + (ln z - psi(a)) R1 - R2
    # dg/dz   = (psi(a) - ln z) + g (z - a + 1)/z
    # (equal to the 2F2/3F3 forms; R1 and R2 absorb the hypergeometric
    # combinations without their exponentially large alternating terms)
    with xp.precision_context(d):
        am = gmpy2.mpfr(a)
        zm = gmpy2.mpfr(z)
        logz = gmpy2.log(zm)
        psi0 = xp.digamma_polygamma(0, a, dps=d)
        r0, r1, r2 = _gamma_ratio_series(a, z, order, d)

        t1 = (psi0 - logz) * r0
        g = t1 + r1
        peak = max(abs(t1), r1)

        u1 = psi0 - logz
        u2 = g * (zm - am + 1) / zm
        dgdy = u1 + u2
        peak_dy = max(abs(u1), abs(u2))

        if order >= 2:
            psi1 = xp.digamma_polygamma(1, a, dps=d)
            v1 = psi1 * r0
            v2 = (logz - psi0) * r1
            dgda = v1 + v2 - r2
            peak_da = max(abs(v1), abs(v2), r2)
        else:
            dgda = gmpy2.mpfr(0)
            peak_da = gmpy2.mpfr(0)

        cancel = max(
            _cancel_digits(peak, g, d),
            _cancel_digits(peak_dy, dgdy, d),
            _cancel_digits(peak_da, dgda, d),
        )
        return (float(g), float(dgdy), float(dgda)), cancel


def gamma_unit_nabla_pack(
    alpha: float, y: float, order: int = 2, dps: int | None = None
) -> NodeDerivatives:
    """Derivative pack of Gam(alpha, 1) w.r.t. alpha at sample y."""
    a = clamp_shape(float(alpha))
    z = max(float(y), SAMPLE_MIN)
    base = xp.working_dps() if dps is None else int(dps)
    d = base + 8
    for _ in range(8):
        out, cancel = _gamma_pack_attempt(a, z, order, d)
        if d >= base + cancel + 4:
            break
        d = base + int(cancel) + 12
    g, dgdy, dgda = out
    return _finite_or_raise(
        NodeDerivatives(
            nabla=np.array([g]),
            dnabla_dy=np.array([dgdy]),
            dnabla_dparams=np.array([[dgda]]),
        ),
        "gamma",
    )


def gamma_rate_node(
    params: GammaParams, y_unit: float, order: int = 2, dps: int | None = None
) -> NodeDerivatives:
    """Pack of yhat = y/beta, y ~ Gam(alpha, 1), w.r.t. (alpha, beta).

    The rate enters through the deterministic rescaling, so its entries are
    exact; the chain rule composes them with the unit-rate pack.
    """
    unit = gamma_unit_nabla_pack(params.alpha, y_unit, order=order, dps=dps)
    g = unit.nabla[0]
    dgdy = unit.dnabla_dy[0]
    dgda = unit.dnabla_dparams[0, 0]
    b = params.beta
    y = max(float(y_unit), SAMPLE_MIN)
    yhat = y / b
    nabla = np.array([g / b, -yhat / b])
    # derivatives w.r.t. yhat (not the unit sample)
    dnabla_dy = np.array([dgdy, -1.0 / b])
    dnabla_dparams = np.array(
        [
            [dgda / b, 0.0],
            [(y * dgdy - g) / (b * b), yhat / (b * b)],
        ]
    )
    return _finite_or_raise(
        NodeDerivatives(nabla, dnabla_dy, dnabla_dparams), "gamma rate"
    )


def gamma_logpdf_derivs(
    params: GammaParams, y: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """log q and its first/second derivatives w.r.t. (alpha, beta)."""
    if not y > 0:
        raise ValueError(f"gamma sample must be positive, got {y!r}")
    a, b = params.alpha, params.beta
    logpdf = a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(y) - b * y
    psi0 = float(xp.digamma_polygamma(0, a))
    psi1 = float(xp.digamma_polygamma(1, a))
    grad = np.array([math.log(b) - psi0 + math.log(y), a / b - y])
    hess = np.array([[-psi1, 1.0 / b], [1.0 / b, -a / (b * b)]])
    return logpdf, grad, hess


# ----------------------------------------------------------------------
# Negative binomial node (discrete leaf).
#
# For y ~ NB(r, p) the CDF is I_{1-p}(r, y+1); with
#   L  = log(1-p) - psi(r) + psi(r+y+1)
#   B  = B_{1-p}(r, y+1)            (unregularized incomplete beta)
#   C  = (1-p)^r p^y
#   F3 = 3F2(r,r,-y; r+1,r+1; 1-p)  (terminating)
#   F4 = 4F3(r,r,r,-y; r+1,r+1,r+1; 1-p)
# the pack entries are
#   g_r = (y+r) [ -L B/C + F3/(p^y r^2) ]
#   g_p = (y+r)/(1-p)
#   dg_r/dr = [-L + (y+r)(psi'(r)-psi'(r+y+1))] B/C
#             + [1 + (y+r) L] F3/(p^y r^2) - 2 (y+r) F4/(p^y r^3)
#   dg_r/dp = -(y+r)(r/(1-p) - y/p) [ L B/C - F3/(p^y r^2) ] + (y+r) L/(1-p)
#   dg_p/dr = 1/(1-p),   dg_p/dp = (y+r)/(1-p)^2
# Forward differences in y use a second evaluation at y+1.


def _nb_terms_attempt(r: float, p: float, y: int, order: int, d: int):
    with xp.precision_context(d):
        rm = gmpy2.mpfr(r)
        pm = gmpy2.mpfr(p)
        ym = gmpy2.mpfr(y)
        q1 = 1 - pm
        L = gmpy2.log(q1) - xp.digamma_polygamma(0, r, dps=d) + xp.digamma_polygamma(
            0, r + y + 1.0, dps=d
        )
        B = xp.inc_beta(1.0 - p, r, y + 1.0, dps=d)
        B_over_C = B * gmpy2.exp(-rm * gmpy2.log(q1) - ym * gmpy2.log(pm))
        f3 = xp.pfq([r, r, -float(y)], [r + 1.0, r + 1.0], 1.0 - p, dps=d)
        if not f3.converged:
            raise NonConvergenceError(f"3F2 did not converge at r={r}, p={p}, y={y}")
        F3_term = f3.value * gmpy2.exp(-ym * gmpy2.log(pm)) / (rm * rm)

        yr = ym + rm
        t1 = -L * B_over_C
        t2 = F3_term
        g_r = yr * (t1 + t2)
        peak = yr * max(abs(t1), abs(t2))
        cancel = _cancel_digits(peak, g_r, d)
        dgr_dr = gmpy2.mpfr(0)
        dgr_dp = gmpy2.mpfr(0)
        if order >= 2:
            psi1r = xp.digamma_polygamma(1, r, dps=d)
            psi1ry = xp.digamma_polygamma(1, r + y + 1.0, dps=d)
            f4 = xp.pfq(
                [r, r, r, -float(y)], [r + 1.0] * 3, 1.0 - p, dps=d
            )
            if not f4.converged:
                raise NonConvergenceError(
                    f"4F3 did not converge at r={r}, p={p}, y={y}"
                )
            F4_term = f4.value * gmpy2.exp(-ym * gmpy2.log(pm)) / (rm * rm * rm)
            w1 = (-L + yr * (psi1r - psi1ry)) * B_over_C
            w2 = (1 + yr * L) * F3_term
            w3 = -2 * yr * F4_term
            dgr_dr = w1 + w2 + w3
            cancel = max(
                cancel, _cancel_digits(max(abs(w1), abs(w2), abs(w3)), dgr_dr, d)
            )

            s = rm / q1 - ym / pm
            x1 = -yr * s * (L * B_over_C - F3_term)
            x2 = yr * L / q1
            dgr_dp = x1 + x2
            cancel = max(cancel, _cancel_digits(max(abs(x1), abs(x2)), dgr_dp, d))
        return (float(g_r), float(dgr_dr), float(dgr_dp)), cancel


@lru_cache(maxsize=65536)
def _nb_g_cached(r: float, p: float, y: int, order: int, base_dps: int):
    d = base_dps + 8
    for _ in range(8):
        out, cancel = _nb_terms_attempt(r, p, y, order, d)
        if d >= base_dps + cancel + 4:
            return out
        d = base_dps + int(cancel) + 12
    return out


def nb_nabla_pack(
    params: NbParams, y: int, order: int = 2, dps: int | None = None
) -> NodeDerivatives:
    """Derivative pack of NB(r, p) w.r.t. (r, p) at integer sample y.

    ``dnabla_dy`` holds forward differences g(y+1) - g(y), computed by a
    second evaluation at y+1.
    """
    if y < 0 or int(y) != y:
        raise ValueError(f"NB sample must be a nonnegative integer, got {y!r}")
    y = int(y)
    r, p = params.r, params.p
    base = xp.working_dps() if dps is None else int(dps)
    g_r, dgr_dr, dgr_dp = _nb_g_cached(r, p, y, order, base)
    g_p = (y + r) / (1.0 - p)
    g_r_next, _, _ = _nb_g_cached(r, p, y + 1, 1, base)
    pack = NodeDerivatives(
        nabla=np.array([g_r, g_p]),
        dnabla_dy=np.array([g_r_next - g_r, 1.0 / (1.0 - p)]),
        dnabla_dparams=np.array(
            [
                [dgr_dr, 1.0 / (1.0 - p)],
                [dgr_dp, (y + r) / (1.0 - p) ** 2],
            ]
        ),
    )
    return _finite_or_raise(pack, "negative binomial")


def nb_logpdf_derivs(
    params: NbParams, y: int
) -> tuple[float, np.ndarray, np.ndarray]:
    """log pmf of NB(r, p) and its first/second (r, p) derivatives."""
    if y < 0 or int(y) != y:
        raise ValueError(f"NB sample must be a nonnegative integer, got {y!r}")
    y = int(y)
    r, p = params.r, params.p
    logpmf = (
        math.lgamma(y + r)
        - math.lgamma(y + 1.0)
        - math.lgamma(r)
        + r * math.log1p(-p)
        + y * math.log(p)
    )
    psi_yr = float(xp.digamma_polygamma(0, y + r))
    psi_r = float(xp.digamma_polygamma(0, r))
    psi1_yr = float(xp.digamma_polygamma(1, y + r))
    psi1_r = float(xp.digamma_polygamma(1, r))
    q = 1.0 - p
    grad = np.array([psi_yr - psi_r + math.log(q), -r / q + y / p])
    hess = np.array(
        [
            [psi1_yr - psi1_r, -1.0 / q],
            [-1.0 / q, -r / (q * q) - y / (p * p)],
        ]
    )
    return logpmf, grad, hess


# ----------------------------------------------------------------------
# Delta (deterministic) node: nabla is the plain gradient, the
# second-order pack entry the plain Hessian, and dnabla_dy vanishes.


def delta_node(value_fn, params: np.ndarray) -> tuple[np.ndarray, list]:
    """Evaluate a deterministic map and wrap it as per-coordinate packs.

    ``value_fn(params) -> (y (V,), grad (D, V), hess (D, D, V))``.
    Returns (y, packs) where packs[v] = (param_indices, NodeDerivatives).
    """
    y, grad, hess = value_fn(np.asarray(params, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    D = grad.shape[0]
    idx = np.arange(D)
    packs = []
    for v in range(y.shape[0]):
        packs.append(
            (
                idx,
                NodeDerivatives(
                    nabla=grad[:, v],
                    dnabla_dy=np.zeros(D),
                    dnabla_dparams=hess[:, :, v],
                ),
            )
        )
    return y, packs


# ----------------------------------------------------------------------
# Parameter-space maps (unconstrained raw coordinates -> gamma params).


def param_space_map(
    space: str, raw: np.ndarray
) -> tuple[GammaParams, np.ndarray, np.ndarray]:
    """Map raw coordinates to GammaParams with jacobian and second derivatives.

    Returns (params, J, S) with J[i, j] = d c_i / d raw_j for c = (alpha, beta)
    and S[i] the 2x2 matrix of second derivatives of c_i, used to chain
    estimator outputs into the raw space.
    """
    raw = np.asarray(raw, dtype=float)
    r0, r1 = float(raw[0]), float(raw[1])
    if softplus(r0) == 0.0 or softplus(r1) == 0.0:
        raise ArithmeticError(
            f"parameter-space map underflowed at raw = ({r0}, {r1}); "
            "the run has left the representable parameter region"
        )
    if space == "alpha-beta":
        alpha, beta = softplus(r0), softplus(r1)
        J = np.diag([softplus_d1(r0), softplus_d1(r1)])
        S = np.zeros((2, 2, 2))
        S[0, 0, 0] = softplus_d2(r0)
        S[1, 1, 1] = softplus_d2(r1)
        return GammaParams(alpha, beta), J, S
    if space == "mu-sigma":
        mu, sigma = softplus(r0), softplus(r1)
        dmu, dsig = softplus_d1(r0), softplus_d1(r1)
        d2mu, d2sig = softplus_d2(r0), softplus_d2(r1)
        alpha = mu * mu / (sigma * sigma)
        beta = mu / (sigma * sigma)
        # derivatives of (alpha, beta) w.r.t. (mu, sigma)
        da = np.array([2 * mu / sigma**2, -2 * mu**2 / sigma**3])
        db = np.array([1.0 / sigma**2, -2 * mu / sigma**3])
        Ha = np.array(
            [
                [2 / sigma**2, -4 * mu / sigma**3],
                [-4 * mu / sigma**3, 6 * mu**2 / sigma**4],
            ]
        )
        Hb = np.array(
            [
                [0.0, -2 / sigma**3],
                [-2 / sigma**3, 6 * mu / sigma**4],
            ]
        )
        J = np.array(
            [[da[0] * dmu, da[1] * dsig], [db[0] * dmu, db[1] * dsig]]
        )
        S = np.empty((2, 2, 2))
        for i, (dc, Hc) in enumerate(((da, Ha), (db, Hb))):
            S[i, 0, 0] = Hc[0, 0] * dmu * dmu + dc[0] * d2mu
            S[i, 0, 1] = S[i, 1, 0] = Hc[0, 1] * dmu * dsig
            S[i, 1, 1] = Hc[1, 1] * dsig * dsig + dc[1] * d2sig
        return GammaParams(alpha, beta), J, S
    raise ValueError(f"unknown parameter space {space!r}")


# ----------------------------------------------------------------------
# Node objects consumed by the estimators.


class GammaUnitNode:
    """Scalar y ~ Gam(alpha, 1); params = (alpha,)."""

    dim_params = 1
    dim_y = 1
    discrete = False

    def sample(self, params: np.ndarray, gen) -> np.ndarray:
        return np.array([gamma_sample(float(params[0]), 1.0, gen)])

    def packs(self, params: np.ndarray, y: np.ndarray, order: int = 2):
        pack = gamma_unit_nabla_pack(float(params[0]), float(y[0]), order=order)
        return [(np.array([0]), pack)]

    def logpdf_derivs(self, params: np.ndarray, y: np.ndarray):
        gp = GammaParams(float(params[0]), 1.0)
        lp, grad, hess = gamma_logpdf_derivs(gp, float(y[0]))
        return lp, grad[:1], hess[:1, :1]


class GammaNode:
    """Scalar yhat ~ Gam(alpha, beta); params = (alpha, beta)."""

    dim_params = 2
    dim_y = 1
    discrete = False

    def sample(self, params: np.ndarray, gen) -> np.ndarray:
        return np.array([gamma_sample(float(params[0]), float(params[1]), gen)])

    def packs(self, params: np.ndarray, y: np.ndarray, order: int = 2):
        gp = GammaParams(float(params[0]), float(params[1]))
        y_unit = max(float(y[0]) * gp.beta, SAMPLE_MIN)
        pack = gamma_rate_node(gp, y_unit, order=order)
        return [(np.array([0, 1]), pack)]

    def logpdf_derivs(self, params: np.ndarray, y: np.ndarray):
        gp = GammaParams(float(params[0]), float(params[1]))
        return gamma_logpdf_derivs(gp, float(y[0]))


class GammaVectorNode:
    """K independent gamma coordinates; params interleaved (a1,b1,a2,b2,...)."""

    discrete = False

    def __init__(self, n_coords: int):
        self.n_coords = n_coords
        self.dim_params = 2 * n_coords
        self.dim_y = n_coords

    def coord_indices(self, k: int) -> np.ndarray:
        return np.array([2 * k, 2 * k + 1])

    def sample(self, params: np.ndarray, gen) -> np.ndarray:
        out = np.empty(self.n_coords)
        for k in range(self.n_coords):
            out[k] = gamma_sample(float(params[2 * k]), float(params[2 * k + 1]), gen)
        return out

    def packs(self, params: np.ndarray, y: np.ndarray, order: int = 2):
        result = []
        for k in range(self.n_coords):
            gp = GammaParams(float(params[2 * k]), float(params[2 * k + 1]))
            y_unit = max(float(y[k]) * gp.beta, SAMPLE_MIN)
            result.append(
                (self.coord_indices(k), gamma_rate_node(gp, y_unit, order=order))
            )
        return result

    def logpdf_derivs(self, params: np.ndarray, y: np.ndarray):
        lp = 0.0
        grad = np.zeros(self.dim_params)
        hess = np.zeros((self.dim_params, self.dim_params))
        for k in range(self.n_coords):
            gp = GammaParams(float(params[2 * k]), float(params[2 * k + 1]))
            lpk, gk, hk = gamma_logpdf_derivs(gp, float(y[k]))
            lp += lpk
            idx = self.coord_indices(k)
            grad[idx] = gk
            hess[np.ix_(idx, idx)] = hk
        return lp, grad, hess


class NbNode:
    """Scalar y ~ NB(r, p); params = (r, p); discrete leaf."""

    dim_params = 2
    dim_y = 1
    discrete = True

    def sample(self, params: np.ndarray, gen) -> np.ndarray:
        return np.array([nb_sample(float(params[0]), float(params[1]), gen)], dtype=float)

    def packs(self, params: np.ndarray, y: np.ndarray, order: int = 2):
        nb = NbParams(float(params[0]), float(params[1]))
        pack = nb_nabla_pack(nb, int(y[0]), order=order)
        return [(np.array([0, 1]), pack)]

    def logpdf_derivs(self, params: np.ndarray, y: np.ndarray):
        nb = NbParams(float(params[0]), float(params[1]))
        return nb_logpdf_derivs(nb, int(y[0]))


class DeltaNode:
    """Deterministic node y = value_fn(params); the degenerate case.

    ``value_fn(params) -> (y (V,), grad (D, V), hess (D, D, V))``
    """

    discrete = False

    def __init__(self, value_fn, dim_params: int, dim_y: int):
        self.value_fn = value_fn
        self.dim_params = dim_params
        self.dim_y = dim_y

    def sample(self, params: np.ndarray, gen) -> np.ndarray:
        y, _ = delta_node(self.value_fn, params)
        return y

    def packs(self, params: np.ndarray, y: np.ndarray, order: int = 2):
        _, packs = delta_node(self.value_fn, params)
        return packs

    def logpdf_derivs(self, params: np.ndarray, y: np.ndarray):
        raise NotImplementedError("delta nodes have no density")
