"""Extended-precision special functions.

Everything in this module evaluates in MPFR arbitrary-precision arithmetic
(via gmpy2) at a configurable working precision, 50 significant decimal
digits by default.  Double precision is not enough here: the hypergeometric
series below are alternating for negative arguments and can lose well over
a hundred digits to cancellation, and the derivative-pack assembly in
:mod:`gohess.nodes` subtracts terms that are exponentially larger than the
result in the right tail.  Functions that sum series track the peak term
magnitude and transparently retry at higher internal precision until the
requested number of digits survives the cancellation.

Values are returned as ``gmpy2.mpfr`` ("ExtReal"); callers downcast to
float only at the very end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import gmpy2
from gmpy2 import mpfr

DEFAULT_DPS = 50

# Extra bits beyond ceil(dps*log2(10)) so the last requested digit is sound.
_GUARD_BITS = 12

_working_dps = DEFAULT_DPS

ExtReal = mpfr

__all__ = [
    "DEFAULT_DPS",
    "ExtReal",
    "NonConvergenceError",
    "SeriesResult",
    "digamma_polygamma",
    "dps_to_bits",
    "gamma_fn",
    "inc_beta",
    "inc_gamma",
    "lngamma",
    "mpf",
    "pfq",
    "precision_context",
    "reg_inc_beta",
    "set_working_dps",
    "to_float",
    "working_dps",
]


class NonConvergenceError(ArithmeticError):
    """A series or iteration failed to converge within its term cap."""


@dataclass(frozen=True)
class SeriesResult:
    """Outcome of a truncated series evaluation."""

    value: mpfr
    terms_used: int
    converged: bool


def working_dps() -> int:
    """Current working precision in significant decimal digits."""
    return _working_dps


def set_working_dps(dps: int) -> None:
    """Set the working precision (decimal digits) for subsequent calls."""
    global _working_dps
    if dps < 15:
        raise ValueError(f"working precision must be >= 15 digits, got {dps}")
    _working_dps = int(dps)
    _polygamma_cached.cache_clear()


def dps_to_bits(dps: int) -> int:
    return int(math.ceil(dps * math.log2(10.0))) + _GUARD_BITS


def precision_context(dps: int | None = None, extra_bits: int = 0):
    """gmpy2 context manager at ``dps`` decimal digits (+ optional bits)."""
    d = _working_dps if dps is None else dps
    return gmpy2.context(precision=dps_to_bits(d) + extra_bits)


def mpf(x) -> mpfr:
    """Convert to mpfr at the current context precision."""
    return mpfr(x)


def to_float(x) -> float:
    return float(x)


# ----------------------------------------------------------------------
# Bernoulli numbers (exact rationals), for the polygamma asymptotic series.

_bernoulli_cache: list[Fraction] = [Fraction(1)]


def _bernoulli(n: int) -> Fraction:
    while len(_bernoulli_cache) <= n:
        m = len(_bernoulli_cache)
        s = sum(
            Fraction(math.comb(m + 1, j)) * _bernoulli_cache[j] for j in range(m)
        )
        _bernoulli_cache.append(-s / (m + 1))
    return _bernoulli_cache[n]


# ----------------------------------------------------------------------
# Digamma / polygamma.


def digamma_polygamma(order: int, x: float, dps: int | None = None) -> mpfr:
    """Polygamma ``psi^(m)(x)`` for m >= 0 (m = 0 is the digamma).

    Upward recurrence shifts the argument until the Bernoulli asymptotic
    series delivers the requested precision; the shift threshold scales
    with the digit count because the asymptotic error floor is ~exp(-2*pi*x).
    """
    if not isinstance(order, (int,)) or isinstance(order, bool) or order < 0:
        raise ValueError(f"polygamma order must be a nonnegative integer, got {order!r}")
    if not x > 0:
        raise ValueError(f"polygamma requires x > 0, got {x!r}")
    d = _working_dps if dps is None else int(dps)
    return _polygamma_cached(order, float(x), d)


@lru_cache(maxsize=8192)
def _polygamma_cached(m: int, x: float, dps: int) -> mpfr:
    with precision_context(dps, extra_bits=16):
        return _polygamma_impl(m, mpfr(x), dps)


def _polygamma_impl(m: int, x: mpfr, dps: int) -> mpfr:
    # Shift so the asymptotic tail bound 2*(2k)!/(2*pi*X)^(2k) can reach
    # 10^-dps before the series turns; 0.6 digits of shift per digit wanted.
    x_big = max(20.0, 0.6 * dps + 8.0)
    shift_terms = mpfr(0)
    xs = x
    n_shift = max(0, int(math.ceil(x_big - float(x))))
    for j in range(n_shift):
        shift_terms += (xs + j) ** (-(m + 1))
    X = xs + n_shift

    eps = gmpy2.exp2(-(dps_to_bits(dps) + 8))
    X2 = X * X
    if m == 0:
        acc = gmpy2.log(X) - 1 / (2 * X)
        scale = abs(acc) if acc != 0 else mpfr(1)
        pw = X2
        for k in range(1, 4 * int(x_big)):
            b2k = _bernoulli(2 * k)
            term = mpfr(b2k.numerator) / (mpfr(b2k.denominator) * (2 * k) * pw)
            acc -= term
            if abs(term) < eps * scale:
                break
            pw *= X2
        else:
            raise NonConvergenceError("digamma asymptotic series did not converge")
        return acc - shift_terms
    sign = 1 if (m % 2 == 1) else -1
    fac_m1 = mpfr(gmpy2.fac(m - 1)) if m > 1 else mpfr(1)
    acc = fac_m1 / X**m + mpfr(gmpy2.fac(m)) / (2 * X ** (m + 1))
    scale = acc
    pw = X ** (m + 2)
    for k in range(1, 4 * int(x_big)):
        b2k = _bernoulli(2 * k)
        coeff = mpfr(gmpy2.fac(2 * k + m - 1)) / mpfr(gmpy2.fac(2 * k))
        term = mpfr(b2k.numerator) / mpfr(b2k.denominator) * coeff / pw
        acc += term
        if abs(term) < eps * scale:
            break
        pw *= X2
    else:
        raise NonConvergenceError("polygamma asymptotic series did not converge")
    # psi^m(x) = psi^m(x+n) - (-1)^m m! sum_j (x+j)^-(m+1)
    return sign * acc - (-1) ** m * mpfr(gmpy2.fac(m)) * shift_terms


def lngamma(x, dps: int | None = None) -> mpfr:
    if not x > 0:
        raise ValueError(f"lngamma requires x > 0, got {x!r}")
    with precision_context(dps):
        return gmpy2.lngamma(mpfr(x))


def gamma_fn(x, dps: int | None = None) -> mpfr:
    if not x > 0:
        raise ValueError(f"gamma requires x > 0, got {x!r}")
    with precision_context(dps):
        return gmpy2.gamma(mpfr(x))


# ----------------------------------------------------------------------
# Incomplete gamma.


def _lower_gamma_ratio_series(a: mpfr, z: mpfr, eps: mpfr) -> mpfr:
    """gamma(a,z) / (z^(a-1) e^-z) = z * sum_n z^n / (a (a+1) ... (a+n)).

    All terms positive; valid/efficient for z < a + 1.
    """
    term = 1 / a
    total = term
    n = 1
    while True:
        term *= z / (a + n)
        total += term
        if term < eps * total:
            return z * total
        n += 1
        if n > 10_000_000:  # pragma: no cover - z < a+1 always converges
            raise NonConvergenceError("lower incomplete gamma series stalled")


def _upper_gamma_ratio_cf(a: mpfr, z: mpfr, eps: mpfr) -> mpfr:
    """Gamma(a,z) / (z^(a-1) e^-z) = z * CF, by modified Lentz iteration.

    Valid/efficient for z >= a + 1.
    """
    tiny = gmpy2.exp2(-dps_to_bits(_working_dps) * 8 - 400)
    b = z + 1 - a
    c = 1 / tiny
    d = 1 / b if b != 0 else 1 / tiny
    h = d
    for i in range(1, 10_000_000):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        if d == 0:
            d = tiny
        c = b + an / c
        if c == 0:
            c = tiny
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < eps:
            return z * h
    raise NonConvergenceError("upper incomplete gamma continued fraction stalled")


def inc_gamma(alpha: float, y: float, kind: str = "lower", dps: int | None = None) -> mpfr:
    """Incomplete gamma: lower gamma(a,y), upper Gamma(a,y), or regularized P.

    Satisfies gamma + Gamma = Gamma(a) and P = gamma/Gamma(a) in [0, 1].
    """
    if kind not in ("lower", "upper", "regularized"):
        raise ValueError(f"unknown incomplete-gamma kind {kind!r}")
    if not alpha > 0:
        raise ValueError(f"inc_gamma requires alpha > 0, got {alpha!r}")
    if not y >= 0:
        raise ValueError(f"inc_gamma requires y >= 0, got {y!r}")
    d = _working_dps if dps is None else int(dps)
    with precision_context(d, extra_bits=16):
        a = mpfr(alpha)
        z = mpfr(y)
        if y == 0:
            if kind == "upper":
                return gmpy2.gamma(a)
            return mpfr(0)
        eps = gmpy2.exp2(-(dps_to_bits(d) + 8))
        # pdf core z^(a-1) e^-z, exact in mpfr (huge exponent range)
        core = gmpy2.exp((a - 1) * gmpy2.log(z) - z)
        if z < a + 1:
            lower = _lower_gamma_ratio_series(a, z, eps) * core
            if kind == "lower":
                return lower
            g = gmpy2.gamma(a)
            return g - lower if kind == "upper" else lower / g
        upper = _upper_gamma_ratio_cf(a, z, eps) * core
        if kind == "upper":
            return upper
        g = gmpy2.gamma(a)
        return g - upper if kind == "lower" else 1 - upper / g


def lower_gamma_over_core(alpha: float, y: float, dps: int | None = None) -> mpfr:
    """gamma(alpha, y) / (y^(alpha-1) e^-y), the ratio used by derivative packs.

    Computed without forming the (possibly astronomically scaled) numerator
    and denominator separately on the series branch.
    """
    if not alpha > 0:
        raise ValueError(f"requires alpha > 0, got {alpha!r}")
    if not y >= 0:
        raise ValueError(f"requires y >= 0, got {y!r}")
    d = _working_dps if dps is None else int(dps)
    with precision_context(d, extra_bits=16):
        a = mpfr(alpha)
        z = mpfr(y)
        if y == 0:
            return mpfr(0)
        eps = gmpy2.exp2(-(dps_to_bits(d) + 8))
        if z < a + 1:
            return _lower_gamma_ratio_series(a, z, eps)
        # gamma/core = Gamma(a)/core - Gamma(a,z)/core
        log_core = (a - 1) * gmpy2.log(z) - z
        total = gmpy2.exp(gmpy2.lngamma(a) - log_core)
        return total - _upper_gamma_ratio_cf(a, z, eps)


# ----------------------------------------------------------------------
# Generalized hypergeometric series.


def pfq(a: list[float], b: list[float], x: float, dps: int | None = None) -> SeriesResult:
    """Generalized hypergeometric pFq(a; b; x) by direct term recurrence.

    Supported regimes: len(a) <= len(b) (entire series), or a terminating
    series where some upper parameter is a nonpositive integer (needed for
    the negative-binomial packs, whose 3F2/4F3 terminate after y+1 terms).
    Alternating sums are re-run at higher internal precision until the
    cancellation between the peak term and the result is fully absorbed;
    a dishonest ``converged`` flag is never returned.
    """
    d = _working_dps if dps is None else int(dps)
    terminates_at = None
    for ai in a:
        if ai <= 0 and float(ai) == int(ai):
            n = int(-ai)
            terminates_at = n if terminates_at is None else min(terminates_at, n)
    if len(a) > len(b) and terminates_at is None:
        raise ValueError(
            "pfq requires len(a) <= len(b) unless the series terminates "
            "(a nonpositive-integer upper parameter)"
        )
    for bj in b:
        if bj <= 0 and float(bj) == int(bj):
            raise ValueError(f"pfq lower parameter must not be a nonpositive integer: {bj!r}")

    target_bits = dps_to_bits(d) + 8
    k_cap = 10 * math.ceil(abs(x)) + 10_000
    if terminates_at is not None:
        k_cap = min(k_cap, terminates_at + 1)
    # First pass: budget for the e^|x| term hump of alternating series.
    extra = int(1.4427 * abs(x)) + 32 if x < 0 else 32
    p_bits = target_bits + extra
    for _attempt in range(10):
        with gmpy2.context(precision=p_bits):
            aa = [mpfr(v) for v in a]
            bb = [mpfr(v) for v in b]
            xm = mpfr(x)
            term = mpfr(1)
            total = mpfr(1)
            peak = mpfr(1)
            eps = gmpy2.exp2(-target_bits)
            converged = False
            k = 0
            while k < k_cap:
                t = term
                for ai in aa:
                    t *= ai + k
                for bj in bb:
                    t /= bj + k
                term = t * xm / (k + 1)
                k += 1
                if term == 0:
                    converged = True
                    break
                total += term
                at = abs(term)
                if at > peak:
                    peak = at
                if k > abs(x) and at < eps * abs(total):
                    converged = True
                    break
            if terminates_at is not None and k >= terminates_at:
                converged = True
            if total == 0:
                cancel_bits = p_bits
            else:
                cancel_bits = max(0, int(math.ceil(float(gmpy2.log2(peak / abs(total))))))
        if p_bits >= target_bits + cancel_bits + 8:
            with precision_context(d):
                return SeriesResult(value=+total, terms_used=k, converged=converged)
        p_bits = target_bits + cancel_bits + 64
    return SeriesResult(value=+total, terms_used=k, converged=False)


# ----------------------------------------------------------------------
# Incomplete beta.


def _betacf(a: mpfr, b: mpfr, x: mpfr, eps: mpfr) -> mpfr:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = gmpy2.exp2(-dps_to_bits(_working_dps) * 8 - 400)
    qab = a + b
    qap = a + 1
    qam = a - 1
    c = mpfr(1)
    d = 1 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1 / d
    h = d
    for m in range(1, 10_000_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < eps:
            return h
    raise NonConvergenceError("incomplete beta continued fraction stalled")


def reg_inc_beta(x: float, a: float, b: float, dps: int | None = None) -> mpfr:
    """Regularized incomplete beta I_x(a, b) in [0, 1]."""
    if not (0 <= x <= 1):
        raise ValueError(f"reg_inc_beta requires 0 <= x <= 1, got {x!r}")
    if not (a > 0 and b > 0):
        raise ValueError(f"reg_inc_beta requires a, b > 0, got a={a!r} b={b!r}")
    d = _working_dps if dps is None else int(dps)
    with precision_context(d, extra_bits=16):
        if x == 0:
            return mpfr(0)
        if x == 1:
            return mpfr(1)
        am = mpfr(a)
        bm = mpfr(b)
        xm = mpfr(x)
        eps = gmpy2.exp2(-(dps_to_bits(d) + 8))
        front = gmpy2.exp(
            gmpy2.lngamma(am + bm)
            - gmpy2.lngamma(am)
            - gmpy2.lngamma(bm)
            + am * gmpy2.log(xm)
            + bm * gmpy2.log(1 - xm)
        )
        if xm < (am + 1) / (am + bm + 2):
            return front * _betacf(am, bm, xm, eps) / am
        return 1 - gmpy2.exp(
            gmpy2.lngamma(am + bm)
            - gmpy2.lngamma(am)
            - gmpy2.lngamma(bm)
            + bm * gmpy2.log(1 - xm)
            + am * gmpy2.log(xm)
        ) * _betacf(bm, am, 1 - xm, eps) / bm


def inc_beta(x: float, a: float, b: float, dps: int | None = None) -> mpfr:
    """Unregularized incomplete beta B_x(a, b) = I_x(a, b) * B(a, b)."""
    d = _working_dps if dps is None else int(dps)
    with precision_context(d, extra_bits=16):
        reg = reg_inc_beta(x, a, b, dps=d)
        am = mpfr(a)
        bm = mpfr(b)
        return reg * gmpy2.exp(
            gmpy2.lngamma(am) + gmpy2.lngamma(bm) - gmpy2.lngamma(am + bm)
        )
