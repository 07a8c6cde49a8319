"""Independent ground-truth machinery used by tests and acceptance runs.

Nothing in this module calls estimator code; the truth computations run on
scipy/double-precision paths that share no special-function code with the
derivative packs.  ``variance_map`` takes the estimator callables as plain
functions, so the dependency arrow points from the harness into here and
never back out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special as sps

__all__ = [
    "VarianceMapRow",
    "finite_diff",
    "nb_cutoff",
    "nb_logpmf_derivs_ref",
    "truncated_sum_expectation",
    "variance_map",
]


def finite_diff(
    fn: Callable[[np.ndarray], float | np.ndarray],
    point: np.ndarray | float,
    order: int = 1,
    step: float | None = None,
    richardson: bool = False,
) -> np.ndarray:
    """Central finite differences of fn at point.

    order 1: gradient (or jacobian for vector-valued fn) with
    h = cbrt(eps) * max(1, |x|); order 2: Hessian of a scalar fn with
    h = eps^(1/4) * max(1, |x|).  ``richardson`` applies one extrapolation
    step, (4 D(h/2) - D(h)) / 3.
    """
    x = np.atleast_1d(np.asarray(point, dtype=float))
    n = x.shape[0]
    eps = np.finfo(float).eps

    def _d1(h: np.ndarray) -> np.ndarray:
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = h[j]
            fp = np.asarray(fn(x + e), dtype=float)
            fm = np.asarray(fn(x - e), dtype=float)
            cols.append((fp - fm) / (2.0 * h[j]))
        out = np.stack(cols, axis=-1)
        return out

    def _d2(h: np.ndarray) -> np.ndarray:
        H = np.empty((n, n))
        f0 = float(fn(x))
        for j in range(n):
            ej = np.zeros(n)
            ej[j] = h[j]
            fpp = float(fn(x + 2 * ej))
            fmm = float(fn(x - 2 * ej))
            H[j, j] = (fpp - 2.0 * f0 + fmm) / (4.0 * h[j] ** 2)
            for k in range(j + 1, n):
                ek = np.zeros(n)
                ek[k] = h[k]
                v = (
                    float(fn(x + ej + ek))
                    - float(fn(x + ej - ek))
                    - float(fn(x - ej + ek))
                    + float(fn(x - ej - ek))
                ) / (4.0 * h[j] * h[k])
                H[j, k] = H[k, j] = v
        return H

    if order == 1:
        h0 = (step if step is not None else eps ** (1.0 / 3.0)) * np.maximum(1.0, np.abs(x))
        d = _d1(h0)
        if richardson:
            d = (4.0 * _d1(h0 / 2.0) - d) / 3.0
    elif order == 2:
        h0 = (step if step is not None else eps ** 0.25) * np.maximum(1.0, np.abs(x))
        d = _d2(h0)
        if richardson:
            d = (4.0 * _d2(h0 / 2.0) - d) / 3.0
    else:
        raise ValueError(f"finite_diff order must be 1 or 2, got {order!r}")
    if not np.all(np.isfinite(d)):
        raise ArithmeticError("finite differences hit a nonfinite evaluation")
    return np.squeeze(d) if np.isscalar(point) else d


# ----------------------------------------------------------------------
# Exact truncated-sum expectations for NB-distributed objectives.
# All in double precision on scipy special functions: an intentionally
# separate code path from the extended-precision estimator stack.


def nb_logpmf_derivs_ref(r: float, p: float, y: int):
    """Reference NB log-pmf with (r, p) gradient and Hessian (scipy path)."""
    q = 1.0 - p
    logpmf = (
        sps.gammaln(y + r) - sps.gammaln(y + 1.0) - sps.gammaln(r)
        + r * math.log(q) + y * math.log(p)
    )
    grad = np.array(
        [sps.digamma(y + r) - sps.digamma(r) + math.log(q), -r / q + y / p]
    )
    hess = np.array(
        [
            [sps.polygamma(1, y + r) - sps.polygamma(1, r), -1.0 / q],
            [-1.0 / q, -r / (q * q) - y / (p * p)],
        ]
    )
    return logpmf, grad, hess


def nb_cutoff(r: float, p: float, tail_tol: float, hard_cap: int = 10**6) -> int:
    """Smallest Y with NB upper-tail mass beyond Y below tail_tol."""
    y = max(8, int(r * p / (1.0 - p)) * 2 + 8)
    while y <= hard_cap:
        # CDF(y) = I_{1-p}(r, y+1)
        if 1.0 - sps.betainc(r, y + 1.0, 1.0 - p) < tail_tol:
            return y
        y = int(y * 1.5) + 4
    raise ValueError(
        f"NB truncation cutoff above hard cap {hard_cap} (r={r}, p={p}, tol={tail_tol})"
    )


def truncated_sum_expectation(
    r: float,
    p: float,
    f: Callable[[int, float, float], float],
    df_dparams: Callable[[int, float, float], np.ndarray] | None = None,
    d2f_dparams2: Callable[[int, float, float], np.ndarray] | None = None,
    tail_tol: float = 1e-12,
):
    """Exact value/gradient/Hessian of sum_y q(y; r, p) f(y, r, p).

    Differentiates the pmf terms analytically; f's own direct (r, p)
    dependence enters through the optional derivative callables.
    """
    cutoff = nb_cutoff(r, p, tail_tol)
    value = 0.0
    grad = np.zeros(2)
    hess = np.zeros((2, 2))
    for y in range(cutoff + 1):
        logpmf, s, hlog = nb_logpmf_derivs_ref(r, p, y)
        w = math.exp(logpmf)
        fv = float(f(y, r, p))
        value += w * fv
        gterm = s * fv
        hterm = (np.outer(s, s) + hlog) * fv
        if df_dparams is not None:
            gf = np.asarray(df_dparams(y, r, p), dtype=float)
            gterm = gterm + gf
            hterm = hterm + np.outer(s, gf) + np.outer(gf, s)
        if d2f_dparams2 is not None:
            hterm = hterm + np.asarray(d2f_dparams2(y, r, p), dtype=float)
        grad += w * gterm
        hess += w * hterm
    return value, grad, hess


# ----------------------------------------------------------------------
# Variance maps (one-sample Hessian error distributions over a grid).


@dataclass(frozen=True)
class VarianceMapRow:
    point: tuple[float, ...]
    estimator: str
    median_error: float
    mean_error: float
    replicates: int

    def __post_init__(self):
        if self.median_error < 0 or self.mean_error < 0:
            raise ValueError("Frobenius errors cannot be negative")


def variance_map(
    grid: Sequence[tuple[float, ...]],
    estimate_fns: Mapping[str, Callable[[tuple[float, ...], int], np.ndarray]],
    true_fn: Callable[[tuple[float, ...]], np.ndarray],
    replicates: int,
) -> list[VarianceMapRow]:
    """Per grid point and estimator tag, the one-sample Frobenius error
    distribution against the exact Hessian.

    ``estimate_fns[tag](point, replicate_index)`` returns one single-sample
    Hessian estimate; the harness passes closures so this module never
    imports estimator code.
    """
    rows: list[VarianceMapRow] = []
    for point in grid:
        H_true = np.asarray(true_fn(point), dtype=float)
        for tag, fn in estimate_fns.items():
            errs = np.empty(replicates)
            for i in range(replicates):
                H = np.asarray(fn(point, i), dtype=float)
                errs[i] = float(np.linalg.norm(H - H_true, ord="fro"))
            rows.append(
                VarianceMapRow(
                    point=tuple(float(c) for c in point),
                    estimator=tag,
                    median_error=float(np.median(errs)),
                    mean_error=float(errs.mean()),
                    replicates=replicates,
                )
            )
    return rows
