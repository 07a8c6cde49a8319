"""Unbiased Monte Carlo derivative estimators.

Pathwise estimators push derivatives through random nodes via the
per-sample packs of :mod:`gohess.nodes`; the score-function ("log-trick")
baseline, its LAX combination with a surrogate, discrete-leaf variants,
and the two-layer composition live here as well.

All estimators share the replicate convention: replicate i draws from
``rng.child(i)``, and the reduction is a fixed-order mean over i, so
results are independent of any parallel schedule.  Hessian estimates in
HVP mode keep the per-replicate linear pieces instead of the matrix, so
repeated products against the same estimate reuse one sample lineage.

When the integrand depends on the distribution parameters directly (as
reverse-KL objectives do), the estimators apply the total-derivative
extension: cross second derivatives enter both the pathwise and the
score-function forms.  See the objective-oracle fields below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .samplers import RngStream

DENSE_DIM_CAP = 64

__all__ = [
    "DENSE_DIM_CAP",
    "DeltaChild",
    "GammaChild",
    "HessianEstimate",
    "ObjectiveOracle",
    "TwoLayerObjective",
    "chain_gradient",
    "chain_hessian",
    "go_discrete",
    "go_gradient",
    "go_gradient_hessian",
    "go_hessian",
    "go_hvp",
    "lax_hessian",
    "log_trick_hessian",
    "two_layer_go",
    "validate_oracle",
]


@dataclass
class ObjectiveOracle:
    """Callable bundle for f(y, params) and the derivatives estimators need.

    ``y`` is always a 1-D array (one entry per node coordinate), ``params``
    the distribution-parameter vector.  Continuous estimators use
    ``df_dy``/``d2f_dy2``; discrete ones difference ``f`` directly.  The
    ``*_dparams*`` members are only needed when f depends on the parameters
    directly (e.g. a KL integrand); leave them None otherwise.
    """

    f: Callable[[np.ndarray, np.ndarray], float]
    df_dy: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    d2f_dy2: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    df_dparams: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    # [param, coord] cross second derivative
    d2f_dparamsdy: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    d2f_dparams2: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def require(self, *members: str) -> None:
        for m in members:
            if getattr(self, m) is None:
                raise ValueError(f"objective oracle lacks required member {m!r}")


def validate_oracle(
    obj: ObjectiveOracle,
    y: np.ndarray,
    params: np.ndarray,
    rtol: float = 1e-6,
) -> None:
    """Check supplied derivatives against central differences of f.

    Raises ArithmeticError on mismatch beyond ``rtol`` (relative to scale).
    """
    from .oracles import finite_diff

    y = np.asarray(y, dtype=float)
    params = np.asarray(params, dtype=float)

    def _check(name: str, got, want) -> None:
        got = np.asarray(got, dtype=float)
        want = np.asarray(want, dtype=float)
        scale = max(1.0, float(np.max(np.abs(want))))
        err = float(np.max(np.abs(got - want)))
        if err > rtol * scale:
            raise ArithmeticError(
                f"oracle member {name} disagrees with finite differences "
                f"(max abs err {err:.3e}, scale {scale:.3e})"
            )

    if obj.df_dy is not None:
        _check("df_dy", obj.df_dy(y, params), finite_diff(lambda yy: obj.f(yy, params), y, order=1))
    if obj.d2f_dy2 is not None:
        _check("d2f_dy2", obj.d2f_dy2(y, params), finite_diff(lambda yy: obj.f(yy, params), y, order=2))
    if obj.df_dparams is not None:
        _check(
            "df_dparams",
            obj.df_dparams(y, params),
            finite_diff(lambda pp: obj.f(y, pp), params, order=1),
        )
    if obj.d2f_dparams2 is not None:
        _check(
            "d2f_dparams2",
            obj.d2f_dparams2(y, params),
            finite_diff(lambda pp: obj.f(y, pp), params, order=2),
        )
    if obj.d2f_dparamsdy is not None and obj.df_dy is not None:
        fd = np.atleast_2d(finite_diff(lambda pp: obj.df_dy(y, pp), params, order=1))
        _check("d2f_dparamsdy", obj.d2f_dparamsdy(y, params), fd.T)


@dataclass
class HessianEstimate:
    """A Hessian estimate, dense or usable as a linear operator.

    ``seed_lineage`` records (master_seed, stream_id) of the replicate base
    stream; two estimates with equal lineage saw identical samples.
    """

    mode: str
    replicates: int
    seed_lineage: tuple[int, int]
    dim: int
    matrix: np.ndarray | None = None
    samples: np.ndarray | None = None
    pieces: list = field(default_factory=list)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.mode == "dense":
            return self.matrix @ v
        out = np.zeros(self.dim)
        for piece in self.pieces:
            out += piece.apply(v)
        return out / len(self.pieces)


class _SamplePieces:
    """Linear pieces of one replicate's Hessian estimate (HVP mode)."""

    __slots__ = ("G", "F2", "blocks", "C", "Hgg", "dim")

    def __init__(self, G, F2, blocks, C, Hgg, dim):
        self.G = G
        self.F2 = F2
        self.blocks = blocks  # list of (indices, effective per-node matrix)
        self.C = C            # (D, V) cross derivative or None
        self.Hgg = Hgg        # (D, D) direct second derivative or None
        self.dim = dim

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.G @ (self.F2 @ (self.G.T @ v))
        for idx, h in self.blocks:
            out[idx] += h @ v[idx]
        if self.C is not None:
            out += self.G @ (self.C.T @ v)
            out += self.C @ (self.G.T @ v)
        if self.Hgg is not None:
            out += self.Hgg @ v
        return out

    def dense(self) -> np.ndarray:
        H = self.G @ self.F2 @ self.G.T
        for idx, h in self.blocks:
            H[np.ix_(idx, idx)] += h
        if self.C is not None:
            X = self.G @ self.C.T
            H += X + X.T
        if self.Hgg is not None:
            H += self.Hgg
        return H


def _assemble_G(node, packs, y) -> np.ndarray:
    G = np.zeros((node.dim_params, y.shape[0]))
    for v, (idx, pk) in enumerate(packs):
        G[idx, v] = pk.nabla
    return G


def _continuous_pieces(
    node, obj: ObjectiveOracle, params, y
) -> tuple[_SamplePieces, np.ndarray]:
    """Second-order pieces plus the same-sample gradient estimate."""
    packs = node.packs(params, y, order=2)
    G = _assemble_G(node, packs, y)
    f1 = np.atleast_1d(np.asarray(obj.df_dy(y, params), dtype=float))
    F2 = np.atleast_2d(np.asarray(obj.d2f_dy2(y, params), dtype=float))
    blocks = [
        (idx, pk.variable_hess() * f1[v]) for v, (idx, pk) in enumerate(packs)
    ]
    C = None
    if obj.d2f_dparamsdy is not None:
        C = np.asarray(obj.d2f_dparamsdy(y, params), dtype=float).reshape(
            node.dim_params, y.shape[0]
        )
    Hgg = None
    if obj.d2f_dparams2 is not None:
        Hgg = np.asarray(obj.d2f_dparams2(y, params), dtype=float)
    grad = G @ f1
    if obj.df_dparams is not None:
        grad = grad + np.asarray(obj.df_dparams(y, params), dtype=float)
    return _SamplePieces(G, F2, blocks, C, Hgg, node.dim_params), grad


def _continuous_gradient(node, obj: ObjectiveOracle, params, y) -> np.ndarray:
    packs = node.packs(params, y, order=1)
    G = _assemble_G(node, packs, y)
    f1 = np.atleast_1d(np.asarray(obj.df_dy(y, params), dtype=float))
    grad = G @ f1
    if obj.df_dparams is not None:
        grad = grad + np.asarray(obj.df_dparams(y, params), dtype=float)
    return grad


def go_gradient(
    node,
    obj: ObjectiveOracle,
    params: np.ndarray,
    replicates: int,
    rng: RngStream,
    keep_samples: bool = False,
):
    """Pathwise gradient estimate of d/dparams E[f]."""
    params = np.asarray(params, dtype=float)
    if node.discrete:
        return go_discrete(node, obj, params, replicates, rng, order="gradient",
                           keep_samples=keep_samples)
    obj.require("df_dy")
    out = np.zeros((replicates, node.dim_params))
    for i in range(replicates):
        gen = rng.child(i).generator()
        y = node.sample(params, gen)
        out[i] = _continuous_gradient(node, obj, params, y)
    mean = out.mean(axis=0)
    return (mean, out) if keep_samples else mean


def go_hessian(
    node,
    obj: ObjectiveOracle,
    params: np.ndarray,
    replicates: int,
    rng: RngStream,
    mode: str = "dense",
    symmetrize: bool = False,
    keep_samples: bool = False,
) -> HessianEstimate:
    """Pathwise Hessian estimate of d^2/dparams^2 E[f].

    ``mode='hvp'`` keeps per-replicate linear pieces and never materializes
    the averaged matrix; ``symmetrize`` (dense only) averages H with its
    transpose, which preserves unbiasedness by linearity.
    """
    params = np.asarray(params, dtype=float)
    if node.discrete:
        return go_discrete(node, obj, params, replicates, rng, order="hessian",
                           keep_samples=keep_samples)
    obj.require("df_dy", "d2f_dy2")
    if mode not in ("dense", "hvp"):
        raise ValueError(f"unknown Hessian mode {mode!r}")
    if mode == "dense" and node.dim_params > DENSE_DIM_CAP:
        raise ValueError(
            f"dense mode limited to {DENSE_DIM_CAP} parameters, "
            f"got {node.dim_params}; use mode='hvp'"
        )
    est = HessianEstimate(
        mode=mode,
        replicates=replicates,
        seed_lineage=(rng.master_seed, rng.stream_id),
        dim=node.dim_params,
    )
    acc = np.zeros((node.dim_params, node.dim_params))
    samples = np.zeros((replicates, node.dim_params, node.dim_params)) if keep_samples else None
    for i in range(replicates):
        gen = rng.child(i).generator()
        y = node.sample(params, gen)
        piece, _ = _continuous_pieces(node, obj, params, y)
        if mode == "hvp":
            est.pieces.append(piece)
        if mode == "dense" or keep_samples:
            H = piece.dense()
            if symmetrize:
                H = 0.5 * (H + H.T)
            acc += H
            if keep_samples:
                samples[i] = H
    if mode == "dense":
        est.matrix = acc / replicates
    est.samples = samples
    return est


def go_hvp(
    node,
    obj: ObjectiveOracle,
    params: np.ndarray,
    v: np.ndarray,
    replicates: int,
    rng: RngStream,
) -> np.ndarray:
    """Hessian-vector product with the pathwise estimate; never forms the matrix."""
    est = go_hessian(node, obj, params, replicates, rng, mode="hvp")
    return est.matvec(v)


def go_gradient_hessian(
    node,
    obj: ObjectiveOracle,
    params: np.ndarray,
    replicates: int,
    rng: RngStream,
    keep_samples: bool = False,
) -> tuple[np.ndarray, HessianEstimate, np.ndarray | None]:
    """Gradient and dense Hessian estimates sharing one pack per draw.

    Returns (mean gradient, HessianEstimate, gradient samples or None).
    """
    params = np.asarray(params, dtype=float)
    obj.require("df_dy", "d2f_dy2")
    D = node.dim_params
    grad_acc = np.zeros(D)
    hess_acc = np.zeros((D, D))
    gsamples = np.zeros((replicates, D)) if keep_samples else None
    hsamples = np.zeros((replicates, D, D)) if keep_samples else None
    for i in range(replicates):
        gen = rng.child(i).generator()
        y = node.sample(params, gen)
        piece, grad = _continuous_pieces(node, obj, params, y)
        H = piece.dense()
        grad_acc += grad
        hess_acc += H
        if keep_samples:
            gsamples[i] = grad
            hsamples[i] = H
    est = HessianEstimate(
        mode="dense",
        replicates=replicates,
        seed_lineage=(rng.master_seed, rng.stream_id),
        dim=D,
        matrix=hess_acc / replicates,
        samples=hsamples,
    )
    return grad_acc / replicates, est, gsamples


def _log_trick_piece(node, obj: ObjectiveOracle, params, y) -> np.ndarray:
    _, score, hlog = node.logpdf_derivs(params, y)
    fv = float(obj.f(y, params))
    H = fv * (np.outer(score, score) + hlog)
    if obj.df_dparams is not None:
        gf = np.asarray(obj.df_dparams(y, params), dtype=float)
        H = H + np.outer(score, gf) + np.outer(gf, score)
    if obj.d2f_dparams2 is not None:
        H = H + np.asarray(obj.d2f_dparams2(y, params), dtype=float)
    return H


def log_trick_hessian(
    node,
    obj: ObjectiveOracle,
    params: np.ndarray,
    replicates: int,
    rng: RngStream,
    keep_samples: bool = False,
) -> HessianEstimate:
    """Score-function (REINFORCE-style) Hessian estimate.

    Uses only zero-order f information along the sample path; when f
    depends on the parameters directly, the exact direct terms (score-
    gradient cross products and the direct second derivative) are added so
    the estimate stays unbiased for the total Hessian.
    """
    params = np.asarray(params, dtype=float)
    est = HessianEstimate(
        mode="dense",
        replicates=replicates,
        seed_lineage=(rng.master_seed, rng.stream_id),
        dim=node.dim_params,
    )
    acc = np.zeros((node.dim_params, node.dim_params))
    samples = np.zeros((replicates, node.dim_params, node.dim_params)) if keep_samples else None
    for i in range(replicates):
        gen = rng.child(i).generator()
        y = node.sample(params, gen)
        H = _log_trick_piece(node, obj, params, y)
        acc += H
        if keep_samples:
            samples[i] = H
    est.matrix = acc / replicates
    est.samples = samples
    return est


# ----------------------------------------------------------------------
# Discrete leaves (forward differences).


def _bump(y: np.ndarray, v: int, by: int = 1) -> np.ndarray:
    out = y.copy()
    out[v] += by
    return out


def _discrete_gradient(node, obj, params, y) -> np.ndarray:
    packs = node.packs(params, y, order=1)
    G = _assemble_G(node, packs, y)
    f0 = float(obj.f(y, params))
    Dyf = np.array([float(obj.f(_bump(y, v), params)) - f0 for v in range(y.shape[0])])
    grad = G @ Dyf
    if obj.df_dparams is not None:
        grad = grad + np.asarray(obj.df_dparams(y, params), dtype=float)
    return grad


def _discrete_hessian(node, obj, params, y) -> np.ndarray:
    packs = node.packs(params, y, order=2)
    G = _assemble_G(node, packs, y)
    V = y.shape[0]
    f0 = float(obj.f(y, params))
    f_plus = np.array([float(obj.f(_bump(y, v), params)) for v in range(V)])
    Dyf = f_plus - f0
    # second differences, including the diagonal double bump
    D2f = np.empty((V, V))
    Dyf_at_plus = np.empty(V)
    for v in range(V):
        f_vv = float(obj.f(_bump(y, v, 2), params))
        D2f[v, v] = f_vv - 2.0 * f_plus[v] + f0
        Dyf_at_plus[v] = f_vv - f_plus[v]
        for w in range(v + 1, V):
            f_vw = float(obj.f(_bump(_bump(y, v), w), params))
            D2f[v, w] = D2f[w, v] = f_vw - f_plus[v] - f_plus[w] + f0
    H = G @ D2f @ G.T
    for v, (idx, pk) in enumerate(packs):
        M = np.outer(pk.nabla, pk.dnabla_dy) * Dyf_at_plus[v]
        M += pk.dnabla_dparams * Dyf[v]
        H[np.ix_(idx, idx)] += M
    if obj.df_dparams is not None:
        g0 = np.asarray(obj.df_dparams(y, params), dtype=float)
        Ddf = np.column_stack(
            [
                np.asarray(obj.df_dparams(_bump(y, v), params), dtype=float) - g0
                for v in range(V)
            ]
        )
        X = G @ Ddf.T
        H += X + X.T
    if obj.d2f_dparams2 is not None:
        H += np.asarray(obj.d2f_dparams2(y, params), dtype=float)
    return H


def go_discrete(
    node,
    obj: ObjectiveOracle,
    params: np.ndarray,
    replicates: int,
    rng: RngStream,
    order: str = "gradient",
    keep_samples: bool = False,
):
    """Pathwise estimate for discrete leaves, via forward differences of f."""
    params = np.asarray(params, dtype=float)
    if order not in ("gradient", "hessian"):
        raise ValueError(f"order must be 'gradient' or 'hessian', got {order!r}")
    if order == "gradient":
        out = np.zeros((replicates, node.dim_params))
        for i in range(replicates):
            gen = rng.child(i).generator()
            y = node.sample(params, gen)
            out[i] = _discrete_gradient(node, obj, params, y)
        mean = out.mean(axis=0)
        return (mean, out) if keep_samples else mean
    est = HessianEstimate(
        mode="dense",
        replicates=replicates,
        seed_lineage=(rng.master_seed, rng.stream_id),
        dim=node.dim_params,
    )
    acc = np.zeros((node.dim_params, node.dim_params))
    samples = np.zeros((replicates, node.dim_params, node.dim_params)) if keep_samples else None
    for i in range(replicates):
        gen = rng.child(i).generator()
        y = node.sample(params, gen)
        H = _discrete_hessian(node, obj, params, y)
        acc += H
        if keep_samples:
            samples[i] = H
    est.matrix = acc / replicates
    est.samples = samples
    return est


# ----------------------------------------------------------------------
# LAX combination: zero-order f, full-derivative surrogate.


def lax_hessian(
    node,
    obj_f: ObjectiveOracle,
    surrogate: ObjectiveOracle,
    params: np.ndarray,
    replicates: int,
    rng: RngStream,
    keep_samples: bool = False,
) -> HessianEstimate:
    """H_logtrick[f] - H_logtrick[c] + H_pathwise[c], sharing draws.

    Unbiased for any surrogate c; when c == f the two score-function terms
    cancel sample-by-sample and the pathwise low variance is recovered.
    """
    params = np.asarray(params, dtype=float)
    surrogate.require("df_dy", "d2f_dy2")
    est = HessianEstimate(
        mode="dense",
        replicates=replicates,
        seed_lineage=(rng.master_seed, rng.stream_id),
        dim=node.dim_params,
    )
    acc = np.zeros((node.dim_params, node.dim_params))
    samples = np.zeros((replicates, node.dim_params, node.dim_params)) if keep_samples else None
    for i in range(replicates):
        gen = rng.child(i).generator()
        y = node.sample(params, gen)
        H = _log_trick_piece(node, obj_f, params, y)
        H = H - _log_trick_piece(node, surrogate, params, y)
        H = H + _continuous_pieces(node, surrogate, params, y)[0].dense()
        acc += H
        if keep_samples:
            samples[i] = H
    est.matrix = acc / replicates
    est.samples = samples
    return est


# ----------------------------------------------------------------------
# Two-layer composition: continuous parent, continuous-gamma or delta child.


@dataclass
class TwoLayerObjective:
    """f(y1, y2) with partial derivatives; scalars in, scalars out."""

    f: Callable[[float, float], float]
    df_dy1: Callable[[float, float], float]
    df_dy2: Callable[[float, float], float]
    d2f_dy1dy1: Callable[[float, float], float]
    d2f_dy1dy2: Callable[[float, float], float]
    d2f_dy2dy2: Callable[[float, float], float]


class GammaChild:
    """Child yhat2 ~ Gam(alpha(g2, y1), beta(g2, y1)).

    ``param_fn(gamma2, y1)`` returns (c, J2, Jy, H22, H2y, Hyy) with
    c = (alpha, beta), J2 (2, n2), Jy (2,), H22 (2, n2, n2), H2y (2, n2),
    Hyy (2,): the first and second derivatives of each child parameter.
    """

    kind = "gamma"

    def __init__(self, param_fn, dim_params: int):
        self.param_fn = param_fn
        self.dim_params = dim_params


class DeltaChild:
    """Deterministic child y2 = t(gamma2, y1).

    ``value_fn(gamma2, y1)`` returns (t, dt_dg2 (n2,), dt_dy1, H22 (n2, n2),
    H2y (n2,), Hyy).
    """

    kind = "delta"

    def __init__(self, value_fn, dim_params: int):
        self.value_fn = value_fn
        self.dim_params = dim_params


def _child_eval(child, gamma2, y1, gen):
    """Sample the child and compose its pack down to (gamma2, y1) coordinates.

    Returns (y2, G2 (n2,), Gy scalar, Huu ((n2+1) x (n2+1)) with the y1
    coordinate last).
    """
    n2 = child.dim_params
    if child.kind == "delta":
        t, dt2, dty, H22, H2y, Hyy = child.value_fn(gamma2, y1)
        G2 = np.asarray(dt2, dtype=float)
        Gy = float(dty)
        Huu = np.zeros((n2 + 1, n2 + 1))
        Huu[:n2, :n2] = H22
        Huu[:n2, n2] = H2y
        Huu[n2, :n2] = H2y
        Huu[n2, n2] = Hyy
        return float(t), G2, Gy, Huu
    from .nodes import GammaNode

    c, J2, Jy, H22, H2y, Hyy = child.param_fn(gamma2, y1)
    c = np.asarray(c, dtype=float)
    node = GammaNode()
    y2 = node.sample(c, gen)
    (_, pack), = node.packs(c, y2, order=2)
    gc = pack.nabla
    hc = pack.variable_hess()
    Ju = np.zeros((2, n2 + 1))
    Ju[:, :n2] = J2
    Ju[:, n2] = Jy
    Huu = Ju.T @ hc @ Ju
    for ci in range(2):
        Hu = np.zeros((n2 + 1, n2 + 1))
        Hu[:n2, :n2] = H22[ci]
        Hu[:n2, n2] = H2y[ci]
        Hu[n2, :n2] = H2y[ci]
        Hu[n2, n2] = Hyy[ci]
        Huu += gc[ci] * Hu
    G2 = J2.T @ gc
    Gy = float(Jy @ gc)
    return float(y2[0]), G2, Gy, Huu


def two_layer_go(
    parent,
    child,
    obj: TwoLayerObjective,
    params1: np.ndarray,
    params2: np.ndarray,
    replicates: int,
    rng: RngStream,
    order: str = "hessian",
):
    """Estimate d/d(params1, params2) E[f(y1, y2)] over the two-layer graph.

    Block layout: parent parameters first.  The parent must be a scalar
    continuous (or delta) node; the child draws its distribution parameters
    from (params2, y1).
    """
    params1 = np.asarray(params1, dtype=float)
    params2 = np.asarray(params2, dtype=float)
    n1 = parent.dim_params
    n2 = child.dim_params
    if getattr(parent, "dim_y", 1) != 1:
        raise ValueError("two-layer parent must expose a scalar sample")
    if getattr(parent, "discrete", False):
        raise ValueError("two-layer parent must be continuous or delta")
    D = n1 + n2
    grad_acc = np.zeros(D)
    hess_acc = np.zeros((D, D))
    for i in range(replicates):
        gen = rng.child(i).generator()
        y1v = parent.sample(params1, gen)
        (_, ppack), = parent.packs(params1, y1v, order=2)
        g1 = ppack.nabla
        h1 = ppack.variable_hess()
        y1 = float(y1v[0])
        y2, G2, Gy, Huu = _child_eval(child, params2, y1, gen)
        f1 = obj.df_dy1(y1, y2)
        f2 = obj.df_dy2(y1, y2)
        grad_acc[:n1] += g1 * (Gy * f2 + f1)
        grad_acc[n1:] += G2 * f2
        if order == "hessian":
            f11 = obj.d2f_dy1dy1(y1, y2)
            f12 = obj.d2f_dy1dy2(y1, y2)
            f22 = obj.d2f_dy2dy2(y1, y2)
            H22b = np.outer(G2, G2) * f22 + Huu[:n2, :n2] * f2
            Mscalar = Gy * Gy * f22 + Huu[n2, n2] * f2 + 2.0 * Gy * f12 + f11
            H11b = np.outer(g1, g1) * Mscalar + h1 * (Gy * f2 + f1)
            col = G2 * (f22 * Gy + f12) + Huu[:n2, n2] * f2
            H21b = np.outer(col, g1)
            hess_acc[:n1, :n1] += H11b
            hess_acc[n1:, n1:] += H22b
            hess_acc[n1:, :n1] += H21b
            hess_acc[:n1, n1:] += H21b.T
    grad = grad_acc / replicates
    if order == "gradient":
        return grad
    est = HessianEstimate(
        mode="dense",
        replicates=replicates,
        seed_lineage=(rng.master_seed, rng.stream_id),
        dim=D,
        matrix=hess_acc / replicates,
    )
    return grad, est


# ----------------------------------------------------------------------
# Chaining distribution-parameter estimates into unconstrained coordinates.


def chain_gradient(grad_c: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. raw coordinates given d(params)/d(raw) = jac."""
    return jac.T @ np.asarray(grad_c, dtype=float)


def chain_hessian(
    grad_c: np.ndarray,
    hess_c: np.ndarray,
    jac: np.ndarray,
    hess_stack: Sequence[np.ndarray],
) -> np.ndarray:
    """Hessian w.r.t. raw coordinates (deterministic outer chain rule)."""
    H = jac.T @ np.asarray(hess_c, dtype=float) @ jac
    for i, gi in enumerate(np.asarray(grad_c, dtype=float)):
        H = H + hess_stack[i] * gi
    return H
