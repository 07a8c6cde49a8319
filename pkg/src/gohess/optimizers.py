"""First-order baselines and the stochastic cubic-regularization loop.

Each outer SCR iteration estimates a fresh gradient (batch ``n_g``) and a
fresh Hessian operator (batch ``n_h``, one sample lineage reused across
every product inside the iteration), then minimizes the local cubic model

    m(d) = g.d + 0.5 d.H[d] + (rho/6) ||d||^3

with a gradient-descent subsolver.  When the model decrease becomes
smaller than the stopping threshold, a final solver polishes the step and
the loop signals convergence.

Oracle-call accounting follows the per-iteration cost model: ``n_g`` per
gradient batch plus ``n_h`` per subsolver descent step (``t_sub`` of
them), i.e. ``n_g + n_h * t_sub`` per outer iteration; first-order methods
cost ``n_g`` per iteration.  The terminal polish is excluded from the
budget, mirroring how training curves are reported against oracle calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .samplers import RngStream

__all__ = [
    "FirstOrderState",
    "ScrConfig",
    "ScrState",
    "TrainRecord",
    "cubic_finalsolver",
    "cubic_subsolver",
    "first_order_minimize",
    "first_order_step",
    "scr_minimize",
    "scr_step",
]


@dataclass
class ScrConfig:
    rho: float
    lipschitz_l: float = 10.0
    epsilon: float = 1e-3
    t_sub: int = 3
    perturb_sigma: float = 1e-4
    n_g: int = 1
    n_h: int = 1
    inner: str = "plain"  # 'plain' eta = 1/(20 l), or 'rmsprop'
    inner_lr: float = 1e-2
    finalsolver_cap: int = 100_000

    def __post_init__(self):
        for name in ("rho", "lipschitz_l", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ScrConfig.{name} must be positive")
        if self.t_sub < 1:
            raise ValueError("ScrConfig.t_sub must be >= 1")
        if self.perturb_sigma < 0:
            raise ValueError("ScrConfig.perturb_sigma must be nonnegative")
        if self.n_g < 1 or self.n_h < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.inner not in ("plain", "rmsprop"):
            raise ValueError(f"unknown inner descent rule {self.inner!r}")


@dataclass
class TrainRecord:
    iteration: int
    oracle_calls: int
    objective: float
    params: np.ndarray


class ScrProblem(Protocol):
    dim: int

    def gradient_estimate(self, params: np.ndarray, n: int, rng: RngStream) -> np.ndarray: ...

    def hessian_operator(
        self, params: np.ndarray, n: int, rng: RngStream
    ) -> Callable[[np.ndarray], np.ndarray]: ...

    def objective_value(self, params: np.ndarray) -> float: ...


def _check_finite(v: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise ArithmeticError(f"nonfinite {what}: {v}")
    return v


def _cauchy_radius(g: np.ndarray, hvp, rho: float) -> float:
    gnorm = float(np.linalg.norm(g))
    ghg = float(g @ hvp(g))
    ratio = ghg / (rho * gnorm * gnorm)
    return -ratio + math.sqrt(ratio * ratio + 2.0 * gnorm / rho)


def cubic_subsolver(
    g: np.ndarray,
    hvp: Callable[[np.ndarray], np.ndarray],
    cfg: ScrConfig,
    rng: RngStream,
) -> tuple[np.ndarray, float]:
    """Gradient-descent cubic subsolver.

    Large gradients take the closed-form Cauchy step along -g; otherwise the
    step is refined for ``t_sub`` descent iterations on the cubic model with
    a sphere-perturbed gradient.  Returns (step, model decrease m(step)).
    """
    g = _check_finite(np.asarray(g, dtype=float), "subsolver gradient")
    gnorm = float(np.linalg.norm(g))
    if gnorm > 0.0:
        rc = _cauchy_radius(g, hvp, cfg.rho)
        delta = -rc * g / gnorm
    else:
        delta = np.zeros_like(g)
    if gnorm <= cfg.lipschitz_l**2 / cfg.rho:
        eta = 1.0 / (20.0 * cfg.lipschitz_l)
        gen = rng.generator()
        if cfg.perturb_sigma > 0.0:
            zeta = gen.standard_normal(g.shape[0])
            zeta /= np.linalg.norm(zeta)
            g_pert = g + cfg.perturb_sigma * zeta
        else:
            g_pert = g
        v_acc = np.zeros_like(g)
        for _ in range(cfg.t_sub):
            gm = g_pert + hvp(delta) + 0.5 * cfg.rho * np.linalg.norm(delta) * delta
            _check_finite(gm, "subsolver model gradient")
            if cfg.inner == "rmsprop":
                v_acc = 0.99 * v_acc + 0.01 * gm * gm
                delta = delta - cfg.inner_lr * gm / (np.sqrt(v_acc) + 1e-8)
            else:
                delta = delta - eta * gm
        _check_finite(delta, "subsolver iterate")
    dnorm = float(np.linalg.norm(delta))
    model = float(g @ delta + 0.5 * delta @ hvp(delta) + cfg.rho / 6.0 * dnorm**3)
    return delta, model


def cubic_finalsolver(
    g: np.ndarray,
    hvp: Callable[[np.ndarray], np.ndarray],
    cfg: ScrConfig,
) -> np.ndarray:
    """Descend the cubic model until its gradient norm is below epsilon/2."""
    g = _check_finite(np.asarray(g, dtype=float), "finalsolver gradient")
    delta = np.zeros_like(g)
    gm = g.copy()
    eta = 1.0 / (20.0 * cfg.lipschitz_l)
    for _ in range(cfg.finalsolver_cap):
        if float(np.linalg.norm(gm)) <= cfg.epsilon / 2.0:
            return delta
        delta = delta - eta * gm
        gm = g + hvp(delta) + 0.5 * cfg.rho * np.linalg.norm(delta) * delta
        _check_finite(gm, "finalsolver model gradient")
    raise ArithmeticError(
        f"cubic finalsolver exceeded {cfg.finalsolver_cap} iterations; "
        f"last model gradient norm {float(np.linalg.norm(gm)):.3e}"
    )


@dataclass
class ScrState:
    params: np.ndarray
    iteration: int = 0
    oracle_calls: int = 0


def scr_step(
    problem: ScrProblem,
    state: ScrState,
    cfg: ScrConfig,
    rng: RngStream,
) -> tuple[np.ndarray, TrainRecord, bool]:
    """One outer SCR iteration; returns (new params, trace record, stop flag).

    The stop rule fires when the subsolver's model decrease exceeds
    -sqrt(epsilon^3/rho)/100; the final solver then recomputes the step
    from the same gradient/Hessian estimates.
    """
    it_rng = rng.child(state.iteration)
    g = problem.gradient_estimate(state.params, cfg.n_g, it_rng.child(0))
    _check_finite(g, "gradient estimate")
    hvp = problem.hessian_operator(state.params, cfg.n_h, it_rng.child(1))
    delta, model = cubic_subsolver(g, hvp, cfg, it_rng.child(2))
    new_params = state.params + delta
    stop = model > -math.sqrt(cfg.epsilon**3 / cfg.rho) / 100.0
    if stop:
        delta_final = cubic_finalsolver(g, hvp, cfg)
        new_params = state.params + delta_final
    state.oracle_calls += cfg.n_g + cfg.n_h * cfg.t_sub
    state.iteration += 1
    state.params = new_params
    record = TrainRecord(
        iteration=state.iteration,
        oracle_calls=state.oracle_calls,
        objective=float(problem.objective_value(new_params)),
        params=new_params.copy(),
    )
    return new_params, record, stop


def scr_minimize(
    problem: ScrProblem,
    params0: np.ndarray,
    cfg: ScrConfig,
    rng: RngStream,
    max_iterations: int = 1000,
    oracle_budget: int | None = None,
) -> tuple[np.ndarray, list[TrainRecord]]:
    state = ScrState(params=np.asarray(params0, dtype=float).copy())
    trace: list[TrainRecord] = []
    for _ in range(max_iterations):
        params, record, stop = scr_step(problem, state, cfg, rng)
        trace.append(record)
        if stop:
            break
        if oracle_budget is not None and state.oracle_calls >= oracle_budget:
            break
    return state.params, trace


# ----------------------------------------------------------------------
# First-order baselines.


@dataclass
class FirstOrderState:
    params: np.ndarray
    step_count: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


@dataclass
class FirstOrderHyper:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rms_alpha: float = 0.99


def first_order_step(
    method: str,
    grad: np.ndarray,
    state: FirstOrderState,
    hyper: FirstOrderHyper,
) -> tuple[np.ndarray, FirstOrderState]:
    """One SGD / Adam / RMSprop update; returns (new params, state)."""
    grad = _check_finite(np.asarray(grad, dtype=float), f"{method} gradient")
    p = state.params
    if method == "sgd":
        new = p - hyper.lr * grad
    elif method == "adam":
        if state.m is None:
            state.m = np.zeros_like(p)
            state.v = np.zeros_like(p)
        t = state.step_count + 1
        state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad
        state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad * grad
        mhat = state.m / (1.0 - hyper.beta1**t)
        vhat = state.v / (1.0 - hyper.beta2**t)
        new = p - hyper.lr * mhat / (np.sqrt(vhat) + hyper.eps)
    elif method == "rmsprop":
        if state.v is None:
            state.v = np.zeros_like(p)
        state.v = hyper.rms_alpha * state.v + (1.0 - hyper.rms_alpha) * grad * grad
        new = p - hyper.lr * grad / (np.sqrt(state.v) + hyper.eps)
    else:
        raise ValueError(f"unknown first-order method {method!r}")
    state.params = new
    state.step_count += 1
    return new, state


def first_order_minimize(
    problem: ScrProblem,
    params0: np.ndarray,
    method: str,
    hyper: FirstOrderHyper,
    rng: RngStream,
    max_iterations: int = 1000,
    oracle_budget: int | None = None,
    n_g: int = 1,
) -> tuple[np.ndarray, list[TrainRecord]]:
    state = FirstOrderState(params=np.asarray(params0, dtype=float).copy())
    trace: list[TrainRecord] = []
    calls = 0
    for t in range(max_iterations):
        g = problem.gradient_estimate(state.params, n_g, rng.child(t))
        params, state = first_order_step(method, g, state, hyper)
        calls += n_g
        trace.append(
            TrainRecord(
                iteration=t + 1,
                oracle_calls=calls,
                objective=float(problem.objective_value(params)),
                params=params.copy(),
            )
        )
        if oracle_budget is not None and calls >= oracle_budget:
            break
    return state.params, trace
