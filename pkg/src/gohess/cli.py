"""Command-line front door: experiment configuration, execution, seeding,
oracle-call accounting, CSV persistence, and synthetic data generation.

Subcommands: ``variance-map``, ``kl-train``, ``pfa-vi``, ``selfcheck``,
``gen-data``.  Configuration is flat key=value text (``--config PATH``)
plus repeatable ``--set key=value`` overrides; unknown keys are rejected.
Every run is fully determined by (config, seed); all randomness flows
through tagged child streams of one master stream, and CSV floats are
written with shortest round-trip repr, so identical configurations
produce byte-identical artifacts.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 self-check suite failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import estimators as est
from . import models, nodes, optimizers, oracles
from . import xprec as xp
from .samplers import RngStream, gamma_sample, poisson_sample

SCHEMA_LINE = "# schema=1"

# stream tags (children of the master stream)
_TAG_TRAIN = 1
_TAG_VARMAP_BASE = 2
_TAG_DATA = 3
_TAG_INIT = 4
_TAG_ELBO_TRACE = 5


class ConfigError(Exception):
    pass


_DEFAULTS: dict[str, dict] = {
    "kl-train": dict(
        seed=0,
        optimizer="scr-go",  # sgd | adam | rmsprop | scr-go
        space="mu-sigma",  # alpha-beta | mu-sigma
        lr=0.1,
        iterations=2000,
        oracle_budget=0,  # 0 = unlimited
        target_alpha=200.0,
        target_beta=1.0,
        init_alpha=50.0,
        init_beta=50.0,
        rho=0.1,
        lipschitz_l=10.0,
        epsilon=1e-3,
        t_sub=3,
        noise=1e-4,
        n_g=1,
        n_h=1,
        inner="plain",  # plain | rmsprop
        inner_lr=1e-2,
        out="kl_train.csv",
    ),
    "variance-map-gamma": dict(
        seed=0,
        grid_n=5,
        alpha_min=7.0,
        alpha_max=13.0,
        beta_min=7.0,
        beta_max=13.0,
        target_alpha=10.0,
        target_beta=10.0,
        replicates=1000,
        out="variance_map_gamma.csv",
    ),
    "variance-map-nb": dict(
        seed=0,
        grid_n=5,
        r_min=7.0,
        r_max=13.0,
        p_min=0.35,
        p_max=0.65,
        target_r=10.0,
        target_p=0.5,
        replicates=1000,
        out="variance_map_nb.csv",
    ),
    "pfa-vi": dict(
        seed=0,
        data="",  # path to a count CSV; empty = synthetic
        n_docs=50,
        n_words=30,
        n_topics=20,
        alpha0=1.0,
        beta0=1.0,
        optimizer="scr-go",  # adam | scr-go
        lr=0.1,  # Adam lr on variational params
        theta_lr=0.1,  # RMSprop lr on topic logits, both arms
        oracle_budget=6000,
        rho=0.1,
        lipschitz_l=10.0,
        epsilon=1e-3,
        t_sub=5,
        noise=0.01,
        inner="rmsprop",
        inner_lr=1e-2,
        smooth_window=10,
        out="pfa_vi.csv",
    ),
    "gen-data": dict(
        seed=0,
        n_docs=50,
        n_words=30,
        n_topics=20,
        out="counts.csv",
    ),
    "selfcheck": dict(seed=0),
}


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError as exc:  # pragma: no cover - guarded by validation
            raise AttributeError(name) from exc


def _coerce(key: str, raw: str, template) -> object:
    try:
        if isinstance(template, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(template, int) and not isinstance(template, bool):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for {key}: {raw!r}") from exc


def build_config(
    experiment: str,
    config_path: str | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> ExperimentConfig:
    if experiment not in _DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    values = dict(_DEFAULTS[experiment])

    def _apply(key: str, raw: str) -> None:
        if key == "experiment":
            if raw != experiment:
                raise ConfigError(
                    f"config is for experiment {raw!r}, running {experiment!r}"
                )
            return
        if key not in values:
            raise ConfigError(f"unknown config key {key!r} for {experiment}")
        values[key] = _coerce(key, raw, values[key])

    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                for ln, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{config_path}:{ln}: expected key=value")
                    key, _, raw = line.partition("=")
                    _apply(key.strip(), raw.strip())
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        _apply(key.strip(), raw.strip())
    if seed is not None:
        values["seed"] = int(seed)
    if out is not None and "out" in values:
        values["out"] = os.path.join(out, os.path.basename(values["out"]))
    return ExperimentConfig(experiment=experiment, values=values)


# ----------------------------------------------------------------------
# CSV output.


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SCHEMA_LINE + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _trace_rows(trace: list[optimizers.TrainRecord]) -> tuple[list[str], list[list]]:
    dim = trace[0].params.shape[0] if trace else 0
    header = ["iteration", "oracle_calls", "objective"] + [
        f"param_{j}" for j in range(dim)
    ]
    rows = [
        [rec.iteration, rec.oracle_calls, rec.objective, *rec.params.tolist()]
        for rec in trace
    ]
    return header, rows


# ----------------------------------------------------------------------
# kl-train.


def run_kl_train(cfg: ExperimentConfig) -> None:
    target = nodes.GammaParams(cfg.target_alpha, cfg.target_beta)
    problem = models.GammaKlProblem(target, cfg.space)
    raw0 = problem.raw_from_params(nodes.GammaParams(cfg.init_alpha, cfg.init_beta))
    rng = RngStream(cfg.seed, _TAG_TRAIN)
    budget = cfg.oracle_budget or None
    if cfg.optimizer in ("sgd", "adam", "rmsprop"):
        hyper = optimizers.FirstOrderHyper(lr=cfg.lr)
        _, trace = optimizers.first_order_minimize(
            problem,
            raw0,
            cfg.optimizer,
            hyper,
            rng,
            max_iterations=cfg.iterations,
            oracle_budget=budget,
            n_g=cfg.n_g,
        )
    elif cfg.optimizer == "scr-go":
        scr = optimizers.ScrConfig(
            rho=cfg.rho,
            lipschitz_l=cfg.lipschitz_l,
            epsilon=cfg.epsilon,
            t_sub=cfg.t_sub,
            perturb_sigma=cfg.noise,
            n_g=cfg.n_g,
            n_h=cfg.n_h,
            inner=cfg.inner,
            inner_lr=cfg.inner_lr,
        )
        _, trace = optimizers.scr_minimize(
            problem,
            raw0,
            scr,
            rng,
            max_iterations=cfg.iterations,
            oracle_budget=budget,
        )
    else:
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")
    header, rows = _trace_rows(trace)
    write_csv(cfg.out, header, rows)


# ----------------------------------------------------------------------
# variance maps.


def run_variance_map_gamma(cfg: ExperimentConfig) -> None:
    target = nodes.GammaParams(cfg.target_alpha, cfg.target_beta)
    obj = models.gamma_kl_objective(target)
    node = nodes.GammaNode()
    alphas = np.linspace(cfg.alpha_min, cfg.alpha_max, cfg.grid_n)
    betas = np.linspace(cfg.beta_min, cfg.beta_max, cfg.grid_n)
    grid = [(float(a), float(b)) for a in alphas for b in betas]
    root = RngStream(cfg.seed, _TAG_VARMAP_BASE)
    point_index = {pt: i for i, pt in enumerate(grid)}

    def _estimate(tag_id: int, hess_fn):
        def fn(point, i):
            stream = root.child(point_index[point]).child(tag_id)
            return hess_fn(np.asarray(point), stream.child(i))

        return fn

    estimate_fns = {
        "go": _estimate(
            0, lambda c, s: est.go_hessian(node, obj, c, 1, s).matrix
        ),
        "log-trick": _estimate(
            1, lambda c, s: est.log_trick_hessian(node, obj, c, 1, s).matrix
        ),
    }

    def truth(point):
        return models.analytic_gamma_kl(nodes.GammaParams(*point), target)[2]

    rows = oracles.variance_map(grid, estimate_fns, truth, cfg.replicates)
    write_csv(
        cfg.out,
        ["alpha", "beta", "estimator", "median_error", "mean_error", "replicates"],
        [[*r.point, r.estimator, r.median_error, r.mean_error, r.replicates] for r in rows],
    )


def run_variance_map_nb(cfg: ExperimentConfig) -> None:
    target = nodes.NbParams(cfg.target_r, cfg.target_p)
    problem = models.NbKlProblem(target)
    node = problem.node
    obj = problem.obj
    rs = np.linspace(cfg.r_min, cfg.r_max, cfg.grid_n)
    ps = np.linspace(cfg.p_min, cfg.p_max, cfg.grid_n)
    grid = [(float(r), float(p)) for r in rs for p in ps]
    root = RngStream(cfg.seed, _TAG_VARMAP_BASE)
    point_index = {pt: i for i, pt in enumerate(grid)}
    truth_cache = {
        pt: problem.truncated_truth(nodes.NbParams(*pt))[2] for pt in grid
    }

    def _estimate(tag_id: int, hess_fn):
        def fn(point, i):
            stream = root.child(point_index[point]).child(tag_id)
            return hess_fn(np.asarray(point), stream.child(i))

        return fn

    estimate_fns = {
        "go": _estimate(
            0,
            lambda c, s: est.go_discrete(node, obj, c, 1, s, order="hessian").matrix,
        ),
        "log-trick": _estimate(
            1, lambda c, s: est.log_trick_hessian(node, obj, c, 1, s).matrix
        ),
    }
    rows = oracles.variance_map(grid, estimate_fns, lambda pt: truth_cache[pt], cfg.replicates)
    write_csv(
        cfg.out,
        ["r", "p", "estimator", "median_error", "mean_error", "replicates"],
        [[*r.point, r.estimator, r.median_error, r.mean_error, r.replicates] for r in rows],
    )


# ----------------------------------------------------------------------
# synthetic count data.


def generate_synthetic_counts(
    n_words: int, n_docs: int, n_topics: int, seed: int
) -> np.ndarray:
    """Counts from the factor model itself: columns of W are normalized
    unit gammas (symmetric Dirichlet proxy), z ~ Gam(1,1), x ~ Pois(Wz)."""
    if n_words < 1 or n_docs < 1 or n_topics < 1:
        raise ConfigError("gen-data dimensions must be positive")
    gen = RngStream(seed, _TAG_DATA).generator()
    W = np.empty((n_words, n_topics))
    for k in range(n_topics):
        for v in range(n_words):
            W[v, k] = gamma_sample(1.0, 1.0, gen)
        W[:, k] /= W[:, k].sum()
    X = np.empty((n_docs, n_words), dtype=np.int64)
    for i in range(n_docs):
        z = np.array([gamma_sample(1.0, 1.0, gen) for _ in range(n_topics)])
        lam = W @ z
        X[i] = [poisson_sample(float(l), gen) for l in lam]
    return X


def run_gen_data(cfg: ExperimentConfig) -> None:
    X = generate_synthetic_counts(cfg.n_words, cfg.n_docs, cfg.n_topics, cfg.seed)
    header = [f"x{v}" for v in range(cfg.n_words)]
    with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in X:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
    sidecar = cfg.out + ".provenance.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "seed": cfg.seed,
                "n_docs": cfg.n_docs,
                "n_words": cfg.n_words,
                "n_topics": cfg.n_topics,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


# ----------------------------------------------------------------------
# PFA mean-field VI.


def run_pfa_vi(cfg: ExperimentConfig) -> list[optimizers.TrainRecord]:
    if cfg.data:
        X = models.load_count_csv(cfg.data)
    else:
        X = generate_synthetic_counts(cfg.n_words, cfg.n_docs, cfg.n_topics, cfg.seed)
    model = models.PfaModel(
        X,
        n_topics=cfg.n_topics,
        alpha0=cfg.alpha0,
        beta0=cfg.beta0,
        init_rng=RngStream(cfg.seed, _TAG_INIT),
    )
    N = model.N
    dim = N * 2 * model.K
    root = RngStream(cfg.seed, _TAG_TRAIN)
    theta_state = optimizers.FirstOrderState(params=model.W_logits.reshape(-1))
    theta_hyper = optimizers.FirstOrderHyper(lr=cfg.theta_lr)
    phi_state = optimizers.FirstOrderState(params=model.phis.reshape(-1))
    phi_hyper = optimizers.FirstOrderHyper(lr=cfg.lr)
    scr = optimizers.ScrConfig(
        rho=cfg.rho,
        lipschitz_l=cfg.lipschitz_l,
        epsilon=cfg.epsilon,
        t_sub=cfg.t_sub,
        perturb_sigma=cfg.noise,
        n_g=N,
        n_h=N,
        inner=cfg.inner,
        inner_lr=cfg.inner_lr,
    )
    per_iter_calls = N if cfg.optimizer == "adam" else N + N * cfg.t_sub
    budget = cfg.oracle_budget
    trace: list[optimizers.TrainRecord] = []
    calls = 0
    t = 0
    stop = False
    while calls < budget and not stop:
        it_rng = root.child(t)
        grads, elbo, gl = model.phi_gradients(it_rng.child(0))
        if cfg.optimizer == "adam":
            phi_state.params = model.phis.reshape(-1)
            new_phis, phi_state = optimizers.first_order_step(
                "adam", -grads.reshape(-1) / N, phi_state, phi_hyper
            )
            model.phis = new_phis.reshape(N, -1)
        elif cfg.optimizer == "scr-go":
            blocks = model.phi_hessian_blocks(it_rng.child(1))

            def hvp(v, blocks=blocks):
                out = np.empty_like(v)
                w = v.reshape(N, -1)
                o = out.reshape(N, -1)
                for i, B in enumerate(blocks):
                    o[i] = -(B @ w[i]) / N
                return out

            g_stack = -grads.reshape(-1) / N
            delta, decrease = optimizers.cubic_subsolver(
                g_stack, hvp, scr, it_rng.child(2)
            )
            if decrease > -math.sqrt(scr.epsilon**3 / scr.rho) / 100.0:
                delta = optimizers.cubic_finalsolver(g_stack, hvp, scr)
                stop = True
            model.phis = model.phis + delta.reshape(N, -1)
        else:
            raise ConfigError(f"unknown pfa optimizer {cfg.optimizer!r}")
        # topic update: same RMSprop rule in both arms, from the same draws
        theta_state.params = model.W_logits.reshape(-1)
        new_logits, theta_state = optimizers.first_order_step(
            "rmsprop", -gl.reshape(-1), theta_state, theta_hyper
        )
        model.W_logits = new_logits.reshape(model.V, model.K)
        calls += per_iter_calls
        t += 1
        trace.append(
            optimizers.TrainRecord(
                iteration=t,
                oracle_calls=calls,
                objective=elbo,
                params=np.empty(0),
            )
        )
    smoothed = _smooth([r.objective for r in trace], cfg.smooth_window)
    rows = [
        [r.iteration, r.oracle_calls, r.objective, s]
        for r, s in zip(trace, smoothed)
    ]
    write_csv(cfg.out, ["iteration", "oracle_calls", "elbo", "elbo_smoothed"], rows)
    return trace


def _smooth(values: list[float], window: int) -> list[float]:
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(values[lo : i + 1])))
    return out


# ----------------------------------------------------------------------
# selfcheck: oracle-consistency suite.


def run_selfcheck(cfg: ExperimentConfig) -> int:
    checks: list[tuple[str, bool]] = []

    def check(name: str, fn) -> None:
        try:
            ok = bool(fn())
        except Exception as exc:  # noqa: BLE001 - report, do not crash the suite
            print(f"FAIL {name}: {exc}")
            checks.append((name, False))
            return
        print(("PASS" if ok else "FAIL") + f" {name}")
        checks.append((name, ok))

    check(
        "pfq 1F1(1;2;1) = e - 1",
        lambda: abs(float(xp.pfq([1.0], [2.0], 1.0).value) - (math.e - 1.0)) < 1e-14,
    )
    check(
        "inc_gamma P(1, y) = 1 - exp(-y)",
        lambda: abs(float(xp.inc_gamma(1.0, 2.5, "regularized")) - (1 - math.exp(-2.5)))
        < 1e-14,
    )
    check(
        "inc_gamma complement",
        lambda: abs(
            float(
                xp.inc_gamma(7.5, 3.0, "lower")
                + xp.inc_gamma(7.5, 3.0, "upper")
                - xp.gamma_fn(7.5)
            )
        )
        < 1e-10 * float(xp.gamma_fn(7.5)),
    )
    check(
        "reg_inc_beta I_0.5(a, a) = 0.5",
        lambda: abs(float(xp.reg_inc_beta(0.5, 4.0, 4.0)) - 0.5) < 1e-14,
    )
    check(
        "digamma(1) = -EulerGamma",
        lambda: abs(float(xp.digamma_polygamma(0, 1.0)) + 0.5772156649015329) < 1e-14,
    )
    check(
        "trigamma(1) = pi^2/6",
        lambda: abs(float(xp.digamma_polygamma(1, 1.0)) - math.pi**2 / 6) < 1e-14,
    )

    def _pack_fd() -> bool:
        a, y = 10.0, 10.0
        pk = nodes.gamma_unit_nabla_pack(a, y)
        h = y * 1e-7
        fd = (
            nodes.gamma_unit_nabla_pack(a, y + h, order=1).nabla[0]
            - nodes.gamma_unit_nabla_pack(a, y - h, order=1).nabla[0]
        ) / (2 * h)
        return abs(pk.dnabla_dy[0] - fd) < 1e-6 * abs(fd)

    check("gamma pack dg/dy matches finite difference", _pack_fd)

    def _kl_cases() -> bool:
        q = nodes.GammaParams(3.0, 4.0)
        v0, _, _ = models.analytic_gamma_kl(q, q)
        # shape/scale (1,1) vs (2,1): KL = EulerGamma
        v1, _, _ = models.analytic_gamma_kl(
            nodes.GammaParams(1.0, 1.0), nodes.GammaParams(2.0, 1.0)
        )
        return abs(v0) < 1e-12 and abs(v1 - 0.5772156649015329) < 1e-10

    check("closed-form gamma KL identities", _kl_cases)

    def _nb_gr() -> bool:
        pk = nodes.nb_nabla_pack(nodes.NbParams(3.0, 0.4), 2)
        h = 1e-7
        cdf = lambda r: float(xp.reg_inc_beta(0.6, r, 3.0, dps=60))
        dcdf = (cdf(3.0 + h) - cdf(3.0 - h)) / (2 * h)
        pmf = math.exp(oracles.nb_logpmf_derivs_ref(3.0, 0.4, 2)[0])
        return abs(pk.nabla[0] + dcdf / pmf) < 1e-5 * abs(pk.nabla[0])

    check("NB g_r matches CDF finite difference", _nb_gr)

    def _sampler_mean() -> bool:
        gen = RngStream(cfg.seed, 77).generator()
        draws = [gamma_sample(1.0, 1.0, gen) for _ in range(100_000)]
        return abs(float(np.mean(draws)) - 1.0) < 0.01

    check("gamma sampler mean", _sampler_mean)

    def _cauchy() -> bool:
        c = optimizers.ScrConfig(rho=2.0, lipschitz_l=1e-6, epsilon=1e-3, t_sub=1)
        delta, m = optimizers.cubic_subsolver(
            np.array([1.0, 0.0]), lambda v: np.zeros(2), c, RngStream(0)
        )
        return (
            abs(delta[0] + 1.0) < 1e-12
            and abs(delta[1]) < 1e-12
            and abs(m + 2.0 / 3.0) < 1e-12
        )

    check("cubic subsolver Cauchy step", _cauchy)

    def _delta_exact() -> bool:
        def vf(params):
            g = params[0]
            return np.array([g * g]), np.array([[2 * g]]), np.array([[[2.0]]])

        dn = nodes.DeltaNode(vf, 1, 1)
        obj = est.ObjectiveOracle(
            f=lambda y, c: float(y[0] ** 2),
            df_dy=lambda y, c: np.array([2 * y[0]]),
            d2f_dy2=lambda y, c: np.array([[2.0]]),
        )
        h = est.go_hessian(dn, obj, np.array([1.3]), 3, RngStream(1))
        return abs(h.matrix[0, 0] - 12 * 1.3**2) < 1e-12

    check("delta-node reduction exact", _delta_exact)

    def _truncated_consistency() -> bool:
        prob = models.NbKlProblem(nodes.NbParams(10.0, 0.5))
        q = nodes.NbParams(9.0, 0.45)
        _, _, h1 = prob.truncated_truth(q, tail_tol=1e-10)
        _, _, h2 = prob.truncated_truth(q, tail_tol=1e-14)
        return float(np.max(np.abs(h1 - h2))) < 1e-8

    check("truncated sum stable under tail tightening", _truncated_consistency)

    failures = sum(1 for _, ok in checks if not ok)
    print(f"selfcheck: {len(checks) - failures}/{len(checks)} passed")
    return 4 if failures else 0


# ----------------------------------------------------------------------
# entry point.


def run_experiment(cfg: ExperimentConfig) -> int:
    if cfg.experiment == "kl-train":
        run_kl_train(cfg)
    elif cfg.experiment == "variance-map-gamma":
        run_variance_map_gamma(cfg)
    elif cfg.experiment == "variance-map-nb":
        run_variance_map_nb(cfg)
    elif cfg.experiment == "pfa-vi":
        run_pfa_vi(cfg)
    elif cfg.experiment == "gen-data":
        run_gen_data(cfg)
    elif cfg.experiment == "selfcheck":
        return run_selfcheck(cfg)
    else:  # pragma: no cover - guarded by build_config
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gohess",
        description="Pathwise derivative estimators for gamma/NB stochastic "
        "graphs and a cubic-regularized optimizer: experiment runner.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    specs = {
        "variance-map": "one-sample Hessian error maps over a parameter grid",
        "kl-train": "minimize a reverse gamma KL with SGD/Adam/RMSprop/SCR-GO",
        "pfa-vi": "mean-field VI for the Poisson factor model",
        "selfcheck": "run the oracle consistency suite",
        "gen-data": "generate a synthetic count matrix CSV",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            dest="overrides",
            help="override one config key",
        )
        if name == "variance-map":
            p.add_argument(
                "--family", choices=("gamma", "nb"), default="gamma",
                help="which variance map to compute",
            )
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    env_dps = os.environ.get("GOHESS_PRECISION_DIGITS")
    if env_dps is not None:
        try:
            xp.set_working_dps(int(env_dps))
        except ValueError as exc:
            print(f"config error: bad GOHESS_PRECISION_DIGITS: {exc}", file=sys.stderr)
            return 2
    experiment = args.command
    if experiment == "variance-map":
        experiment = f"variance-map-{args.family}"
    try:
        cfg = build_config(
            experiment,
            config_path=args.config,
            overrides=args.overrides,
            seed=args.seed,
            out=args.out,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
