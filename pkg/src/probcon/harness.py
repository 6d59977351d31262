"""Seeded synthetic experiments comparing unconstrained, hard-constrained and
chance-constrained estimators.

A spec names a model family, the true parameter, one or more constraint
scenarios, training sizes and a replicate count.  Every (train size,
replicate) cell draws its own training and test data from a seed derived
from the spec seed, so scenarios within a cell see identical data and
adding estimators never changes existing rows.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bregman import WishartHyperprior
from .constraints import (ConstraintSet, LinearConstraint, lower, ordering,
                          upper)
from .dirichlet import DirichletHyper, prob_leq, prob_leq_montecarlo
from .errors import DomainError, InfeasibleError, ProbconError
from .estimators import gaussian_means as gm
from .estimators import multinomial as mn
from .estimators import regression as rg

__all__ = [
    "FAMILIES",
    "ExperimentSpec",
    "MetricsRow",
    "CSV_HEADER",
    "builtin_multinomial_spec",
    "builtin_gaussian_spec",
    "builtin_regression_spec",
    "builtin_noisy_regression_spec",
    "builtin_spec",
    "BUILTINS",
    "cell_seed",
    "run_cell",
    "run_experiment",
    "rows_to_csv",
    "spec_from_dict",
    "spec_to_dict",
    "oracle_report",
    "summarize",
    "load_spec",
    "with_seed",
]

FAMILIES = ("multinomial", "gaussian_means", "regression")
CSV_HEADER = ("family", "estimator", "scenario", "train_size", "replicate", "metric",
              "value", "seed")
DEFAULT_ESTIMATORS = {
    "multinomial": ("mle", "hard", "map", "eb"),
    "gaussian_means": ("mle", "hard", "map_diag", "map_full"),
    "regression": ("ridge", "hard_ridge", "map_diag", "map_full"),
}
DEFAULT_METRICS = {
    "multinomial": ("l2_error", "test_nll"),
    "gaussian_means": ("l2_error", "test_nll"),
    "regression": ("l2_error", "test_mse", "test_accuracy"),
}
# floor for test-set log-probabilities of multinomial estimates with zeros
NLL_FLOOR = 1e-10


@dataclass(frozen=True)
class ExperimentSpec:
    family: str
    true_params: tuple
    scenarios: dict
    eta: float = 0.95
    train_sizes: tuple = (10,)
    n_replicates: int = 20
    seed: int = 0
    estimators: tuple = ()
    hyper: dict = field(default_factory=dict)
    metrics: tuple = ()
    test_size: int = 1000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"family must be one of {FAMILIES}")
        if self.n_replicates < 1:
            raise DomainError("n_replicates must be >= 1")
        if not self.train_sizes or any(int(m) < 1 for m in self.train_sizes):
            raise DomainError("train sizes must be positive")
        if not 0.0 < self.eta < 1.0:
            raise DomainError("eta must lie in (0, 1)")
        if self.test_size < 1:
            raise DomainError("test_size must be positive")
        object.__setattr__(self, "true_params", tuple(float(t) for t in self.true_params))
        object.__setattr__(self, "train_sizes", tuple(int(m) for m in self.train_sizes))
        object.__setattr__(self, "seed", int(self.seed))
        if not self.estimators:
            object.__setattr__(self, "estimators", DEFAULT_ESTIMATORS[self.family])
        if not self.metrics:
            object.__setattr__(self, "metrics", DEFAULT_METRICS[self.family])
        unknown = set(self.estimators) - set(_FITTERS[self.family])
        if unknown:
            raise DomainError(f"unknown estimators for {self.family}: {sorted(unknown)}")
        n = len(self.true_params)
        scen = {}
        for name, lin in self.scenarios.items():
            lin = tuple(lin)
            if any(c.dim != n for c in lin):
                raise DomainError(f"scenario {name!r} has constraints of the wrong dimension")
            scen[str(name)] = lin
        object.__setattr__(self, "scenarios", scen)

    @property
    def theta(self) -> np.ndarray:
        return np.array(self.true_params)

    def constraint_set(self, scenario) -> ConstraintSet:
        return ConstraintSet.from_linear(self.scenarios[scenario], self.eta)


@dataclass(frozen=True)
class MetricsRow:
    family: str
    estimator: str
    scenario: str
    train_size: int
    replicate: int
    metric: str
    value: float
    seed: int

    def sort_key(self):
        return (self.family, self.scenario, self.train_size, self.replicate, self.estimator,
                self.metric)


# -- built-in specs ---------------------------------------------------------

def builtin_multinomial_spec(seed: int = 0) -> ExperimentSpec:
    n = 5
    theta = (1 / 12, 1 / 6, 1 / 6, 1 / 4, 1 / 3)
    A = [ordering(i, j, n) for i in (0, 1, 2) for j in (3, 4)]
    B = [ordering(j, i, n) for i in (0, 1, 2) for j in (3, 4)]
    return ExperimentSpec("multinomial", theta, {"correct": A, "incorrect": B}, eta=0.95,
                          train_sizes=(10, 20, 30, 50), n_replicates=20, seed=seed,
                          hyper={"alpha_box": list(mn.DEFAULT_ALPHA_BOX),
                                 "method": "edgeworth2"})


def builtin_gaussian_spec(seed: int = 0) -> ExperimentSpec:
    n = 3
    C = [ordering(0, 1, n), ordering(1, 2, n), lower(0, 0.0, n), upper(2, 1.0, n)]
    D = [ordering(1, 0, n), ordering(2, 1, n)]
    return ExperimentSpec("gaussian_means", (0.0, 0.5, 1.0), {"correct": C, "incorrect": D},
                          eta=0.95, train_sizes=(10, 20, 30, 50), n_replicates=20, seed=seed,
                          hyper={"tau": 1.0})


def _regression_sets(n=10):
    E = ([upper(i, 0.0, n) for i in (0, 2, 4)] + [lower(i, 0.0, n) for i in (5, 7, 9)]
         + [ordering(i, j, n) for i in (1, 3) for j in (6, 8)])
    F = ([lower(i, 0.0, n) for i in (0, 2, 4)] + [upper(i, 0.0, n) for i in (5, 7, 9)]
         + [ordering(j, i, n) for i in (1, 3) for j in (6, 8)])
    return E, F


def _regression_hyper():
    return {"ridge_grid": list(rg.RIDGE_GRID), "sigma2_grid": list(rg.SIGMA2_GRID),
            "tau_grid": list(rg.TAU_GRID), "folds": 1}


def _draw_beta(rng) -> tuple:
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return tuple(np.concatenate([gen.uniform(-1.0, 0.0, 5), gen.uniform(0.0, 1.0, 5)]))


def builtin_regression_spec(rng=0) -> ExperimentSpec:
    """``rng`` (seed or Generator) draws beta; an integer seed also seeds the cells."""
    E, F = _regression_sets()
    seed = rng if isinstance(rng, (int, np.integer)) else 0
    return ExperimentSpec("regression", _draw_beta(rng), {"correct": E, "incorrect": F},
                          eta=0.95, train_sizes=(20,), n_replicates=20, seed=int(seed),
                          hyper=_regression_hyper())


def builtin_noisy_regression_spec(rng=0, flip_fraction: float = 0.3) -> ExperimentSpec:
    """The correct regression set with a seeded fraction of constraints reversed."""
    if not 0.0 <= flip_fraction <= 1.0:
        raise DomainError("flip_fraction must lie in [0, 1]")
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    beta = _draw_beta(gen)
    E, _ = _regression_sets()
    k = int(round(flip_fraction * len(E)))
    flip = set(gen.choice(len(E), size=k, replace=False).tolist())
    noisy = [c.negated() if i in flip else c for i, c in enumerate(E)]
    seed = rng if isinstance(rng, (int, np.integer)) else 0
    return ExperimentSpec("regression", beta, {"correct": E, "noisy": noisy}, eta=0.95,
                          train_sizes=(20,), n_replicates=20, seed=int(seed),
                          hyper=dict(_regression_hyper(), flipped=sorted(flip)))


BUILTINS = {
    "multinomial": builtin_multinomial_spec,
    "gaussian": builtin_gaussian_spec,
    "gaussian_means": builtin_gaussian_spec,
    "regression": builtin_regression_spec,
    "regression_noisy": builtin_noisy_regression_spec,
}


def builtin_spec(name: str, seed: int = 0) -> ExperimentSpec:
    try:
        return BUILTINS[name](seed)
    except KeyError:
        raise DomainError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None


# -- data and fitting -------------------------------------------------------

def cell_seed(seed: int, family: str, train_size: int, replicate: int) -> int:
    """``seed XOR hash(family, train_size, replicate)`` as an unsigned 64-bit int."""
    key = f"{family}|{train_size}|{replicate}".encode()
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    return (int(seed) ^ h) & 0xFFFFFFFFFFFFFFFF


def _draw(spec: ExperimentSpec, m: int, rng: np.random.Generator):
    theta = spec.theta
    n = theta.size
    if spec.family == "multinomial":
        p = theta / theta.sum()
        train = np.bincount(rng.choice(n, size=m, p=p), minlength=n).astype(float)
        test = np.bincount(rng.choice(n, size=spec.test_size, p=p), minlength=n).astype(float)
        return train, test
    if spec.family == "gaussian_means":
        train = gm.GaussianMeansData([rng.normal(t, 1.0, size=m) for t in theta])
        test = [rng.normal(t, 1.0, size=spec.test_size) for t in theta]
        return train, test
    X = rng.standard_normal((m, n))
    y = X @ theta + rng.standard_normal(m)
    Xt = rng.standard_normal((spec.test_size, n))
    yt = Xt @ theta + rng.standard_normal(spec.test_size)
    return rg.RegressionData(X, y), (Xt, yt)


def _box(spec):
    return tuple(spec.hyper.get("alpha_box", mn.DEFAULT_ALPHA_BOX))


def _fit_mult(name, train, spec, scenario):
    method = spec.hyper.get("method", "edgeworth2")
    if name == "mle":
        return mn.mle_multinomial(train)
    if name == "hard":
        return mn.constrained_mle_multinomial(train, spec.scenarios[scenario])
    cs = spec.constraint_set(scenario)
    if name == "map":
        return mn.map_dirichlet_multinomial(train, cs, alpha_box=_box(spec), method=method).theta
    return mn.eb_dirichlet_multinomial(train, cs, alpha_box=_box(spec), method=method).theta


def _fit_gauss(name, train, spec, scenario):
    if name == "mle":
        return gm.mle_gaussian_means(train)
    if name == "hard":
        return gm.constrained_mle_gaussian_means(train, spec.scenarios[scenario])
    prior = WishartHyperprior.scaled_identity(float(spec.hyper.get("tau", 1.0)), train.dim)
    mode = "diagonal" if name == "map_diag" else "full"
    return gm.map_gaussian_means(train, spec.constraint_set(scenario), prior, mode).theta


def _fit_reg(name, train, spec, scenario):
    h = spec.hyper
    folds = int(h.get("folds", 1))
    if name == "ridge":
        return rg.select_ridge(train, h.get("ridge_grid", rg.RIDGE_GRID), folds=folds)[0]
    if name == "hard_ridge":
        return rg.select_ridge(train, h.get("ridge_grid", rg.RIDGE_GRID),
                               hard=spec.scenarios[scenario], folds=folds)[0]
    mode = "diagonal" if name == "map_diag" else "full"
    return rg.select_map(train, spec.constraint_set(scenario), mode,
                         h.get("sigma2_grid", rg.SIGMA2_GRID), h.get("tau_grid", rg.TAU_GRID),
                         folds=folds).theta


_FITTERS = {
    "multinomial": {"mle": _fit_mult, "hard": _fit_mult, "map": _fit_mult, "eb": _fit_mult},
    "gaussian_means": {k: _fit_gauss for k in ("mle", "hard", "map_diag", "map_full")},
    "regression": {k: _fit_reg for k in ("ridge", "hard_ridge", "map_diag", "map_full")},
}

# a fitter that ignores the constraints gives the same answer in every scenario
_SCENARIO_FREE = {"mle", "ridge"}


def _metrics(spec, theta, test):
    out = {}
    err = float(np.linalg.norm(theta - spec.theta))
    for name in spec.metrics:
        if name == "l2_error":
            out[name] = err
        elif name == "test_nll" and spec.family == "multinomial":
            logp = np.log(np.maximum(theta, NLL_FLOOR))
            out[name] = float(-(test @ logp) / test.sum())
        elif name == "test_nll" and spec.family == "gaussian_means":
            out[name] = gm.gaussian_means_nll(theta, test)
        elif name == "test_mse" and spec.family == "regression":
            out[name] = rg.mse(theta, *test)
        elif name == "test_accuracy" and spec.family == "regression":
            out[name] = rg.rounded_accuracy(theta, *test)
        else:
            raise DomainError(f"metric {name!r} is not defined for {spec.family}")
    return out


def _error_code(exc) -> int:
    if isinstance(exc, InfeasibleError):
        return 2
    if isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)):
        return 3
    return 1


def run_cell(spec: ExperimentSpec, train_size: int, replicate: int) -> list:
    """All rows for one (train size, replicate) cell."""
    seed = cell_seed(spec.seed, spec.family, train_size, replicate)
    rng = np.random.default_rng(seed)
    train, test = _draw(spec, train_size, rng)
    rows = []
    cache = {}
    for scenario in spec.scenarios:
        for est in spec.estimators:
            fit = _FITTERS[spec.family][est]
            try:
                if est in _SCENARIO_FREE:
                    if est not in cache:
                        cache[est] = fit(est, train, spec, scenario)
                    theta = cache[est]
                else:
                    theta = fit(est, train, spec, scenario)
                values = _metrics(spec, np.asarray(theta, dtype=float), test)
                bad = [k for k, v in values.items() if not math.isfinite(v)]
                if bad:
                    raise ArithmeticError(f"non-finite metric {bad}")
            except (ProbconError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
                values = {"error": float(_error_code(exc))}
            for metric, value in values.items():
                rows.append(MetricsRow(spec.family, est, scenario, train_size, replicate,
                                       metric, float(value), seed))
    return rows


def _cell_job(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec, out_path=None, jobs: int = 1) -> list:
    """Run every cell, sort the rows deterministically and optionally write CSV."""
    cells = [(spec, m, r) for m in spec.train_sizes for r in range(spec.n_replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_cell_job, cells))
    else:
        chunks = [run_cell(*c) for c in cells]
    rows = sorted((r for chunk in chunks for r in chunk), key=MetricsRow.sort_key)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(rows_to_csv(rows))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.family, r.estimator, r.scenario, r.train_size, r.replicate, r.metric,
                    "%.10g" % r.value, r.seed])
    return buf.getvalue()


# -- config round trip ------------------------------------------------------

_SPEC_KEYS = {"family", "true_params", "scenarios", "eta", "train_sizes", "n_replicates",
              "seed", "estimators", "hyper", "metrics", "test_size", "builtin"}


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "family": spec.family,
        "true_params": list(spec.true_params),
        "scenarios": {k: [{"a": c.a.tolist(), "b": c.b} for c in v]
                      for k, v in spec.scenarios.items()},
        "eta": spec.eta,
        "train_sizes": list(spec.train_sizes),
        "n_replicates": spec.n_replicates,
        "seed": spec.seed,
        "estimators": list(spec.estimators),
        "hyper": dict(spec.hyper),
        "metrics": list(spec.metrics),
        "test_size": spec.test_size,
    }


def spec_from_dict(d: dict) -> ExperimentSpec:
    """Build a spec from a config mapping.

    ``{"builtin": name, ...}`` starts from a built-in spec and overrides the
    listed fields.  Scenario constraints are ``{"a": [...], "b": x}`` records.
    """
    if not isinstance(d, dict):
        raise DomainError("config must be a mapping")
    extra = set(d) - _SPEC_KEYS
    if extra:
        raise DomainError(f"unknown config keys: {sorted(extra)}")
    d = dict(d)
    if "builtin" in d:
        base = spec_to_dict(builtin_spec(d.pop("builtin"), int(d.get("seed", 0))))
        base.update(d)
        d = base
    try:
        scenarios = {name: [LinearConstraint(rec["a"], rec["b"]) for rec in recs]
                     for name, recs in d["scenarios"].items()}
        return ExperimentSpec(
            family=d["family"], true_params=tuple(d["true_params"]), scenarios=scenarios,
            eta=float(d.get("eta", 0.95)), train_sizes=tuple(d.get("train_sizes", (10,))),
            n_replicates=int(d.get("n_replicates", 20)), seed=int(d.get("seed", 0)),
            estimators=tuple(d.get("estimators", ())), hyper=dict(d.get("hyper", {})),
            metrics=tuple(d.get("metrics", ())), test_size=int(d.get("test_size", 1000)))
    except (KeyError, TypeError, AttributeError) as exc:
        raise DomainError(f"malformed experiment config: {exc!r}") from None


def load_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"config is not valid JSON: {exc}") from None
    return spec_from_dict(data)


def with_seed(spec: ExperimentSpec, seed: int) -> ExperimentSpec:
    return replace(spec, seed=int(seed))


# -- oracle cross-checks ------------------------------------------------------

def oracle_report(seed: int = 0, n_instances: int = 50, n_samples: int = 100_000,
                  max_dim: int = 6) -> dict:
    """Compare Edgeworth, quadrature and Monte Carlo on random Dirichlet instances."""
    gen = np.random.default_rng(seed)
    mc_ok = ew_ok = 0
    worst_ew = 0.0
    cases = []
    for i in range(n_instances):
        n = int(gen.integers(2, max_dim + 1))
        alpha = gen.uniform(0.5, 10.0, n)
        a = gen.uniform(-1.0, 1.0, n)
        b = float(gen.uniform(a.min(), a.max()))
        c = LinearConstraint(a, b)
        hyper = DirichletHyper(alpha)
        exact = prob_leq(hyper, c, "exact")
        ew = prob_leq(hyper, c, "edgeworth2")
        mc, se = prob_leq_montecarlo(hyper, c, n_samples, np.random.default_rng([seed, i]))
        mc_hit = abs(exact - mc) <= 3.0 * max(se, 1.0 / n_samples)
        ew_hit = abs(exact - ew) <= 0.02
        mc_ok += mc_hit
        ew_ok += ew_hit
        worst_ew = max(worst_ew, abs(exact - ew))
        cases.append({"n": n, "exact": exact, "edgeworth2": ew, "mc": mc, "mc_se": se})
    return {
        "instances": n_instances,
        "mc_within_3se": mc_ok / n_instances,
        "edgeworth2_within_0.02": ew_ok / n_instances,
        "max_edgeworth2_error": worst_ew,
        "cases": cases,
    }


def summarize(rows, metric: str = "l2_error") -> dict:
    """Mean ``metric`` per (scenario, train size, estimator); error rows are skipped."""
    acc = {}
    for r in rows:
        if r.metric != metric:
            continue
        acc.setdefault((r.scenario, r.train_size, r.estimator), []).append(r.value)
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}
