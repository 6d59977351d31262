import csv
import io

import numpy as np
import pytest
from scipy.optimize import minimize

from probcon import harness
from probcon.constraints import LinearConstraint, is_satisfied, lower, ordering, upper
from probcon.errors import DomainError
from probcon.estimators import regression as rg


def test_multinomial_builtin_literals():
    spec = harness.builtin_multinomial_spec()
    assert spec.true_params == pytest.approx((1 / 12, 1 / 6, 1 / 6, 1 / 4, 1 / 3), abs=0)
    assert sum(spec.true_params) == pytest.approx(1.0, abs=1e-15)
    assert spec.eta == 0.95 and spec.n_replicates == 20
    A, B = spec.scenarios["correct"], spec.scenarios["incorrect"]
    assert set(A) == {ordering(i, j, 5) for i in (0, 1, 2) for j in (3, 4)}
    assert set(B) == {ordering(j, i, 5) for i in (0, 1, 2) for j in (3, 4)}
    assert all(is_satisfied(c, spec.theta) for c in A)
    assert not any(is_satisfied(c, spec.theta) for c in B)


def test_gaussian_builtin_literals():
    spec = harness.builtin_gaussian_spec()
    assert spec.true_params == (0.0, 0.5, 1.0)
    C, D = spec.scenarios["correct"], spec.scenarios["incorrect"]
    assert C == (ordering(0, 1, 3), ordering(1, 2, 3), lower(0, 0.0, 3), upper(2, 1.0, 3))
    assert D == (ordering(1, 0, 3), ordering(2, 1, 3))
    slack = [c.b - c.a @ spec.theta for c in C]
    assert slack[2] == 0 and slack[3] == 0 and min(slack) >= 0
    assert not any(is_satisfied(c, spec.theta) for c in D)


def test_gaussian_groups_are_unit_variance_normals():
    spec = harness.replace(harness.builtin_gaussian_spec(), test_size=200_000)
    _, test = harness._draw(spec, 10, np.random.default_rng(0))
    for t, g in zip(spec.theta, test):
        assert g.mean() == pytest.approx(t, abs=0.01)
        assert g.var() == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("seed", [0, 1, 2, 99])
def test_regression_builtin(seed):
    spec = harness.builtin_regression_spec(seed)
    beta = spec.theta
    assert np.all((-1 < beta[:5]) & (beta[:5] < 0)) and np.all((0 < beta[5:]) & (beta[5:] < 1))
    E, F = spec.scenarios["correct"], spec.scenarios["incorrect"]
    assert len(E) == len(F) == 10
    assert all(is_satisfied(c, beta) for c in E)
    assert not any(is_satisfied(c, beta) for c in F[:6])
    assert harness.builtin_regression_spec(seed).true_params == spec.true_params
    assert tuple(spec.hyper["ridge_grid"]) == (0.001, 0.01, 0.1, 0.2, 0.5, 1, 2, 5, 10, 100)
    assert spec.train_sizes == (20,)


def test_noisy_regression_flips_a_seeded_subset():
    spec = harness.builtin_noisy_regression_spec(3)
    flipped = spec.hyper["flipped"]
    assert len(flipped) == 3
    E, noisy = spec.scenarios["correct"], spec.scenarios["noisy"]
    for i, (c, d) in enumerate(zip(E, noisy)):
        assert d == (c.negated() if i in flipped else c)
    assert harness.builtin_noisy_regression_spec(3).hyper["flipped"] == flipped


def small_spec(**kw):
    base = dict(family="multinomial", true_params=(0.2, 0.3, 0.5),
                scenarios={"right": [ordering(0, 2, 3)], "wrong": [ordering(2, 0, 3)]},
                train_sizes=(10, 20), n_replicates=2, seed=5, test_size=200)
    base.update(kw)
    return harness.ExperimentSpec(**base)


def test_csv_schema_and_determinism(tmp_path):
    spec = small_spec()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    rows = harness.run_experiment(spec, p1)
    harness.run_experiment(spec, p2, jobs=2)
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert "\r" not in text
    recs = list(csv.reader(io.StringIO(text)))
    assert recs[0] == ["family", "estimator", "scenario", "train_size", "replicate", "metric",
                       "value", "seed"]
    assert len(recs) - 1 == len(rows) == 2 * 2 * 2 * 4 * 2
    assert {r[5] for r in recs[1:]} == {"l2_error", "test_nll"}


def test_row_seed_reproduces_cell():
    spec = small_spec()
    rows = harness.run_experiment(spec)
    r = rows[7]
    assert r.seed == harness.cell_seed(spec.seed, spec.family, r.train_size, r.replicate)
    again = harness.run_cell(spec, r.train_size, r.replicate)
    assert r in again


def test_adding_estimators_keeps_existing_rows():
    a = harness.run_experiment(small_spec(estimators=("mle", "hard")))
    b = harness.run_experiment(small_spec(estimators=("mle", "hard", "eb")))
    assert set(a) <= set(b)


def test_mle_is_consistent_at_large_sample():
    spec = harness.replace(harness.builtin_multinomial_spec(), train_sizes=(10_000,),
                           n_replicates=3, estimators=("mle",))
    for r in harness.run_experiment(spec):
        if r.metric == "l2_error":
            assert r.value < 0.02


def _distance_to_set(theta, hard):
    n = theta.size
    cons = [{"type": "ineq", "fun": lambda t, c=c: c.b - c.a @ t} for c in hard]
    cons.append({"type": "eq", "fun": lambda t: t.sum() - 1})
    res = minimize(lambda t: np.sum((t - theta) ** 2), np.full(n, 1 / n), method="SLSQP",
                   constraints=cons, bounds=[(0, 1)] * n, options={"ftol": 1e-14})
    return float(np.sqrt(res.fun))


def test_hard_estimator_error_at_least_distance_to_wrong_set():
    spec = harness.replace(harness.builtin_multinomial_spec(), train_sizes=(10, 50),
                           n_replicates=4, estimators=("hard",), scenarios={
                               "incorrect": harness.builtin_multinomial_spec().scenarios["incorrect"]})
    dist = _distance_to_set(spec.theta, spec.scenarios["incorrect"])
    assert dist > 0.1
    for r in harness.run_experiment(spec):
        if r.metric == "l2_error":
            assert r.value >= dist - 1e-6


def test_estimator_failures_become_error_rows():
    spec = small_spec(scenarios={"impossible": [upper(0, -0.5, 3)]}, estimators=("mle", "hard"),
                      train_sizes=(10,), n_replicates=1)
    rows = harness.run_experiment(spec)
    errs = [r for r in rows if r.metric == "error"]
    assert [(r.estimator, r.value) for r in errs] == [("hard", 2.0)]
    assert any(r.estimator == "mle" and r.metric == "l2_error" for r in rows)


def test_regression_and_gaussian_cells_run():
    g = harness.replace(harness.builtin_gaussian_spec(), train_sizes=(10,), n_replicates=1)
    rows = harness.run_experiment(g)
    assert {r.estimator for r in rows} == {"mle", "hard", "map_diag", "map_full"}
    assert not [r for r in rows if r.metric == "error"]
    reg = harness.replace(harness.builtin_regression_spec(0), n_replicates=1,
                          hyper=dict(harness.builtin_regression_spec(0).hyper,
                                     sigma2_grid=[1.0], tau_grid=[0.1]))
    rows = harness.run_experiment(reg)
    assert {r.metric for r in rows} == {"l2_error", "test_mse", "test_accuracy"}


def test_spec_validation():
    with pytest.raises(DomainError):
        small_spec(n_replicates=0)
    with pytest.raises(DomainError):
        small_spec(eta=1.0)
    with pytest.raises(DomainError):
        small_spec(train_sizes=(0,))
    with pytest.raises(DomainError):
        small_spec(family="poisson")
    with pytest.raises(DomainError):
        small_spec(estimators=("ridge",))
    with pytest.raises(DomainError):
        small_spec(scenarios={"x": [ordering(0, 1, 2)]})


def test_config_round_trip(tmp_path):
    spec = small_spec()
    back = harness.spec_from_dict(harness.spec_to_dict(spec))
    assert harness.spec_to_dict(back) == harness.spec_to_dict(spec)
    over = harness.spec_from_dict({"builtin": "gaussian", "n_replicates": 3, "seed": 4})
    assert over.n_replicates == 3 and over.seed == 4 and over.family == "gaussian_means"
    with pytest.raises(DomainError):
        harness.spec_from_dict({"builtin": "gaussian", "replicas": 3})
    with pytest.raises(DomainError):
        harness.spec_from_dict({"family": "multinomial"})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DomainError):
        harness.load_spec(bad)


def test_oracle_report_agrees():
    rep = harness.oracle_report(seed=3, n_instances=10, n_samples=20_000)
    assert rep["instances"] == 10
    assert rep["mc_within_3se"] >= 0.9
    assert rep["max_edgeworth2_error"] < 0.05


def test_summarize_means():
    rows = [harness.MetricsRow("multinomial", "mle", "s", 10, r, "l2_error", v, 0)
            for r, v in enumerate([1.0, 3.0])]
    assert harness.summarize(rows) == {("s", 10, "mle"): 2.0}
