import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from oracles import alpha_grid, beta_ordering_prob, map_grid_optimum, polya
from probcon.bregman import WishartHyperprior
from probcon.constraints import (ConstraintSet, LinearConstraint, ProbabilisticConstraint, chain,
                                 is_satisfied, lower, ordering, upper)
from probcon.errors import DecompositionError, DomainError, InfeasibleError
from probcon.estimators import gaussian_means as gm
from probcon.estimators import multinomial as mn
from probcon.estimators import regression as rg
from probcon.estimators._ipm import metric_projection
from probcon.gaussian import soc_margin


def nondecreasing(trace, slack=1e-9):
    return all(b >= a - slack * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))


# -- multinomial -------------------------------------------------------------------

@pytest.mark.parametrize("counts,expected", [
    ((3, 7), (0.3, 0.7)), ((0, 5), (0, 1)), ((1, 1, 2), (0.25, 0.25, 0.5))])
def test_mle_multinomial(counts, expected):
    np.testing.assert_allclose(mn.mle_multinomial(counts), expected)


def test_mle_needs_data():
    with pytest.raises(DomainError):
        mn.mle_multinomial([0, 0])


def test_constrained_mle_active_and_inactive():
    np.testing.assert_allclose(mn.constrained_mle_multinomial([7, 3], [ordering(0, 1, 2)]),
                               [0.5, 0.5], atol=1e-6)
    np.testing.assert_allclose(mn.constrained_mle_multinomial([3, 7], [ordering(0, 1, 2)]),
                               [0.3, 0.7], atol=1e-6)


def test_constrained_mle_against_simplex_grid():
    counts = np.array([5.0, 3.0, 2.0])
    hard = chain([0, 1, 2], 3)
    got = mn.constrained_mle_multinomial(counts, hard)
    k = 1000
    i, j = np.meshgrid(np.arange(1, k), np.arange(1, k), indexing="ij")
    mask = i + j < k
    T = np.stack([i[mask], j[mask], k - i[mask] - j[mask]], axis=1) / k
    ok = (T[:, 0] <= T[:, 1]) & (T[:, 1] <= T[:, 2])
    T = T[ok]
    best = T[np.argmax(np.log(T) @ counts)]
    np.testing.assert_allclose(got, best, atol=2e-3)
    assert all(is_satisfied(c, got) or abs(c.b - c.a @ got) <= 1e-10 for c in hard)


def test_constrained_mle_infeasible():
    with pytest.raises(InfeasibleError):
        mn.constrained_mle_multinomial([1, 1], [upper(0, -0.1, 2)])


def test_map_fixed_alpha_mode():
    res = mn.map_dirichlet_multinomial([3, 7], fixed_alpha=[2, 2])
    np.testing.assert_allclose(res.theta, [1 / 3, 2 / 3], atol=1e-12)


def test_map_clamps_negative_mode_components():
    res = mn.map_dirichlet_multinomial([0, 4], fixed_alpha=[0.5, 2])
    assert res.theta[0] > 0 and res.theta.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("method", ["edgeworth2", "exact"])
def test_map_two_outcomes_against_grid(method):
    cs = ConstraintSet.from_linear([ordering(0, 1, 2)], 0.95)
    A = alpha_grid(1.0, 20.0, 0.25)
    best = map_grid_optimum([2, 8], A, beta_ordering_prob(A) >= 0.95)
    res = mn.map_dirichlet_multinomial([2, 8], cs, alpha_box=(1.0, 20.0), method=method)
    assert abs(res.objective - best) <= 1e-2
    assert nondecreasing(res.objective_trace)
    assert res.converged and min(res.feasibility) >= -1e-6


def test_map_contradicting_constraint_with_much_data():
    cs = ConstraintSet.from_linear([ordering(1, 0, 2)], 0.95)
    for m in (200, 1000):
        counts = np.array([0.2 * m, 0.8 * m])
        res = mn.map_dirichlet_multinomial(counts, cs, method="exact")
        assert abs(res.feasibility[0]) <= 1e-4  # on the boundary of the feasible set
        assert np.abs(res.theta - counts / m).sum() <= 0.1


def test_map_reports_infeasible_box():
    # P(theta_1 <= theta_2) >= 0.999999 needs alpha_2 far above what the box allows
    cs = ConstraintSet.from_linear([ordering(0, 1, 2)], 0.999999)
    with pytest.raises(InfeasibleError):
        mn.map_dirichlet_multinomial([2, 8], cs, alpha_box=(1.0, 2.0), method="exact")


def test_eb_symmetric_single_replicate():
    res = mn.eb_dirichlet_multinomial([[1, 1]], alpha_init=[2.0, 2.0])
    assert res.hyper.alpha[0] == pytest.approx(res.hyper.alpha[1], abs=1e-6)


def test_eb_against_grid():
    R = [(3, 7), (2, 8), (4, 6)]
    A = alpha_grid(0.1, 50.0, 0.25)
    best = float(polya(A, R).max())
    res = mn.eb_dirichlet_multinomial(R, alpha_box=(0.1, 50.0), alpha_init=[1.0, 1.0])
    assert abs(res.objective - best) <= 1e-2
    assert res.objective == pytest.approx(mn.polya_loglik(res.hyper.alpha, R))


def test_eb_constrained_is_feasible_and_lower():
    R = [(3, 7), (2, 8), (4, 6)]
    free = mn.eb_dirichlet_multinomial(R, alpha_init=[1.0, 1.0])
    cs = ConstraintSet.from_linear([ordering(0, 1, 2)], 0.95)
    res = mn.eb_dirichlet_multinomial(R, cs, method="exact")
    assert min(res.feasibility) >= 0
    assert res.objective <= free.objective + 1e-9
    assert nondecreasing(res.objective_trace)
    pooled = np.sum(R, axis=0) + res.hyper.alpha
    np.testing.assert_allclose(res.theta, pooled / pooled.sum())


def test_polya_matches_direct_sum():
    # Dirichlet-multinomial sequence probability for counts (1, 1) under alpha = (1, 2):
    # P = B(alpha + c) / B(alpha) = Gamma(3) Gamma(2) Gamma(3) / (Gamma(1) Gamma(2) Gamma(5))
    assert np.exp(mn.polya_loglik([1, 2], [[1, 1]])) == pytest.approx(2 * 2 / 24)


def test_map_traces_are_monotone_on_random_problems():
    gen = np.random.default_rng(21)
    n = 4
    lin = [ordering(0, 3, n), ordering(1, 2, n)]
    cs = ConstraintSet.from_linear(lin, 0.9)
    for _ in range(5):
        counts = gen.integers(0, 12, n)
        res = mn.map_dirichlet_multinomial(counts, cs)
        assert nondecreasing(res.objective_trace)
        if res.converged:
            assert min(res.feasibility) >= -1e-6


# -- Gaussian means -----------------------------------------------------------------

def vacuous(n):
    return ConstraintSet([ProbabilisticConstraint(upper(0, 1e6, n), 0.5000001)])


def test_gaussian_means_single_group_converges_to_sample_mean():
    gen = np.random.default_rng(3)
    d = gm.GaussianMeansData([gen.normal(0.7, 1.0, 500)])
    for mode in ("diagonal", "full"):
        res = gm.map_gaussian_means(d, vacuous(1), WishartHyperprior.scaled_identity(1.0, 1), mode)
        assert abs(res.theta[0] - d.means[0]) <= 0.05


def test_gaussian_means_hard_projection():
    gen = np.random.default_rng(4)
    d = gm.GaussianMeansData([gen.normal(t, 1.0, 10) for t in (0.6, 0.4, 1.2)])
    hard = [ordering(0, 1, 3), ordering(1, 2, 3), lower(0, 0.0, 3), upper(2, 1.0, 3)]
    got = gm.constrained_mle_gaussian_means(d, hard)
    assert all(c.b - c.a @ got >= -1e-10 for c in hard)
    # weighted least squares oracle
    n = d.sizes
    ref = minimize(lambda t: 0.5 * np.sum(n * (t - d.means) ** 2), d.means, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda t, c=c: c.b - c.a @ t} for c in hard],
                   options={"ftol": 1e-14})
    np.testing.assert_allclose(got, ref.x, atol=1e-6)


def test_gaussian_means_inactive_constraints_are_ignored():
    d = gm.GaussianMeansData([[0.1, 0.2], [0.9, 1.1]])
    np.testing.assert_allclose(gm.constrained_mle_gaussian_means(d, [ordering(0, 1, 2)]), d.means)


@pytest.mark.parametrize("mode", ["diagonal", "full"])
def test_gaussian_map_monotone_and_feasible(mode):
    gen = np.random.default_rng(8)
    hard = [ordering(1, 0, 3), ordering(2, 1, 3)]
    cs = ConstraintSet.from_linear(hard, 0.95)
    for _ in range(4):
        d = gm.GaussianMeansData([gen.normal(t, 1.0, 10) for t in (0.0, 0.5, 1.0)])
        res = gm.map_gaussian_means(d, cs, WishartHyperprior.scaled_identity(1.0, 3), mode)
        assert nondecreasing(res.objective_trace)
        assert res.converged
        assert min(soc_margin(res.hyper, pc) for pc in cs) >= -1e-6
        assert res.info["mode"] == mode


def test_gaussian_map_rejects_low_confidence_and_bad_mode():
    d = gm.GaussianMeansData([[0.0], [1.0]])
    cs = ConstraintSet.from_linear([ordering(0, 1, 2)], 0.4)
    with pytest.raises(DomainError):
        gm.map_gaussian_means(d, cs, WishartHyperprior.scaled_identity(1.0, 2))
    with pytest.raises(DomainError):
        gm.map_gaussian_means(d, ConstraintSet(), WishartHyperprior.scaled_identity(1.0, 2),
                              mode="banded")


def test_gaussian_nll():
    # one sample at the mean: 0.5 log(2 pi)
    assert gm.gaussian_means_nll([0.0], [[0.0]]) == pytest.approx(0.5 * np.log(2 * np.pi))


# -- metric projection used by the mean step ----------------------------------------

def test_metric_projection_against_slsqp():
    gen = np.random.default_rng(10)
    for _ in range(20):
        n = int(gen.integers(2, 5))
        B = gen.normal(size=(n, n))
        P = B @ B.T + 0.5 * np.eye(n)
        G = gen.normal(size=(3, n))
        h = gen.uniform(0.1, 1.0, 3)  # 0 is strictly feasible
        theta = gen.normal(size=n) * 3
        got = metric_projection(P, theta, G, h)
        ref = minimize(lambda m: 0.5 * (m - theta) @ P @ (m - theta), np.zeros(n), method="SLSQP",
                       jac=lambda m: P @ (m - theta),
                       constraints=[{"type": "ineq", "fun": lambda m: h - G @ m,
                                     "jac": lambda m: -G}], options={"ftol": 1e-15})
        np.testing.assert_allclose(got, ref.x, atol=1e-6)
        assert np.all(G @ got <= h + 1e-10)


def test_metric_projection_infeasible():
    with pytest.raises(InfeasibleError):
        metric_projection(np.eye(1), np.zeros(1), np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))


# -- regression -----------------------------------------------------------------------

def test_ridge_orthonormal_least_squares():
    gen = np.random.default_rng(0)
    X, _ = np.linalg.qr(gen.normal(size=(6, 3)))
    y = gen.normal(size=6)
    np.testing.assert_allclose(rg.ridge_regression(rg.RegressionData(X, y), 0.0), X.T @ y, atol=1e-12)


def test_ridge_random_system_against_augmented_lstsq():
    gen = np.random.default_rng(1)
    X = gen.normal(size=(3, 2))
    y = gen.normal(size=3)
    for lam, s2 in [(0.5, 1.0), (2.0, 0.5)]:
        aug_X = np.vstack([X, np.sqrt(lam * s2) * np.eye(2)])
        aug_y = np.concatenate([y, np.zeros(2)])
        ref = np.linalg.lstsq(aug_X, aug_y, rcond=None)[0]
        got = rg.ridge_regression(rg.RegressionData(X, y, s2), lam)
        np.testing.assert_allclose(got, ref, atol=1e-8)


def test_ridge_rank_deficient_at_zero():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DecompositionError):
        rg.ridge_regression(rg.RegressionData(X, [1.0, 2.0, 3.0]), 0.0)


def test_constrained_ridge_kkt():
    gen = np.random.default_rng(2)
    X = gen.normal(size=(20, 3))
    y = X @ np.array([-0.8, 0.5, 0.2]) + 0.1 * gen.normal(size=20)
    d = rg.RegressionData(X, y)
    theta = rg.constrained_ridge(d, 0.1, [lower(0, 0.0, 3)])
    assert abs(theta[0]) <= 1e-8
    grad = (X.T @ X + 0.1 * np.eye(3)) @ theta - X.T @ y
    assert grad[0] >= -1e-8
    np.testing.assert_allclose(grad[1:], 0, atol=1e-7)


def test_constrained_ridge_inactive_and_satisfied():
    gen = np.random.default_rng(3)
    X = gen.normal(size=(30, 4))
    y = X @ np.array([0.5, -0.5, 0.3, 0.1]) + 0.1 * gen.normal(size=30)
    d = rg.RegressionData(X, y)
    free = rg.ridge_regression(d, 1.0)
    np.testing.assert_allclose(rg.constrained_ridge(d, 1.0, [upper(0, 5.0, 4)]), free, atol=1e-12)
    hard = [upper(0, 0.0, 4), lower(1, 0.0, 4), ordering(3, 2, 4)]
    got = rg.constrained_ridge(d, 1.0, hard)
    assert all(c.b - c.a @ got >= -1e-10 for c in hard)


def test_map_regression_theta_is_posterior_mode():
    gen = np.random.default_rng(4)
    X = gen.normal(size=(25, 3))
    y = X @ np.array([-0.3, 0.2, 0.6]) + gen.normal(size=25)
    d = rg.RegressionData(X, y, 0.5)
    cs = ConstraintSet.from_linear([upper(0, 0.0, 3), lower(2, 0.0, 3)], 0.95)
    for mode in ("diagonal", "full"):
        res = rg.map_regression(d, cs, WishartHyperprior.scaled_identity(0.1, 3), mode)
        S = res.hyper.covariance()
        P = np.linalg.inv(S)
        mode_theta = np.linalg.solve(X.T @ X / 0.5 + P, X.T @ y / 0.5 + P @ res.hyper.mu)
        np.testing.assert_allclose(res.theta, mode_theta, atol=1e-6)
        assert nondecreasing(res.objective_trace)


def test_map_regression_vacuous_is_ridge_with_prior_penalty():
    gen = np.random.default_rng(5)
    X = gen.normal(size=(40, 2))
    y = X @ np.array([0.4, -0.2]) + gen.normal(size=40)
    d = rg.RegressionData(X, y)
    res = rg.map_regression(d, vacuous(2), WishartHyperprior.scaled_identity(0.2, 2), "full")
    P = np.linalg.inv(res.hyper.covariance())
    # with mu at the origin this is exactly ridge with penalty matrix Sigma^-1
    centred = np.linalg.solve(X.T @ X + P, X.T @ y + P @ res.hyper.mu)
    np.testing.assert_allclose(res.theta, centred, atol=1e-6)


def test_holdout_split_shapes():
    (fit, val), = rg.holdout_split(20)
    assert list(val) == [16, 17, 18, 19] and list(fit) == list(range(16))
    folds = rg.holdout_split(10, folds=5)
    assert len(folds) == 5
    assert sorted(itertools.chain.from_iterable(v for _, v in folds)) == list(range(10))
    with pytest.raises(DomainError):
        rg.holdout_split(1)


def test_grid_ties_go_to_smallest_value():
    assert rg._pick([(0.1, 1.0), (0.2, 1.0), (0.5, 2.0)]) == 0.1
    assert rg._pick([(0.1, 1.0), (0.2, 0.5), (0.5, 0.5)]) == 0.2


def test_select_ridge_and_map_report_choices():
    gen = np.random.default_rng(6)
    X = gen.normal(size=(20, 3))
    y = X @ np.array([-0.5, 0.1, 0.7]) + gen.normal(size=20)
    d = rg.RegressionData(X, y)
    theta, lam = rg.select_ridge(d)
    assert lam in rg.RIDGE_GRID
    np.testing.assert_allclose(theta, rg.ridge_regression(d, lam))
    cs = ConstraintSet.from_linear([upper(0, 0.0, 3)], 0.95)
    res = rg.select_map(d, cs, "diagonal", sigma2_grid=(1.0,), tau_grid=(0.1, 0.3))
    assert res.info["tau"] in (0.1, 0.3) and res.info["sigma2"] == 1.0


def test_regression_metrics():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert rg.mse(np.array([1.0, 2.0]), X, [1.0, 3.0]) == pytest.approx(0.5)
    assert rg.rounded_accuracy(np.array([1.2, 2.6]), X, [1.0, 2.0]) == 0.5
