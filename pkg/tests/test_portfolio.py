import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpps.bps import PosteriorPredictive
from bpps.errors import InfeasibleError
from bpps.portfolio import (
    MvConfig,
    OptimizerConfig,
    QuantileConfig,
    QuantileObjective,
    UtilityConfig,
    check_weights,
    eta_grid,
    frontier,
    max_sharpe_frontier,
    pick_best,
    project_simplex,
    project_simplex_mean,
    q_alpha_objective,
    rc_objective,
    repair_covariance,
    risk_contributions,
    solve_min_variance_at_mean,
    solve_quadratic_utility,
    solve_quantile,
    solve_risk_parity,
    utility,
)
from bpps.posterior_stats import Moments, moments, q_alpha
from oracles import (
    grid_best,
    quadratic_form,
    quantile_objective_grid,
    random_instance,
    rc_dispersion_grid,
    simplex_grid,
)

finite = st.floats(-10.0, 10.0, allow_nan=False)


def assert_on_simplex(w):
    assert np.all(w >= 0.0)
    assert abs(w.sum() - 1.0) <= 1e-9


# ---- projection --------------------------------------------------------------

def test_projection_examples():
    np.testing.assert_array_equal(project_simplex([2.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(project_simplex([0.6, 0.6]), [0.5, 0.5], rtol=1e-15)
    v = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(v), v, rtol=1e-15)


@given(st.lists(finite, min_size=1, max_size=8))
def test_projection_satisfies_optimality(v):
    v = np.array(v)
    w = project_simplex(v)
    assert_on_simplex(w)
    # KKT: w = max(v - tau, 0) for a single threshold tau
    support = w > 0
    tau = (v[support] - w[support]).mean()
    np.testing.assert_allclose(w[support], v[support] - tau, atol=1e-9)
    assert np.all(v[~support] <= tau + 1e-9)


@settings(max_examples=50)
@given(st.integers(2, 6), st.integers(0, 2 ** 31))
def test_projection_with_mean_bound_beats_feasible_points(K, seed):
    rng = np.random.default_rng(seed)
    v, mu = rng.normal(size=K), rng.normal(size=K)
    eta = rng.uniform(mu.min(), mu.max())
    w = project_simplex_mean(v, mu, eta)
    assert_on_simplex(w)
    assert w @ mu >= eta - 1e-9
    d = np.sum((w - v) ** 2)
    for other in rng.dirichlet(np.ones(K), size=200):
        if other @ mu >= eta:
            assert d <= np.sum((other - v) ** 2) + 1e-9


def test_projection_rejects_non_finite():
    with pytest.raises(ValueError):
        project_simplex([np.nan, 1.0])


def test_check_weights():
    check_weights([0.25, 0.75])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            check_weights(bad)


def test_eta_grid_and_config_validation():
    grid = eta_grid(np.array([0.03, -0.01, 0.01]), 5)
    assert grid[0] == -0.01 and grid[-1] == 0.03 and len(grid) == 5
    with pytest.raises(ValueError):
        MvConfig(eta_grid=(0.02, 0.01))
    with pytest.raises(ValueError):
        MvConfig(eta_grid=())


def test_pick_best_tie_breaks():
    a = (1.0, 0.5, np.array([0.5, 0.5]))
    b = (1.0, 0.2, np.array([1.0, 0.0]))
    c = (1.0, 0.2, np.array([0.0, 1.0]))
    assert pick_best([a, b, c], 1e-12) is c
    assert pick_best([a, (2.0, 9.0, np.array([1.0, 0.0]))], 1e-12)[0] == 2.0


# ---- mean-variance ----------------------------------------------------------

def test_two_asset_min_variance_closed_form():
    m = Moments(np.array([0.01, 0.01]), np.diag([1.0, 4.0]))
    for eta in (-0.05, 0.0, 0.01):
        np.testing.assert_allclose(solve_min_variance_at_mean(m, eta), [0.8, 0.2], atol=1e-8)


def test_identical_assets_give_uniform():
    K = 4
    m = Moments(np.full(K, 0.01), 0.02 * (np.eye(K) + np.ones((K, K))))
    np.testing.assert_allclose(solve_min_variance_at_mean(m, 0.01), np.full(K, 0.25), atol=1e-8)


def test_mean_at_maximum_is_corner():
    m = Moments(np.array([0.01, 0.03, 0.02]), np.diag([0.01, 0.04, 0.02]))
    np.testing.assert_allclose(solve_min_variance_at_mean(m, 0.03), [0.0, 1.0, 0.0], atol=1e-12)


def test_infeasible_mean_raises():
    m = Moments(np.array([0.01, 0.02]), np.eye(2))
    with pytest.raises(InfeasibleError):
        solve_min_variance_at_mean(m, 0.05)
    with pytest.raises(InfeasibleError):
        max_sharpe_frontier(m, MvConfig(eta_grid=(0.05, 0.06)))


@pytest.mark.parametrize("seed", range(5))
def test_frontier_variance_is_monotone(seed):
    mu, cov = random_instance(np.random.default_rng(seed), 5)
    points = frontier(Moments(mu, cov), MvConfig(n_grid=30))
    var = np.array([p.variance for p in points])
    assert np.all(np.diff(var) >= -1e-12)
    for p in points:
        assert_on_simplex(p.w)
        assert p.mean >= p.eta - 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_min_variance_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    K = 2 + seed % 2
    mu, cov = random_instance(rng, K)
    eta = rng.uniform(mu.min(), mu.max())
    w = solve_min_variance_at_mean(Moments(mu, cov), eta)
    W = simplex_grid(K)
    assert w @ cov @ w <= grid_best(quadratic_form(W, cov), W @ mu >= eta) + 5e-3


def test_single_feasible_grid_point():
    m = Moments(np.array([0.01, 0.02]), np.diag([0.04, 0.09]))
    w = max_sharpe_frontier(m, MvConfig(eta_grid=(0.015, 0.5)))
    np.testing.assert_allclose(w, solve_min_variance_at_mean(m, 0.015), atol=1e-12)


def test_dominant_asset_sharpe_matches_grid_oracle():
    m = Moments(np.array([0.02, 0.005]), np.diag([0.01, 0.04]))
    w = max_sharpe_frontier(m)
    W = simplex_grid(2)
    sharpe = (W @ m.mean) / np.sqrt(quadratic_form(W, m.cov))
    assert (w @ m.mean) / np.sqrt(w @ m.cov @ w) >= sharpe.max() - 5e-3


def test_dominant_asset_is_corner_when_other_mean_is_not_positive():
    m = Moments(np.array([0.02, -0.005]), np.diag([0.01, 0.04]))
    np.testing.assert_allclose(max_sharpe_frontier(m), [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_sharpe_argmax_is_scale_free(seed):
    mu, cov = random_instance(np.random.default_rng(seed), 4)
    mu = np.abs(mu) + 0.001
    w1 = max_sharpe_frontier(Moments(mu, cov))
    w2 = max_sharpe_frontier(Moments(mu, 7.0 * cov))
    np.testing.assert_allclose(w1, w2, atol=1e-7)


# ---- quadratic utility --------------------------------------------------------

def test_utility_small_gamma_picks_max_mean():
    m = Moments(np.array([0.01, 0.03, 0.02]), np.diag([0.01, 0.09, 0.04]))
    np.testing.assert_allclose(solve_quadratic_utility(m, UtilityConfig(gamma=1e-6)), [0, 1, 0], atol=1e-9)


def test_utility_symmetric_assets_uniform():
    m = Moments(np.full(3, 0.01), 0.03 * np.eye(3) + 0.01)
    np.testing.assert_allclose(solve_quadratic_utility(m, UtilityConfig(gamma=5.0)), np.full(3, 1 / 3), atol=1e-9)


def test_utility_expands_second_moment():
    mu, cov = np.array([0.02, 0.01]), np.array([[0.04, 0.01], [0.01, 0.09]])
    w = np.array([0.3, 0.7])
    r = w @ mu
    assert utility(Moments(mu, cov), w, 2.0) == pytest.approx(r - (w @ cov @ w + r * r), rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_utility_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    mu, cov = random_instance(rng, 3)
    gamma = rng.uniform(0.5, 10.0)
    m = Moments(mu, cov)
    w = solve_quadratic_utility(m, UtilityConfig(gamma))
    W = simplex_grid(3)
    best = (W @ mu - 0.5 * gamma * (quadratic_form(W, cov) + (W @ mu) ** 2)).max()
    assert utility(m, w, gamma) >= best - 5e-3


# ---- quantile program ---------------------------------------------------------

def test_quantile_defaults():
    cfg = QuantileConfig()
    assert (cfg.alpha, cfg.beta, cfg.v0, cfg.penalty) == (0.05, 0.95, -0.1, 10.0)


def test_quantile_point_masses_pick_best_asset():
    x = np.tile([0.01, 0.04, 0.02], (50, 1))
    w = solve_quantile(PosteriorPredictive(1, x), QuantileConfig(penalty=0.0))
    np.testing.assert_allclose(w, [0.0, 1.0, 0.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_quantile_two_assets_matches_grid(seed):
    rng = np.random.default_rng(seed)
    mu, cov = random_instance(rng, 2)
    x = rng.multivariate_normal(mu, cov, size=500)
    cfg = QuantileConfig(v0=rng.uniform(-0.1, 0.1))
    w = solve_quantile(x, cfg)
    grid = quantile_objective_grid(simplex_grid(2), x, cfg.alpha, cfg.beta, cfg.v0, cfg.penalty)
    assert QuantileObjective(x, cfg)(w) >= grid.max() - 1e-3


def test_quantile_objective_value_matches_gradient_route(rng):
    x = rng.normal(0.01, 0.05, (300, 4))
    obj = QuantileObjective(x, QuantileConfig(v0=-0.2))
    for w in rng.dirichlet(np.ones(4), size=20):
        assert obj(w) == pytest.approx(obj.value_grad(w)[0], abs=1e-15)


@pytest.mark.parametrize("penalty", [0.0, 10.0])
def test_quantile_batched_line_matches_pointwise(rng, penalty):
    x = rng.normal(0.01, 0.05, (301, 3))
    obj = QuantileObjective(x, QuantileConfig(v0=-0.05, penalty=penalty))
    w, d = np.array([0.2, 0.5, 0.3]), np.array([0.4, -0.1, -0.3])
    t = np.linspace(-0.5, 1.0, 17)
    expected = [obj(w + ti * d) for ti in t]
    np.testing.assert_allclose(obj.along(w, d, t), expected, rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_quantile_three_assets_matches_grid(seed):
    rng = np.random.default_rng(100 + seed)
    mu, cov = random_instance(rng, 3)
    x = rng.multivariate_normal(mu, cov, size=200)
    cfg = QuantileConfig(v0=rng.uniform(-0.1, 0.1))
    w = solve_quantile(x, cfg)
    grid = quantile_objective_grid(simplex_grid(3), x, cfg.alpha, cfg.beta, cfg.v0, cfg.penalty)
    assert QuantileObjective(x, cfg)(w) >= grid.max() - 1e-3


def test_quantile_is_deterministic_given_seed(rng):
    x = rng.normal(0.01, 0.05, (200, 4))
    opt = OptimizerConfig(seed=3)
    np.testing.assert_array_equal(solve_quantile(x, opt=opt), solve_quantile(x, opt=opt))


def test_q_alpha_objective_cases():
    mu = np.array([0.01, 0.03])
    w = np.array([0.4, 0.6])
    assert q_alpha_objective(Moments(mu, np.zeros((2, 2))), w, 0.95, "var") == pytest.approx(-w @ mu)
    cov = np.array([[0.04, 0.01], [0.01, 0.09]])
    assert q_alpha_objective(Moments(mu, cov), w, 0.5, "var") == pytest.approx(-w @ mu, abs=1e-15)
    one = Moments(np.array([0.02]), np.array([[0.0025]]))
    expected = -0.02 + q_alpha("cvar", 0.9) * 0.05
    assert q_alpha_objective(one, np.ones(1), 0.9, "cvar") == pytest.approx(expected, rel=1e-14)


# ---- risk parity -----------------------------------------------------------------

def test_risk_parity_diagonal_closed_form():
    sd = np.array([0.1, 0.2, 0.4, 0.05])
    w = solve_risk_parity(Moments(np.zeros(4), np.diag(sd ** 2)))
    expected = (1 / sd) / (1 / sd).sum()
    np.testing.assert_allclose(w, expected, atol=1e-8)
    assert np.abs(risk_contributions(w, np.diag(sd ** 2)) - 0.25).max() < 1e-6


@pytest.mark.parametrize("cov", [0.3 * np.eye(5), 0.04 * (0.5 * np.eye(5) + 0.5)])
def test_risk_parity_symmetric_cases(cov):
    np.testing.assert_allclose(solve_risk_parity(Moments(np.zeros(5), cov)), np.full(5, 0.2), atol=1e-8)


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_risk_contributions_sum_to_one(K, seed):
    rng = np.random.default_rng(seed)
    _, cov = random_instance(rng, K)
    w = rng.dirichlet(np.ones(K))
    assert abs(risk_contributions(w, cov).sum() - 1.0) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_risk_parity_is_scale_free(seed):
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(*random_instance(rng, 4), size=400)
    centre = x.mean(axis=0)
    w1 = solve_risk_parity(moments(x))
    w2 = solve_risk_parity(moments(centre + 3.5 * (x - centre)))
    np.testing.assert_allclose(w1, w2, atol=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_risk_parity_matches_grid(seed):
    rng = np.random.default_rng(seed)
    K = 2 + seed % 2
    _, cov = random_instance(rng, K)
    w = solve_risk_parity(Moments(np.zeros(K), cov))
    assert rc_objective(w, cov) <= rc_dispersion_grid(simplex_grid(K), cov).min() + 5e-3


def test_singular_covariance_is_repaired():
    cov = np.ones((3, 3)) * 0.04
    fixed = repair_covariance(cov)
    np.linalg.cholesky(fixed)
    w = solve_risk_parity(Moments(np.zeros(3), cov))
    assert_on_simplex(w)


def test_rc_gradient_matches_finite_differences(rng):
    from bpps.portfolio.risk_parity import _rc_value_grad

    _, cov = random_instance(rng, 4)
    w = rng.dirichlet(np.ones(4))
    f, g = _rc_value_grad(w, cov)
    assert f == pytest.approx(rc_dispersion_grid(w[None], cov)[0], rel=1e-10)
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (_rc_value_grad(w + e, cov)[0] - _rc_value_grad(w - e, cov)[0]) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)


# ---- feasibility across every solver ------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 31))
def test_every_solver_returns_simplex_weights(K, seed):
    rng = np.random.default_rng(seed)
    mu, cov = random_instance(rng, K)
    m = Moments(mu, cov)
    x = rng.multivariate_normal(mu, cov, size=100)
    opt = OptimizerConfig(restarts=2)
    for w in (
        solve_min_variance_at_mean(m, float(np.median(mu))),
        max_sharpe_frontier(m, MvConfig(n_grid=10)),
        solve_quadratic_utility(m),
        solve_quantile(x, opt=opt),
        solve_risk_parity(m),
    ):
        assert w.shape == (K,)
        assert_on_simplex(w)
