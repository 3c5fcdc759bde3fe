import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bpps.bps import PosteriorPredictive
from bpps.errors import DataError
from bpps.posterior_stats import (
    cvar_loss,
    cvor,
    moments,
    order_index,
    portfolio_samples,
    q_alpha,
    quantile,
    var_loss,
    vor,
    write_samples,
)


def normal_quantile(p):
    """Standard normal quantile by bisection on the erf-based CDF."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1.0 + math.erf(mid / math.sqrt(2.0))) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def as_pp(values):
    """Single-asset predictive whose return draws are ``values``."""
    return PosteriorPredictive(1, np.asarray(values, dtype=float)[:, None])


ONE = np.array([1.0])
sample_sets = arrays(np.float64, st.integers(1, 60), elements=st.floats(-1.0, 1.0, allow_subnormal=False))
# integer-valued draws keep affine maps free of rounding-induced ties
integer_sets = arrays(np.int64, st.integers(1, 60), elements=st.integers(-10 ** 6, 10 ** 6)).map(
    lambda a: a.astype(float))
levels = st.floats(0.01, 0.99)


# ---- portfolio samples ---------------------------------------------------------

def test_portfolio_samples_basic_cases(rng):
    x = rng.normal(size=(50, 3))
    np.testing.assert_array_equal(portfolio_samples(x, [1.0, 0.0, 0.0]), x[:, 0])
    np.testing.assert_allclose(portfolio_samples(x, [0.5, 0.5, 0.0]), x[:, :2].mean(axis=1), rtol=1e-15)
    flat = np.full((10, 3), 0.02)
    np.testing.assert_allclose(portfolio_samples(flat, np.full(3, 1 / 3)), 0.02, rtol=1e-14)


def test_portfolio_samples_dimension_mismatch():
    with pytest.raises(DataError):
        portfolio_samples(np.zeros((5, 3)), [0.5, 0.5])


# ---- moments -------------------------------------------------------------------

def test_moments_two_samples():
    m = moments(np.array([[0.0, 0.0], [2.0, 2.0]]))
    np.testing.assert_array_equal(m.mean, [1.0, 1.0])
    np.testing.assert_array_equal(m.cov, [[2.0, 2.0], [2.0, 2.0]])


def test_moments_identical_samples_have_zero_covariance():
    m = moments(np.tile([0.01, -0.02, 0.03], (7, 1)))
    np.testing.assert_allclose(m.cov, 0.0, atol=1e-20)


def test_moments_need_two_samples():
    with pytest.raises(DataError):
        moments(np.zeros((1, 2)))


def test_moments_monte_carlo(rng):
    S = 50_000
    mu = np.array([0.01, -0.005, 0.02])
    L = np.array([[0.04, 0, 0], [0.01, 0.03, 0], [-0.02, 0.01, 0.05]])
    Sigma = L @ L.T
    m = moments(PosteriorPredictive(1, rng.multivariate_normal(mu, Sigma, size=S)))
    d = np.diag(Sigma)
    assert np.all(np.abs(m.mean - mu) < 4 * np.sqrt(d / S))
    se = np.sqrt((np.outer(d, d) + Sigma ** 2) / S)
    assert np.all(np.abs(m.cov - Sigma) < 4 * se)


@settings(max_examples=50)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_moments_covariance_is_psd(S, K, seed):
    x = np.random.default_rng(seed).normal(size=(S, K)) * np.logspace(-3, 0, K)
    cov = moments(x).cov
    np.testing.assert_array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= -1e-12 * max(1.0, np.abs(cov).max())


# ---- quantiles and tail means ------------------------------------------------------

def test_order_statistic_convention():
    assert order_index(0.95, 100) == 94
    assert order_index(0.05, 100) == 4
    assert order_index(0.001, 10) == 0
    assert order_index(0.999, 10) == 9
    with pytest.raises(ValueError):
        order_index(1.0, 10)


def test_loss_quantiles_on_integer_losses():
    losses = np.arange(1.0, 101.0)
    pp = as_pp(-losses)
    assert var_loss(pp, ONE, 0.95) == 95.0
    assert cvar_loss(pp, ONE, 0.95) == 97.5


def test_return_quantiles_on_integer_returns():
    pp = as_pp(np.arange(1.0, 101.0))
    assert vor(pp, ONE, 0.05) == 5.0
    assert cvor(pp, ONE, 0.05) == 52.5


def test_normal_losses_match_analytic_quantiles(rng):
    pp = as_pp(-rng.standard_normal(100_000))
    z = normal_quantile(0.95)
    assert var_loss(pp, ONE, 0.95) == pytest.approx(z, abs=0.03)
    cvar = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) / 0.05
    assert cvar_loss(pp, ONE, 0.95) == pytest.approx(cvar, abs=0.05)


def test_normal_returns_value_of_return(rng):
    mu, sigma = 0.01, 0.05
    pp = as_pp(rng.normal(mu, sigma, 100_000))
    assert vor(pp, ONE, 0.05) == pytest.approx(mu + normal_quantile(0.05) * sigma, abs=0.03 * sigma)


def test_median_of_symmetric_samples():
    values = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
    assert quantile(values, 0.5) == 0.0
    assert var_loss(as_pp(values), ONE, 0.5) == 0.0


def test_symmetric_ordering(rng):
    half = rng.normal(size=5000)
    pp = as_pp(np.concatenate([half, -half]))
    for level in (0.05, 0.2, 0.5):
        assert cvor(pp, ONE, level) >= pp.samples.mean() >= -cvar_loss(pp, ONE, 1 - level)


def test_all_equal_samples():
    pp = as_pp(np.full(9, 0.03))
    assert vor(pp, ONE, 0.3) == cvor(pp, ONE, 0.3) == 0.03
    assert var_loss(pp, ONE, 0.9) == cvar_loss(pp, ONE, 0.9) == -0.03


@given(sample_sets, levels)
def test_tail_mean_dominates_quantile(values, level):
    pp = as_pp(values)
    assert cvar_loss(pp, ONE, level) >= var_loss(pp, ONE, level)
    assert cvor(pp, ONE, level) >= vor(pp, ONE, level)


@given(integer_sets, levels, st.floats(0.1, 10.0), st.floats(-1.0, 1.0))
def test_translation_and_positive_scaling(values, level, c, b):
    base, moved = as_pp(values), as_pp(c * values + b)
    tol = 1e-9 * (1 + c * np.abs(values).max() + abs(b))
    assert vor(moved, ONE, level) == pytest.approx(c * vor(base, ONE, level) + b, abs=tol)
    assert cvor(moved, ONE, level) == pytest.approx(c * cvor(base, ONE, level) + b, abs=tol)
    # losses of the moved set are c L - b
    assert var_loss(moved, ONE, level) == pytest.approx(c * var_loss(base, ONE, level) - b, abs=tol)
    assert cvar_loss(moved, ONE, level) == pytest.approx(c * cvar_loss(base, ONE, level) - b, abs=tol)


@given(st.lists(st.integers(-10 ** 6, 10 ** 6), min_size=1, max_size=60, unique=True), levels)
def test_vor_loss_duality_without_ties(values, level):
    S = len(values)
    # the duality is exact whenever neither level lands on a grid point
    assume(abs(level * S - round(level * S)) > 1e-6)
    pp = as_pp(values)
    assert vor(pp, ONE, level) == -var_loss(pp, ONE, 1 - level)


# ---- risk multiplier ---------------------------------------------------------------

def test_q_alpha_against_independent_normal_quantile():
    z = normal_quantile(0.95)
    assert q_alpha("var", 0.95) == pytest.approx(z, abs=1e-12)
    assert q_alpha("var", 0.95) == pytest.approx(1.6449, abs=5e-5)
    cvar = math.exp(-0.5 * z * z) / (0.05 * math.sqrt(2 * math.pi))
    assert q_alpha("cvar", 0.95) == pytest.approx(cvar, rel=1e-12)
    assert q_alpha("cvar", 0.95) == pytest.approx(2.0627, abs=5e-5)
    assert q_alpha("var", 0.5) == pytest.approx(0.0, abs=1e-15)


def test_q_alpha_rejects_bad_arguments():
    with pytest.raises(ValueError):
        q_alpha("var", 1.0)
    with pytest.raises(ValueError):
        q_alpha("mean", 0.5)


def test_write_samples(tmp_path):
    pp = PosteriorPredictive(3, np.array([[0.1, -0.2], [1 / 3, 0.0]]))
    path = tmp_path / "draws.csv"
    write_samples(pp, path, assets=("A", "B"))
    lines = path.read_text().splitlines()
    assert lines[0] == "A,B"
    assert [float(v) for v in lines[2].split(",")] == [1 / 3, 0.0]
