from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tte_estimands.estimation.logistic import SeparationWarning, SingularDesignError, fit_logistic


def _two_by_two(a, b, c, d):
    """Rows for a binary exposure: (a events, b non-events) exposed, (c, d) unexposed."""
    x = np.r_[np.ones(a + b), np.zeros(c + d)]
    y = np.r_[np.ones(a), np.zeros(b), np.ones(c), np.zeros(d)]
    return np.column_stack([np.ones_like(x), x]), y


def test_intercept_only_is_logit_of_mean():
    y = np.r_[np.ones(25), np.zeros(75)]
    fit = fit_logistic(np.ones((100, 1)), y)
    assert fit.converged
    assert fit.coefficients[0] == pytest.approx(math.log(0.25 / 0.75), abs=1e-10)
    assert fit.coefficients[0] == pytest.approx(-1.0986, abs=1e-4)


def test_two_by_two_log_odds_ratio():
    X, y = _two_by_two(30, 70, 50, 50)
    fit = fit_logistic(X, y)
    assert fit.coefficients[1] == pytest.approx(math.log(30 * 50 / (70 * 50)), abs=1e-10)
    assert fit.coefficients[1] == pytest.approx(-0.8473, abs=1e-4)
    # closed-form variance of a log odds ratio
    assert fit.cov[1, 1] == pytest.approx(1 / 30 + 1 / 70 + 1 / 50 + 1 / 50, rel=1e-8)


def test_zero_weights_drop_rows():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(200), rng.normal(size=200)])
    y = (rng.uniform(size=200) < 0.4).astype(float)
    w = np.r_[np.ones(100), np.zeros(100)]
    a = fit_logistic(X, y, weights=w)
    b = fit_logistic(X[:100], y[:100])
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-12)


def test_integer_weights_equal_replication():
    X, y = _two_by_two(3, 5, 4, 2)
    w = np.arange(1, len(y) + 1, dtype=float)
    a = fit_logistic(X, y, weights=w)
    rep = np.repeat(np.arange(len(y)), w.astype(int))
    b = fit_logistic(X[rep], y[rep])
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-9)


def test_fractional_response_matches_mean():
    y = np.array([0.2, 0.4, 0.9])
    fit = fit_logistic(np.ones((3, 1)), y)
    assert 1 / (1 + math.exp(-fit.coefficients[0])) == pytest.approx(y.mean(), abs=1e-10)


def test_offset_shifts_intercept():
    y = np.r_[np.ones(30), np.zeros(70)]
    fit = fit_logistic(np.ones((100, 1)), y, offset=np.full(100, 0.5))
    assert fit.coefficients[0] == pytest.approx(math.log(0.3 / 0.7) - 0.5, abs=1e-10)


def test_separation_warns_and_caps():
    X = np.column_stack([np.ones(6), [0, 0, 0, 1, 1, 1]])
    y = np.array([0, 0, 0, 1, 1, 1.0])
    with pytest.warns(SeparationWarning):
        fit = fit_logistic(X, y)
    assert fit.separated and not fit.converged
    assert np.abs(fit.coefficients).max() <= 30.0


def test_singular_design_raises():
    X = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularDesignError):
        fit_logistic(X, np.array([0, 1, 0, 1, 1.0]))


@pytest.mark.parametrize("y", [[0, 2.0], [np.nan, 1.0]])
def test_bad_response_rejected(y):
    with pytest.raises(ValueError):
        fit_logistic(np.ones((2, 1)), np.array(y))


@given(st.integers(0, 10_000))
def test_converged_implies_small_gradient(seed):
    rng = np.random.default_rng(seed)
    n = 80
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = (rng.uniform(size=n) < 0.5).astype(float)
    fit = fit_logistic(X, y)
    if fit.converged:
        mu = fit.predict(X)
        assert np.linalg.norm(X.T @ (y - mu)) / n <= 1e-8
