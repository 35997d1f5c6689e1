import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rspp.lasso import SingularDesignError, lambda_grid, lasso_cv, lasso_fit


def design(seed, n=200, p=3, r=2):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, p)) * [1.0, 5.0, 0.1][:p] + [0.0, 3.0, -1.0][:p]
    B = g.normal(size=(r, p))
    Y = 0.7 + X @ B.T + 0.1 * g.normal(size=(n, r))
    return X, Y


def test_zero_penalty_is_least_squares():
    X, Y = design(1)
    fit = lasso_fit(X, Y, 0.0)
    A = np.column_stack([np.ones(len(X)), X])
    sol, *_ = np.linalg.lstsq(A, Y, rcond=None)
    assert np.allclose(fit.intercept, sol[0], atol=1e-8, rtol=0)
    assert np.allclose(fit.coef, sol[1:].T, atol=1e-8, rtol=0)


def test_large_penalty_shrinks_to_means():
    X, Y = design(2)
    fit = lasso_fit(X, Y, 1e6)
    assert np.all(fit.coef == 0)
    assert np.allclose(fit.intercept, Y.mean(axis=0), rtol=1e-15)


def test_planted_model_recovered():
    g = np.random.default_rng(3)
    eta = g.normal(size=(300, 1))
    y = 2 + 3 * eta[:, 0]
    fit = lasso_fit(eta, y, 1e-9)
    assert fit.intercept[0] == pytest.approx(2, abs=1e-6)
    assert fit.coef[0, 0] == pytest.approx(3, abs=1e-6)


def test_zero_variance_column_is_singular():
    X, Y = design(4)
    X[:, 1] = 2.5
    with pytest.raises(SingularDesignError):
        lasso_fit(X, Y, 0.1)


def test_collinear_unpenalised_is_singular():
    X, Y = design(5)
    X[:, 2] = 2 * X[:, 0] + 1
    with pytest.raises(SingularDesignError):
        lasso_fit(X, Y, 0.0)


def test_grid_starts_at_zeroing_lambda():
    X, Y = design(6)
    grid = lambda_grid(X, Y)
    assert np.all(lasso_fit(X, Y, grid[0] * (1 + 1e-9)).coef == 0)
    assert np.any(lasso_fit(X, Y, grid[0] * 0.9).coef != 0)


def test_cv_selects_and_reports():
    X, Y = design(7)
    fit, errs = lasso_cv(X, Y, folds=10, rng=np.random.default_rng(0))
    assert fit.lam in errs and errs[fit.lam] == min(errs.values())
    with pytest.raises(ValueError):
        lasso_cv(X, Y, lambdas=[])


def test_cv_ties_prefer_larger_lambda():
    X, Y = design(8)
    big = lambda_grid(X, Y)[0]
    # both penalties zero every coefficient, so their CV errors coincide
    fit, errs = lasso_cv(X, Y, lambdas=[2 * big, 3 * big], folds=5)
    assert fit.lam == 3 * big


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-4, 1.0))
def test_kkt_conditions(seed, frac):
    X, Y = design(seed % 1000, n=80)
    lam = frac * lambda_grid(X, Y)[0]
    fit = lasso_fit(X, Y, lam)
    mu, sd = X.mean(0), X.std(0)
    Xs = (X - mu) / sd
    Bs = fit.coef * sd
    R = (Y - Y.mean(0)) - Xs @ Bs.T
    grad = Xs.T @ R / len(X)  # (p, r)
    for r in range(Y.shape[1]):
        for j in range(X.shape[1]):
            if Bs[r, j] != 0:
                assert grad[j, r] == pytest.approx(lam * np.sign(Bs[r, j]), abs=1e-8)
            else:
                assert abs(grad[j, r]) <= lam + 1e-8
