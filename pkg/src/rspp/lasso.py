"""Multi-response lasso by cyclic coordinate descent with k-fold CV.

The penalty is the entrywise L1 norm of the coefficient matrix, so the fit
separates across responses, but the penalty is chosen jointly by the summed
squared prediction error over all responses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = ["SingularDesignError", "LassoFit", "lasso_fit", "lasso_cv", "lambda_grid"]


class SingularDesignError(ValueError):
    pass


@dataclass(frozen=True)
class LassoFit:
    intercept: np.ndarray  # (r,)
    coef: np.ndarray  # (r, p) on the original feature scale
    lam: float
    iterations: int

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coef.T


@nb.njit(cache=True)
def _cd(G, c, lam, b, tol, max_iter):
    # minimise 0.5 b'Gb - c'b + lam |b|_1 for one response; G has unit diagonal
    p = G.shape[0]
    for it in range(max_iter):
        delta = 0.0
        for j in range(p):
            rho = c[j]
            for k in range(p):
                if k != j:
                    rho -= G[j, k] * b[k]
            if rho > lam:
                new = (rho - lam) / G[j, j]
            elif rho < -lam:
                new = (rho + lam) / G[j, j]
            else:
                new = 0.0
            d = abs(new - b[j])
            if d > delta:
                delta = d
            b[j] = new
        if delta < tol:
            return it + 1
    return -1


def _standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd <= 1e-12 * np.maximum(1.0, np.abs(mu))):
        cols = np.flatnonzero(sd <= 1e-12 * np.maximum(1.0, np.abs(mu))).tolist()
        raise SingularDesignError(f"zero-variance summary columns {cols}")
    return (X - mu) / sd, mu, sd


def lasso_fit(X, Y, lam: float, tol: float = 1e-12, max_iter: int = 200_000) -> LassoFit:
    """Fit ``Y ~ a + X B'`` minimising ``||Y - a - Xs B||^2 / (2n) + lam |B|_1``
    with ``Xs`` the standardised design; coefficients are mapped back."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    n = X.shape[0]
    Xs, mu, sd = _standardize(X)
    ymu = Y.mean(axis=0)
    Yc = Y - ymu
    G = Xs.T @ Xs / n
    if lam == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise SingularDesignError("design is rank deficient")
    C = Xs.T @ Yc / n
    Bs = np.zeros((Y.shape[1], X.shape[1]))
    iters = 0
    for r in range(Y.shape[1]):
        it = _cd(G, C[:, r].copy(), float(lam), Bs[r], tol, max_iter)
        if it < 0:
            raise RuntimeError(f"coordinate descent did not converge in {max_iter} sweeps")
        iters = max(iters, it)
    coef = Bs / sd
    intercept = ymu - coef @ mu
    return LassoFit(intercept, coef, float(lam), iters)


def lambda_grid(X, Y, size: int = 50, ratio: float = 1e-4) -> np.ndarray:
    """Log-spaced grid from the smallest lambda that zeroes every coefficient."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    Xs, _, _ = _standardize(X)
    lam_max = float(np.max(np.abs(Xs.T @ (Y - Y.mean(axis=0)))) / len(X))
    if lam_max == 0:
        return np.array([0.0])
    return np.geomspace(lam_max, lam_max * ratio, size)


def lasso_cv(X, Y, lambdas=None, folds: int = 10, rng: np.random.Generator | None = None):
    """Choose lambda by k-fold CV on summed squared error, then refit on all rows.

    Returns ``(fit, cv_errors)``; ties go to the larger lambda.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    if lambdas is None:
        lambdas = lambda_grid(X, Y)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")
    n = len(X)
    if folds < 2 or folds > n:
        raise ValueError(f"folds must lie in [2, {n}]")
    perm = rng.permutation(n) if rng is not None else np.arange(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % folds
    errs = np.zeros(len(lambdas))
    for f in range(folds):
        train = fold_of != f
        test = ~train
        for i, lam in enumerate(lambdas):
            fit = lasso_fit(X[train], Y[train], lam)
            errs[i] += float(np.sum((Y[test] - fit.predict(X[test])) ** 2))
    best = int(np.argmin(errs))
    return lasso_fit(X, Y, lambdas[best]), dict(zip(lambdas.tolist(), errs.tolist()))
