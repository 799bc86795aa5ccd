"""LASSO regression by cyclic coordinate descent.

Objective, on internally standardized features ``z`` (zero mean, unit
population variance) with an unpenalized intercept::

    (1 / 2n) * ||y - mean(y) - Z beta||^2 + lam * ||beta||_1

Returned coefficients are mapped back to original feature units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stereogate.dataset import kfold_plan


@dataclass(frozen=True, eq=False)
class LassoModel:
    coefficients: np.ndarray
    intercept: float
    lam: float
    means: np.ndarray
    scales: np.ndarray
    std_coefficients: np.ndarray
    n_iter: int = 0
    converged: bool = True

    @property
    def n_features(self):
        return len(self.coefficients)

    @property
    def n_nonzero(self):
        return int(np.count_nonzero(self.std_coefficients))

    def predict(self, X):
        return predict_lasso(self, X)


def soft_threshold(x, t):
    return np.sign(x) * max(abs(x) - t, 0.0)


def _standardize(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per target")
    if len(y) == 0:
        raise ValueError("cannot fit LASSO on zero records")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("LASSO inputs must be finite")
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    # constant columns (relative to their magnitude) stay at zero
    tiny = 1e-12 * np.maximum(1.0, np.abs(means))
    active = scales > tiny
    Z = np.zeros_like(X)
    Z[:, active] = (X[:, active] - means[active]) / scales[active]
    scales = np.where(active, scales, 0.0)
    return Z, y - y.mean(), means, scales, float(y.mean()), active


def lambda_max(X, y):
    """Smallest lambda at which every standardized coefficient is zero."""
    Z, yc, *_ = _standardize(X, y)
    return float(np.max(np.abs(Z.T @ yc)) / len(yc)) if Z.shape[1] else 0.0


def _coordinate_descent(G, c, lam, beta, tol, max_iter, active):
    """Minimize 0.5 b'Gb - c'b + lam |b|_1 in place.

    ``g = c - G beta`` is maintained incrementally.  A full sweep converges
    when the summed absolute coefficient change is below ``tol`` (this also
    bounds the largest single change and every KKT residual by ``tol``).
    Between full sweeps, sweeps run over the current nonzero set only.
    """
    g = c - G @ beta
    coords = np.flatnonzero(active).tolist()
    cols = [G[:, j].copy() for j in range(len(beta))]
    diag = G.diagonal().tolist()
    b = beta.tolist()
    n_sweeps = 0

    def sweep(idx):
        total = 0.0
        for j in idx:
            old = b[j]
            rho = float(g[j]) + diag[j] * old
            if rho > lam:
                new = (rho - lam) / diag[j]
            elif rho < -lam:
                new = (rho + lam) / diag[j]
            else:
                new = 0.0
            if new != old:
                delta = new - old
                b[j] = new
                g[:] -= cols[j] * delta
                total += abs(delta)
        return total

    converged = False
    while n_sweeps < max_iter:
        n_sweeps += 1
        if sweep(coords) < tol:
            converged = True
            break
        while n_sweeps < max_iter:
            n_sweeps += 1
            if sweep([j for j in coords if b[j] != 0.0]) < tol:
                break
    beta[:] = b
    return n_sweeps, converged


def fit_lasso_arrays(X, y, lam, tol=1e-7, max_iter=10_000, warm_start=None):
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be finite and non-negative, got {lam}")
    Z, yc, means, scales, ybar, active = _standardize(X, y)
    n = len(yc)
    G = Z.T @ Z / n
    c = Z.T @ yc / n
    beta = np.zeros(Z.shape[1]) if warm_start is None else np.array(warm_start, float)
    beta[~active] = 0.0
    n_iter, converged = _coordinate_descent(G, c, float(lam), beta, tol, max_iter, active)
    coef = np.zeros_like(beta)
    coef[active] = beta[active] / scales[active]
    intercept = ybar - float(coef @ means)
    return LassoModel(
        coefficients=coef,
        intercept=intercept,
        lam=float(lam),
        means=means,
        scales=scales,
        std_coefficients=beta,
        n_iter=n_iter,
        converged=converged,
    )


def fit_lasso(ds, lam, tol=1e-7, max_iter=10_000):
    """Fit LASSO on every feature column of ``ds``."""
    if len(ds) < 2:
        raise ValueError("LASSO needs at least 2 records")
    return fit_lasso_arrays(ds.X, ds.y, lam, tol, max_iter)


def kkt_residuals(model, X, y):
    """Per-coordinate KKT violation in standardized coordinates.

    For a nonzero coefficient this is ``|z_j'r/n - lam*sign(beta_j)|``; for a
    zero one it is ``max(|z_j'r/n| - lam, 0)``.
    """
    Z, yc, *_ = _standardize(X, y)
    r = yc - Z @ model.std_coefficients
    grad = Z.T @ r / len(yc)
    b = model.std_coefficients
    return np.where(
        b != 0,
        np.abs(grad - model.lam * np.sign(b)),
        np.maximum(np.abs(grad) - model.lam, 0.0),
    )


def lambda_grid(X, y, n_lambdas=50, ratio=1e-4):
    """Log-spaced grid from lambda_max down to lambda_max * ratio (descending)."""
    top = lambda_max(X, y)
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, n_lambdas)


def lasso_path(X, y, grid, tol=1e-7, max_iter=10_000):
    """Warm-started fits along a descending lambda grid."""
    models, warm = [], None
    for lam in grid:
        m = fit_lasso_arrays(X, y, lam, tol, max_iter, warm_start=warm)
        warm = m.std_coefficients
        models.append(m)
    return models


def select_lambda(ds, grid=None, folds=5, seed=0, tol=1e-7, max_iter=10_000):
    """Pick lambda by k-fold validation MSE.

    Returns ``(lambda, cv_mse)`` with ``cv_mse`` aligned to the (descending)
    grid.  Ties go to the larger lambda.
    """
    X, y = ds.X, ds.y
    if grid is None:
        grid = lambda_grid(X, y)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any(np.diff(grid) > 0):
        raise ValueError("lambda grid must be sorted in descending order")
    if folds > len(ds):
        raise ValueError(f"folds={folds} exceeds record count {len(ds)}")
    if grid.size == 1:
        return float(grid[0]), np.array([np.nan])
    sse = np.zeros(grid.size)
    plan = kfold_plan(len(ds), folds, 1, seed)
    for train, test in plan:
        for i, m in enumerate(lasso_path(X[train], y[train], grid, tol, max_iter)):
            resid = y[test] - predict_lasso(m, X[test])
            sse[i] += float(resid @ resid)
    cv_mse = sse / len(ds)
    best = int(np.flatnonzero(cv_mse == cv_mse.min())[0])
    return float(grid[best]), cv_mse


def predict_lasso(m, features):
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    X = np.ascontiguousarray(np.atleast_2d(x))
    if X.shape[1] != m.n_features:
        raise ValueError(
            f"feature length {X.shape[1]} does not match training schema ({m.n_features})"
        )
    # row-wise reduction keeps each row's result independent of batch shape
    out = (X * m.coefficients).sum(axis=1) + m.intercept
    return float(out[0]) if single else out
