"""Full-covariance Gaussian mixtures fit by EM, with BIC model selection.

Densities are evaluated in log space through Cholesky factors and combined
with a max-shifted log-sum-exp.  Every M-step adds ``reg`` to the covariance
diagonals, so all stored covariances have eigenvalues of at least ``reg``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from stereogate.seeding import make_rng

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmConfig:
    max_iter: int = 500
    tol: float = 1e-6
    restarts: int = 5
    seed: int = 0
    reg: float = 1e-6


@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    feature_names: tuple = ()
    log_likelihood: float = float("nan")
    n_iter: int = 0
    converged: bool = True
    degenerate: bool = False
    # per-restart log-likelihood traces; diagnostics only, not persisted
    histories: tuple = field(default=(), repr=False)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_parameters(self):
        k, d = self.n_components, self.dim
        return (k - 1) + k * d + k * d * (d + 1) // 2

    @cached_property
    def _cholesky(self):
        chol = np.linalg.cholesky(self.covariances)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        return chol, logdet

    def component_log_pdf(self, X):
        """(n, k) matrix of log N(x_i; mean_c, cov_c)."""
        X = _as_rows(X, self.dim)
        chol, logdet = self._cholesky
        out = np.empty((len(X), self.n_components))
        for c in range(self.n_components):
            maha = np.zeros(len(X))
            for sol in _forward_solve(chol[c], X - self.means[c]):
                maha += sol * sol
            out[:, c] = -0.5 * (self.dim * LOG_2PI + logdet[c] + maha)
        return out


def _forward_solve(L, B):
    """Columns of ``L^-1 B'`` for lower-triangular ``L`` and rows ``B``.

    Written as an explicit substitution so every row is processed with the
    same operation order whatever the batch size.
    """
    cols = []
    for i in range(L.shape[0]):
        acc = B[:, i].copy()
        for j in range(i):
            acc -= L[i, j] * cols[j]
        cols.append(acc / L[i, i])
    return cols


def _as_rows(X, dim):
    X = np.asarray(X, dtype=float)
    X = X.reshape(1, -1) if X.ndim == 1 else X
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected {dim}-dimensional points, got shape {X.shape}")
    return X


def logsumexp_rows(a):
    m = a.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def _weighted_log_pdf(m, X):
    with np.errstate(divide="ignore"):
        return m.component_log_pdf(X) + np.log(m.weights)


def log_density(m, x):
    """ln sum_c w_c N(x; mu_c, Sigma_c); scalar for one point, array for rows."""
    single = np.asarray(x).ndim == 1
    out = logsumexp_rows(_weighted_log_pdf(m, x))
    return float(out[0]) if single else out


def responsibilities(m, X):
    """E-step posteriors, each row summing to 1."""
    wl = _weighted_log_pdf(m, X)
    return np.exp(wl - logsumexp_rows(wl)[:, None])


def total_log_likelihood(m, X):
    return float(logsumexp_rows(_weighted_log_pdf(m, X)).sum())


def bic(m, X):
    """-2 lnL + n_params ln n, full covariances."""
    X = _as_rows(X, m.dim)
    return -2.0 * total_log_likelihood(m, X) + m.n_parameters * math.log(len(X))


def _kmeanspp_centers(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _m_step(X, resp, reg):
    n, d = X.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    covs = np.empty((len(nk), d, d))
    for c in range(len(nk)):
        diff = X - means[c]
        cov = (resp[:, c][:, None] * diff).T @ diff / nk[c]
        cov = 0.5 * (cov + cov.T)
        cov[np.diag_indices(d)] += reg
        covs[c] = cov
    return weights, means, covs


def _em_run(X, k, cfg, rng, names):
    n, d = X.shape
    centers = _kmeanspp_centers(X, k, rng)
    # hard assignment to the nearest seed center, then a regular M-step
    dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, k))
    resp[np.arange(n), dist.argmin(axis=1)] = 1.0
    weights, means, covs = _m_step(X, resp, cfg.reg)
    empty = resp.sum(axis=0) == 0
    means[empty] = centers[empty]
    if empty.any():
        glob = np.atleast_2d(np.cov(X, rowvar=False, bias=True)) + cfg.reg * np.eye(d)
        covs[empty] = glob
    history = []
    converged = False
    model = None
    for it in range(cfg.max_iter):
        candidate = GmmModel(weights, means, covs, names)
        wl = _weighted_log_pdf(candidate, X)
        lse = logsumexp_rows(wl)
        ll = float(lse.sum())
        if history and ll < history[-1]:
            # the reg shift makes the M-step inexact; never accept a step
            # that lowers the likelihood, keep the previous model and stop
            converged = True
            break
        model = candidate
        history.append(ll)
        if it > 0 and (ll - history[-2]) / n < cfg.tol:
            converged = True
            break
        resp = np.exp(wl - lse[:, None])
        weights, means, covs = _m_step(X, resp, cfg.reg)
    return model, history, converged


def fit_gmm(X, k, cfg=GmmConfig(), feature_names=()):
    """Best-of-restarts EM fit of a ``k``-component mixture.

    Each restart seeds centers k-means++ style from its own derived stream,
    then iterates E/M steps until the per-sample log-likelihood gain drops
    below ``cfg.tol``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    if not np.all(np.isfinite(X)):
        raise ValueError("GMM inputs must be finite")
    if feature_names and len(feature_names) != d:
        raise ValueError("feature_names length does not match data dimension")
    degenerate = len(np.unique(X, axis=0)) < k
    if degenerate:
        warnings.warn(
            f"only {len(np.unique(X, axis=0))} distinct rows for k={k}; "
            "components will coincide",
            RuntimeWarning,
            stacklevel=2,
        )
    best, histories = None, []
    for r in range(max(1, cfg.restarts)):
        rng = make_rng(cfg.seed, "gmm", k, r)
        model, history, converged = _em_run(X, k, cfg, rng, tuple(feature_names))
        histories.append(tuple(history))
        if best is None or history[-1] > best[1][-1]:
            best = (model, history, converged)
    model, history, converged = best
    return GmmModel(
        model.weights,
        model.means,
        model.covariances,
        tuple(feature_names),
        log_likelihood=history[-1],
        n_iter=len(history),
        converged=converged,
        degenerate=degenerate,
        histories=tuple(histories),
    )


def select_components(X, k_range, cfg=GmmConfig(), feature_names=()):
    """Fit every k in ``k_range`` and keep the lowest-BIC model.

    Returns ``(model, table)`` with ``table`` a list of ``(k, bic)`` in
    ``k_range`` order.  Ties go to the smaller k.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if ks[-1] > len(X):
        raise ValueError(f"max k={ks[-1]} exceeds the number of rows ({len(X)})")
    table, best = [], None
    for k in ks:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = fit_gmm(X, k, cfg, feature_names)
        score = bic(m, X)
        table.append((k, score))
        if best is None or score < best[1]:
            best = (m, score)
    return best[0], table
