"""Gaussian log-densities and mixture EM shared by classifiers and HMM states."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2 * np.pi)


def log_gauss_diag(X, means, variances):
    """Log N(x; mu_k, diag(var_k)) for all rows of X and all k, shape (n, K)."""
    X = np.atleast_2d(X)
    means = np.atleast_2d(means)
    variances = np.atleast_2d(variances)
    prec = 1.0 / variances
    const = -0.5 * (means.shape[1] * LOG_2PI + np.log(variances).sum(axis=1) + (means**2 * prec).sum(axis=1))
    return const[None, :] - 0.5 * (X**2) @ prec.T + X @ (means * prec).T


def log_gauss_full(X, mean, cov):
    """Log N(x; mean, cov) for each row of X."""
    X = np.atleast_2d(X)
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (X - mean).T)
    logdet = 2 * np.log(np.diag(L)).sum()
    return -0.5 * (X.shape[1] * LOG_2PI + logdet + (z**2).sum(axis=0))


def floor_covariance(S, floor):
    """Maximum-likelihood covariance subject to ``cov >= diag(floor)`` (Loewner order).

    In coordinates whitened by the floor the constraint is ``cov >= I``, whose
    constrained maximiser clips the eigenvalues of the sample covariance at 1.
    """
    f = np.sqrt(floor)
    W = S / np.outer(f, f)
    W = 0.5 * (W + W.T)
    vals, vecs = np.linalg.eigh(W)
    if vals.min() >= 1.0:
        return 0.5 * (S + S.T)
    C = (vecs * np.maximum(vals, 1.0)) @ vecs.T
    return C * np.outer(f, f)


@dataclass
class FullGmm:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    loglik_trace: list = field(default_factory=list)

    @property
    def n_components(self):
        return len(self.weights)

    def component_logpdf(self, X):
        X = np.atleast_2d(X)
        return np.stack([np.log(w) + log_gauss_full(X, m, c)
                         for w, m, c in zip(self.weights, self.means, self.covs)], axis=1)

    def logpdf(self, X):
        return logsumexp(self.component_logpdf(X), axis=1)


def _split_full(g: FullGmm, scale=0.2) -> FullGmm:
    """Double the heaviest component along its principal axis."""
    k = int(np.argmax(g.weights))
    vals, vecs = np.linalg.eigh(g.covs[k])
    off = scale * np.sqrt(vals[-1]) * vecs[:, -1]
    weights = np.concatenate([g.weights, [g.weights[k] / 2]])
    weights[k] /= 2
    means = np.vstack([g.means, g.means[k] + off])
    means[k] = g.means[k] - off
    covs = np.concatenate([g.covs, g.covs[k][None]], axis=0)
    return FullGmm(weights, means, covs, list(g.loglik_trace))


def fit_full_gmm(X, n_components: int, floor, max_iter: int = 100, tol: float = 1e-8) -> FullGmm:
    """EM for a full-covariance mixture, initialised by deterministic binary splitting.

    ``loglik_trace`` records the total data log-likelihood before each M-step
    of the final stage, plus the value at the returned parameters.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    mean = X.mean(axis=0)
    cov = floor_covariance(np.cov(X.T, bias=True).reshape(d, d), floor)
    g = FullGmm(np.ones(1), mean[None], cov[None])
    while True:
        g.loglik_trace = []
        prev = -np.inf
        for _ in range(max_iter):
            comp = g.component_logpdf(X)
            ll_rows = logsumexp(comp, axis=1)
            ll = float(ll_rows.sum())
            g.loglik_trace.append(ll)
            if ll - prev < tol * max(1.0, abs(ll)):
                break
            prev = ll
            resp = np.exp(comp - ll_rows[:, None])
            occ = resp.sum(axis=0)
            live = occ > 1e-10
            resp, occ = resp[:, live], occ[live]
            weights = occ / n
            means = (resp.T @ X) / occ[:, None]
            covs = []
            for k in range(len(occ)):
                diff = X - means[k]
                S = (resp[:, k, None] * diff).T @ diff / occ[k]
                covs.append(floor_covariance(S, floor))
            g = FullGmm(weights, means, np.array(covs), g.loglik_trace)
        if g.n_components >= n_components:
            return g
        g = _split_full(g)


# ---------------------------------------------------------------------------
# diagonal mixtures used inside HMM states


def diag_mixture_logpdf(X, weights, means, variances):
    """Per-frame mixture log-density and per-component joint log terms."""
    comp = np.log(weights)[None, :] + log_gauss_diag(X, means, variances)
    return logsumexp(comp, axis=1), comp


def split_diag(weights, means, variances, scale=0.2):
    """Split every component in two, offsetting means by ``+-scale`` std."""
    off = scale * np.sqrt(variances)
    return (
        np.concatenate([weights / 2, weights / 2]),
        np.concatenate([means - off, means + off]),
        np.concatenate([variances, variances]),
    )
