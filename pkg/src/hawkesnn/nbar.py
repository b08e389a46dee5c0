"""Negative-binomial autoregression NBAR(p) with exposure offsets.

Given the first ``p`` observations, each count is modelled as

    N_k | past ~ NB(delta / (delta + mu_k), delta),
    log mu_k = offset_k + gamma_0 + sum_i gamma_i * x_{k-i},

i.e. a Poisson count with a Gamma(delta, delta) multiplicative frailty, so
``Var(N_k | past) = mu_k + mu_k**2 / delta``.  The lagged covariates ``x`` are
the counts scaled by the same exposure used in the offset.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .process import background_volume
from .simulate import CountSeries

LOG_DELTA_BOUNDS = (-10.0, 15.0)
OFFSET_MODES = ("unit", "interval-width", "background-volume")


@dataclass(frozen=True)
class NbarFit:
    gamma: np.ndarray
    delta: float
    loglik: float
    converged: bool

    @property
    def p(self) -> int:
        return self.gamma.size - 1


def lag_matrix(regressors: np.ndarray, p: int) -> np.ndarray:
    """Design matrix with rows ``k = p .. K-1``: ``[1, x_{k-1}, ..., x_{k-p}]``."""
    x = np.asarray(regressors, dtype=float)
    K = x.size
    X = np.empty((K - p, p + 1))
    X[:, 0] = 1.0
    for i in range(1, p + 1):
        X[:, i] = x[p - i:K - i]
    return X


def _nb_terms(n, log_mu, delta):
    mu = np.exp(log_mu)
    return (special.gammaln(n + delta) - special.gammaln(delta) - special.gammaln(n + 1.0)
            - delta * np.log1p(mu / delta) + n * (log_mu - np.log(delta + mu)))


def nb_loglik(gamma, delta, counts, offsets, regressors, p: int) -> float:
    """Conditional NBAR(p) log-likelihood of ``counts[p:]``."""
    if not delta > 0:
        raise ValueError("dispersion must be positive")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.size != p + 1:
        raise ValueError(f"expected {p + 1} coefficients, got {gamma.size}")
    n = np.asarray(counts, dtype=float)[p:]
    log_mu = np.asarray(offsets, dtype=float)[p:] + lag_matrix(regressors, p) @ gamma
    with np.errstate(over="ignore", invalid="ignore"):
        v = float(np.sum(_nb_terms(n, log_mu, float(delta))))
    return v if np.isfinite(v) else -np.inf


def exposures(counts: CountSeries, offset_mode: str, background=None) -> np.ndarray:
    """Per-interval exposure: 1, the width, or the midpoint background volume."""
    grid = counts.grid
    if offset_mode == "unit":
        return np.ones(counts.K)
    if offset_mode == "interval-width":
        return grid.widths
    if offset_mode == "background-volume":
        if background is None:
            raise ValueError("background-volume offsets need a background rate")
        return np.asarray(background_volume(background, grid.times[:-1], grid.times[1:]))
    raise ValueError(f"unknown offset mode {offset_mode!r}")


class _Objective:
    def __init__(self, n, offsets, X):
        self.n = n
        self.off = offsets
        self.X = X

    def __call__(self, z):
        gamma, delta = z[:-1], float(np.exp(z[-1]))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            log_mu = self.off + self.X @ gamma
            mu = np.exp(log_mu)
            n = self.n
            ll = float(np.sum(_nb_terms(n, log_mu, delta)))
            if not np.isfinite(ll):
                return 1e100, np.zeros_like(z)
            r = delta * (n - mu) / (delta + mu)
            g_gamma = self.X.T @ r
            g_logd = delta * float(np.sum(
                special.digamma(n + delta) - special.digamma(delta) - np.log1p(mu / delta)
                + 1.0 - (n + delta) / (delta + mu)))
        return -ll, -np.concatenate([g_gamma, [g_logd]])


def fit_nbar(counts: CountSeries, p: int, offset_mode: str = "unit",
             background=None) -> NbarFit:
    """Maximum-likelihood NBAR(p) fit over ``(gamma_0..gamma_p, log delta)``."""
    if p < 0:
        raise ValueError("lag count must be nonnegative")
    K = counts.K
    if K <= p + (p + 2):
        raise ValueError(f"need more than {2 * p + 2} observations for NBAR({p}), got {K}")
    expo = exposures(counts, offset_mode, background)
    if np.any(expo <= 0):
        raise ValueError("exposures must be positive")
    n_all = counts.counts.astype(float)
    offsets = np.log(expo)
    regressors = n_all / expo
    n = n_all[p:]
    X = lag_matrix(regressors, p)
    level = n.sum() / expo[p:].sum()
    gamma0 = np.log(level) if level > 0 else np.log(0.5 / expo[p:].sum())
    if np.ptp(n_all) == 0:
        gamma = np.zeros(p + 1)
        gamma[0] = gamma0
        delta = float(np.exp(LOG_DELTA_BOUNDS[1]))
        ll = nb_loglik(gamma, delta, n_all, offsets, regressors, p)
        return NbarFit(gamma, delta, ll, False)
    obj = _Objective(n, offsets[p:], X)
    z0 = np.zeros(p + 2)
    z0[0] = gamma0
    bounds = [(None, None)] * (p + 1) + [LOG_DELTA_BOUNDS]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(obj, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 2000, "ftol": 1e-13, "gtol": 1e-7})
    f, g = obj(res.x)
    gscale = max(1.0, float(np.sqrt(n.size)))
    interior = LOG_DELTA_BOUNDS[0] < res.x[-1] < LOG_DELTA_BOUNDS[1]
    gmax = float(np.max(np.abs(g if interior else g[:-1])))
    converged = bool(f < 1e99 and gmax <= 1e-3 * gscale)
    return NbarFit(res.x[:-1].copy(), float(np.exp(res.x[-1])), float(-f), converged)
