"""Uniform imputation of latent event times and the resulting naive MLE."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mle import FitResult, fit_mle
from .process import BackgroundFamily, EventPath, ModelFamily
from .simulate import CountSeries


def impute_path(counts: CountSeries, seed: int) -> EventPath:
    """Place ``n_k`` ordered uniform points on each interval ``(t_{k-1}, t_k]``."""
    grid = counts.grid
    n = counts.counts
    total = int(n.sum())
    rng = np.random.default_rng(seed)
    if total == 0:
        return EventPath(np.zeros(0), grid.horizon)
    left = np.repeat(grid.times[:-1], n)
    width = np.repeat(grid.widths, n)
    # 1 - U lies in (0, 1], matching the half-open interval
    times = np.sort(left + (1.0 - rng.random(total)) * width)
    # intervals are disjoint, so the global sort keeps each block in its own bin;
    # exact ties (probability zero, but possible in floating point) are split by one ulp
    dup = np.flatnonzero(np.diff(times) <= 0)
    for j in dup:
        times[j + 1] = np.nextafter(times[j], np.inf)
    return EventPath(times, grid.horizon)


@dataclass(frozen=True)
class ImputationEstimate:
    theta: np.ndarray
    fit: FitResult

    @property
    def converged(self) -> bool:
        return self.fit.converged


def imputation_estimate(counts: CountSeries, background: BackgroundFamily,
                        seed: int) -> ImputationEstimate:
    """Exponential-kernel MLE on a uniformly imputed path.

    The exponential kernel is fitted whatever the data-generating kernel is,
    so the vector has ``len(theta_nu) + 2`` coordinates.
    """
    if counts.total <= 0:
        raise ValueError("imputation estimate needs at least one event")
    path = impute_path(counts, seed)
    fit = fit_mle(path, counts.grid.horizon, ModelFamily(background, "exponential"))
    return ImputationEstimate(fit.params.vector, fit)
