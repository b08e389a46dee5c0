"""Exact simulation of Hawkes paths and interval censoring onto observation grids."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import optimize

from .process import EventPath, HawkesParams
from .rng import derive_seed
from .spline import _local_basis

# Time-varying backgrounds are bounded on windows of one tenth of a period.
N_WINDOWS = 10
BOUND_RTOL = 1e-10

_BG_CODES = {"constant": 0, "trig": 1, "spline": 2}


class ThinningBoundError(RuntimeError):
    """The dominating rate fell below the intensity at a candidate point."""


@dataclass(frozen=True)
class _BgArrays:
    kind: int
    coef: np.ndarray
    period: float
    ext: np.ndarray
    n: int
    order: int
    bounds: np.ndarray


def _bg_arrays(bg) -> _BgArrays:
    kind = _BG_CODES[bg.kind]
    if kind == 0:
        return _BgArrays(0, np.array([bg.nu, 0.0, 0.0]), 1.0, np.zeros(1), 0, 1,
                         np.array([bg.nu]))
    bounds = np.asarray(bg.window_bounds(N_WINDOWS), dtype=float)
    if kind == 1:
        return _BgArrays(1, np.array([bg.nu1, bg.nu2, bg.nu3]), float(bg.period),
                         np.zeros(1), 0, 1, bounds)
    sp = bg.basis
    return _BgArrays(2, bg.params.copy(), float(bg.period), sp.ext, sp.n, sp.order, bounds)


@njit(cache=True)
def _bg_rate(kind, coef, period, ext, n, order, t, loc):
    if kind == 0:
        return coef[0]
    if kind == 1:
        w = 2.0 * math.pi * t / period
        return coef[0] + coef[1] * math.sin(w) + coef[2] * math.cos(w)
    s = _local_basis(ext, n, order, period, t, loc)
    v = 0.0
    for r in range(order):
        v += coef[(s - order + 1 + r) % n] * loc[r]
    return v


@njit(cache=True)
def _window(kind, period, nwin, bounds, t, T):
    """End of the current bounding window and the background bound on it."""
    if kind == 0:
        return T, bounds[0]
    wlen = period / nwin
    widx = int(math.floor(t / wlen))
    w_end = (widx + 1) * wlen
    if w_end <= t:
        widx += 1
        w_end = (widx + 1) * wlen
    return w_end, bounds[widx % nwin]


@njit(cache=True)
def _grow(buf, n):
    if n < buf.size:
        return buf
    out = np.empty(2 * buf.size)
    out[:buf.size] = buf
    return out


@njit(cache=True)
def _thin_exponential(T, kind, coef, period, ext, n, order, bounds, nwin, eta, rate, seed):
    """Ogata thinning with the Markov state S(t) = sum_i exp(-rate (t - tau_i)).

    Returns (times, intensity at each accepted time, status); status 1 flags a
    violated dominating bound.
    """
    np.random.seed(seed)
    loc = np.empty(order)
    times = np.empty(64)
    lams = np.empty(64)
    m = 0
    t = 0.0
    S = 0.0
    while t < T:
        w_end, nub = _window(kind, period, nwin, bounds, t, T)
        M = nub + eta * rate * S
        cand = t + np.random.exponential(1.0 / M)
        if cand > w_end:
            S *= math.exp(-rate * (w_end - t))
            t = w_end
            continue
        if cand > T:
            break
        S *= math.exp(-rate * (cand - t))
        t = cand
        lam = _bg_rate(kind, coef, period, ext, n, order, t, loc) + eta * rate * S
        if lam > M * (1.0 + 1e-10):
            return times[:m], lams[:m], 1
        if np.random.random() * M <= lam:
            times = _grow(times, m)
            lams = _grow(lams, m)
            times[m] = t
            lams[m] = lam
            m += 1
            S += 1.0
    return times[:m], lams[:m], 0


@njit(cache=True)
def _immigrants(T, kind, coef, period, ext, n, order, bounds, nwin):
    loc = np.empty(order)
    times = np.empty(64)
    m = 0
    t = 0.0
    while t < T:
        w_end, nub = _window(kind, period, nwin, bounds, t, T)
        cand = t + np.random.exponential(1.0 / nub)
        if cand > w_end:
            t = w_end
            continue
        if cand > T:
            break
        t = cand
        lam = _bg_rate(kind, coef, period, ext, n, order, t, loc)
        if lam > nub * (1.0 + 1e-10):
            return times[:m], 1
        if np.random.random() * nub <= lam:
            times = _grow(times, m)
            times[m] = t
            m += 1
    return times[:m], 0


@njit(cache=True)
def _cluster_gamma(T, kind, coef, period, ext, n, order, bounds, nwin, eta, alpha, rate, seed):
    """Branching simulation: immigrants from the background, Poisson(eta) offspring per event."""
    np.random.seed(seed)
    imm, status = _immigrants(T, kind, coef, period, ext, n, order, bounds, nwin)
    if status != 0:
        return imm, status
    buf = np.empty(max(64, 2 * imm.size))
    buf[:imm.size] = imm
    m = imm.size
    i = 0
    scale = 1.0 / rate
    while i < m:
        parent = buf[i]
        k = np.random.poisson(eta)
        for _ in range(k):
            child = parent + np.random.gamma(alpha, scale)
            if child <= T:
                buf = _grow(buf, m)
                buf[m] = child
                m += 1
        i += 1
    out = np.sort(buf[:m])
    # shape < 1 offsets can fall below float resolution; separate ties by one ulp
    keep = out.size
    for j in range(1, out.size):
        if out[j] <= out[j - 1]:
            out[j] = np.nextafter(out[j - 1], np.inf)
            if out[j] > T:
                keep = j
                break
    return out[:keep], 0


@njit(cache=True)
def _gamma_logdens(s, alpha, rate, lgam):
    return alpha * math.log(rate) + (alpha - 1.0) * math.log(s) - rate * s - lgam


@njit(cache=True)
def _thin_gamma(T, kind, coef, period, ext, n, order, bounds, nwin, eta, alpha, rate,
                trunc, look, seed):
    """Ogata thinning for a Gamma kernel with ``alpha >= 1`` (bounded density).

    Excitation is summed directly over events younger than ``trunc``.  On each
    lookahead window each event's kernel term is bounded by the kernel's sup
    over the window (the density is unimodal).
    """
    np.random.seed(seed)
    loc = np.empty(order)
    lgam = math.lgamma(alpha)
    mode = (alpha - 1.0) / rate
    gmode = math.exp(_gamma_logdens(mode, alpha, rate, lgam)) if mode > 0 else rate
    times = np.empty(64)
    lams = np.empty(64)
    m = 0
    lo = 0
    t = 0.0
    while t < T:
        w_end, nub = _window(kind, period, nwin, bounds, t, T)
        if t + look < w_end:
            w_end = t + look
        while lo < m and t - times[lo] > trunc:
            lo += 1
        exc = 0.0
        for j in range(lo, m):
            a = t - times[j]
            b = w_end - times[j]
            if a <= mode <= b:
                exc += gmode
            elif b < mode:
                exc += math.exp(_gamma_logdens(b, alpha, rate, lgam))
            else:
                exc += math.exp(_gamma_logdens(a, alpha, rate, lgam)) if a > 0 else gmode
        M = nub + eta * exc
        cand = t + np.random.exponential(1.0 / M)
        if cand > w_end:
            t = w_end
            continue
        if cand > T:
            break
        t = cand
        lam = _bg_rate(kind, coef, period, ext, n, order, t, loc)
        for j in range(lo, m):
            s = t - times[j]
            if s <= trunc:
                lam += eta * math.exp(_gamma_logdens(s, alpha, rate, lgam))
        if lam > M * (1.0 + 1e-10):
            return times[:m], lams[:m], 1
        if np.random.random() * M <= lam:
            times = _grow(times, m)
            lams = _grow(lams, m)
            times[m] = t
            lams[m] = lam
            m += 1
    return times[:m], lams[:m], 0


def gamma_truncation(alpha: float, rate: float, rel: float = 1e-12) -> float:
    """Lag beyond the mode where the Gamma density falls below ``rel`` times its peak."""
    if alpha < 1:
        raise ValueError("truncation is defined for bounded densities (alpha >= 1)")
    mode = (alpha - 1.0) / rate

    def logd(s):
        return (alpha - 1.0) * np.log(s) - rate * s if alpha > 1 else -rate * s

    target = (logd(mode) if alpha > 1 else 0.0) + np.log(rel)
    hi = max(mode, 1.0 / rate) * 2
    while logd(hi) > target:
        hi *= 2
    return float(optimize.brentq(lambda s: logd(s) - target, max(mode, 1e-12), hi))


def simulate_path(params: HawkesParams, horizon: float, seed: int, *, method: str = "auto",
                  return_intensity: bool = False):
    """Simulate one path on ``(0, horizon]`` starting from an empty history.

    ``method`` is ``"thinning"`` or ``"cluster"``; ``"auto"`` uses thinning for
    exponential kernels and the branching construction for Gamma kernels.
    With ``return_intensity`` the thinning simulators also return the
    intensity they computed at each accepted event.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not params.eta < 1:
        raise ValueError("unstable process: eta >= 1")
    bg = _bg_arrays(params.background)
    kern = params.kernel
    if method == "auto":
        method = "thinning" if kern.kind == "exponential" else "cluster"
    seed32 = int(seed) % (2 ** 32)
    args = (float(horizon), bg.kind, bg.coef, bg.period, bg.ext, bg.n, bg.order, bg.bounds,
            N_WINDOWS)
    lams = None
    if kern.kind == "exponential":
        if method == "thinning":
            times, lams, status = _thin_exponential(*args, float(params.eta), float(kern.rate),
                                                    seed32)
        else:
            # exponential is Gamma with shape 1
            times, status = _cluster_gamma(*args, float(params.eta), 1.0, float(kern.rate),
                                           seed32)
    elif kern.kind == "gamma":
        if method == "thinning":
            if kern.alpha < 1:
                raise ValueError("thinning needs a bounded kernel density (alpha >= 1)")
            trunc = gamma_truncation(kern.alpha, kern.rate)
            look = 0.25 * kern.mean
            times, lams, status = _thin_gamma(*args, float(params.eta), float(kern.alpha),
                                              float(kern.rate), trunc, look, seed32)
        else:
            times, status = _cluster_gamma(*args, float(params.eta), float(kern.alpha),
                                           float(kern.rate), seed32)
    else:
        raise ValueError(f"unsupported kernel {kern.kind!r}")
    if status != 0:
        raise ThinningBoundError("dominating rate below the intensity during thinning")
    path = EventPath(times.copy(), float(horizon))
    if return_intensity:
        return path, (None if lams is None else lams.copy())
    return path


# ---------------------------------------------------------------------------
# Observation grids and censoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObservationGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a grid needs t_0 = 0 and at least one interval")
        if t[0] != 0.0:
            raise ValueError("grid must start at t_0 = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing")

    @property
    def K(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.times[1:] + self.times[:-1])

    def is_regular(self, rtol: float = 1e-9) -> bool:
        w = self.widths
        return bool(np.allclose(w, w[0], rtol=rtol, atol=0.0))

    def __eq__(self, other) -> bool:
        return isinstance(other, ObservationGrid) and np.array_equal(self.times, other.times)

    def to_dict(self) -> dict:
        if self.is_regular():
            return {"horizon": self.horizon, "width": float(self.widths[0])}
        return {"times": self.times.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationGrid":
        if "times" in d:
            return cls(np.asarray(d["times"], dtype=float))
        return make_grid(float(d["horizon"]), d["width"] if "width" in d else d["widths"])


@dataclass(frozen=True, eq=False)
class CountSeries:
    grid: ObservationGrid
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.size != self.grid.K:
            raise ValueError(f"expected {self.grid.K} counts, got {c.size}")
        if c.size and (np.any(c < 0) or np.any(c != np.round(c))):
            raise ValueError("counts must be nonnegative integers")
        object.__setattr__(self, "counts", np.ascontiguousarray(c, dtype=np.int64))

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        return (isinstance(other, CountSeries) and self.grid == other.grid
                and np.array_equal(self.counts, other.counts))


def make_grid(T: float, widths) -> ObservationGrid:
    """Grid from a constant width ``Δ`` (must divide ``T``) or a width pattern.

    A width sequence is tiled cyclically until it reaches ``T`` exactly, so
    ``make_grid(1000, (0.25, 0.75))`` alternates the two widths.
    """
    T = float(T)
    if not T > 0:
        raise ValueError("T must be positive")
    tol = 1e-9 * max(1.0, T)
    w = np.atleast_1d(np.asarray(widths, dtype=float))
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("interval widths must be positive")
    if w.size == 1:
        K = int(round(T / w[0]))
        if K < 1 or abs(K * w[0] - T) > tol:
            raise ValueError(f"width {w[0]} does not divide T = {T}")
        return ObservationGrid(np.linspace(0.0, T, K + 1))
    cycle = w.sum()
    reps = int(np.ceil((T - tol) / cycle))
    full = np.tile(w, max(reps, 1))
    edges = np.concatenate([[0.0], np.cumsum(full)])
    K = int(np.searchsorted(edges, T - tol))
    if abs(edges[K] - T) > tol:
        raise ValueError(f"widths do not sum to T = {T}")
    edges = edges[:K + 1]
    edges[-1] = T
    return ObservationGrid(edges)


def censor(path: EventPath, grid: ObservationGrid) -> CountSeries:
    """Counts on the half-open intervals ``(t_{k-1}, t_k]``."""
    if abs(grid.horizon - path.horizon) > 1e-9 * max(1.0, path.horizon):
        raise ValueError(f"grid ends at {grid.horizon} but the path horizon is {path.horizon}")
    cum = np.searchsorted(path.times, grid.times, side="right")
    cum[0] = 0
    return CountSeries(grid, np.diff(cum))


def simulate_counts(params: HawkesParams, grid: ObservationGrid, seed: int) -> CountSeries:
    return censor(simulate_path(params, grid.horizon, seed), grid)


def replicate_seed(master_seed: int, *key) -> int:
    """Simulation seed for one replicate, ``(master_seed, *key)`` split."""
    return derive_seed(master_seed, *key)
