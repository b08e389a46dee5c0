"""Continuous-path log-likelihood and maximum-likelihood fitting."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import optimize, special

from .process import EventPath, HawkesParams, ModelFamily

LOGIT_BOUND = 15.0
LOG_BOUND = 20.0
GRAD_TOL = 1e-2
PENALTY = 1e3
MAX_ITER = 2000
# exp(-x) below this is zero to double precision; skipping avoids the slow subnormal path
UNDERFLOW = 700.0
# exp(-x) below this is under 1e-18, so 1 - exp(-x) == 1 and x exp(-x) is negligible
SATURATED = 41.0


@dataclass(frozen=True)
class FitResult:
    params: HawkesParams
    loglik: float
    converged: bool
    iterations: int
    grad_norm: float = float("nan")


# ---------------------------------------------------------------------------
# Direct O(n^2) evaluation (any kernel)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _direct_exp_sum(times, nu_at, eta, rate):
    n = times.size
    ll = 0.0
    for i in range(n):
        exc = 0.0
        for j in range(i - 1, -1, -1):
            s = times[i] - times[j]
            if rate * s > 73.7:
                break
            exc += rate * math.exp(-rate * s)
        lam = nu_at[i] + eta * exc
        if lam <= 0.0:
            return -np.inf
        ll += math.log(lam)
    return ll


@njit(cache=True)
def _direct_gamma_sum(times, nu_at, eta, alpha, rate, cutoff):
    n = times.size
    ll = 0.0
    c = alpha * math.log(rate) - math.lgamma(alpha)
    for i in range(n):
        exc = 0.0
        for j in range(i - 1, -1, -1):
            s = times[i] - times[j]
            if s > cutoff:
                break
            if s > 0.0:
                exc += math.exp(c + (alpha - 1.0) * math.log(s) - rate * s)
        lam = nu_at[i] + eta * exc
        if lam <= 0.0:
            return -np.inf
        ll += math.log(lam)
    return ll


@njit(cache=True)
def _gamma_loglik_grad_sum(times, Phi, theta_nu, eta, alpha, rate, psi_alpha, cutoff):
    """Event-term sum and its gradient w.r.t. (theta_nu, eta, alpha, rate)."""
    n = times.size
    q = theta_nu.size
    g = np.zeros(q + 3)
    ll = 0.0
    logr = math.log(rate)
    c = alpha * logr - math.lgamma(alpha)
    for i in range(n):
        exc = 0.0
        da = 0.0
        db = 0.0
        for j in range(i - 1, -1, -1):
            s = times[i] - times[j]
            if s > cutoff:
                break
            if s > 0.0:
                ls = math.log(s)
                gv = math.exp(c + (alpha - 1.0) * ls - rate * s)
                exc += gv
                da += gv * (logr + ls - psi_alpha)
                db += gv * (alpha / rate - s)
        nu = 0.0
        for r in range(q):
            nu += theta_nu[r] * Phi[i, r]
        lam = nu + eta * exc
        if not lam > 0.0:
            return -np.inf, g
        ll += math.log(lam)
        inv = 1.0 / lam
        for r in range(q):
            g[r] += Phi[i, r] * inv
        g[q] += exc * inv
        g[q + 1] += eta * da * inv
        g[q + 2] += eta * db * inv
    return ll, g


class _GammaData:
    def __init__(self, path: EventPath, T: float, background):
        self.times = path.times
        self.T = float(T)
        if self.times.size:
            self.Phi = np.ascontiguousarray(background.design(self.times), dtype=float)
        else:
            self.Phi = np.zeros((0, background.params.size))
        self.Ibg = np.asarray(background.integral_design(0.0, self.T), dtype=float)
        self.rem = self.T - self.times

    def _comp(self, alpha, rate):
        return float(np.sum(special.gammainc(alpha, rate * self.rem)))

    def __call__(self, theta_nu, eta, alpha, scale):
        ll, g = self._rate_form(theta_nu, eta, alpha, 1.0 / scale)
        g[-1] *= -1.0 / scale ** 2
        return ll, g

    def _rate_form(self, theta_nu, eta, alpha, rate):
        theta_nu = np.asarray(theta_nu, dtype=float)
        ll, g = _gamma_loglik_grad_sum(self.times, self.Phi, theta_nu, float(eta), float(alpha),
                                       float(rate), float(special.digamma(alpha)),
                                       _gamma_cutoff(alpha, rate))
        if not np.isfinite(ll):
            return ll, g
        q = theta_nu.size
        F = self._comp(alpha, rate)
        ll -= theta_nu @ self.Ibg + eta * F
        g[:q] -= self.Ibg
        g[q] -= F
        h = 1e-6 * max(1.0, alpha)
        g[q + 1] -= eta * (self._comp(alpha + h, rate) - self._comp(alpha - h, rate)) / (2 * h)
        x = rate * self.rem
        dens = np.exp((alpha - 1.0) * np.log(np.where(x > 0, x, 1.0)) - x - special.gammaln(alpha))
        dens = np.where(x > 0, dens, 0.0)
        g[q + 2] -= eta * float(np.sum(self.rem * dens))
        return float(ll), g


def loglik_gamma_grad(params: HawkesParams, path: EventPath, T: float):
    """Gamma-kernel log-likelihood and gradient in the natural parameter order."""
    if params.kernel.kind != "gamma":
        raise ValueError("needs a Gamma kernel")
    k = params.kernel
    return _GammaData(path, T, params.background)(params.background.params, params.eta,
                                                  k.alpha, k.beta)


def _gamma_cutoff(alpha: float, rate: float) -> float:
    # lag past which the density is below 1e-16 * rate (its natural scale)
    target = math.log(1e-16 * rate)
    c = alpha * math.log(rate) - special.gammaln(alpha)

    def logd(s):
        return c + (alpha - 1.0) * math.log(s) - rate * s

    lo = max((alpha - 1.0) / rate, 1e-12)
    hi = max(lo, 1.0 / rate) * 2.0
    while logd(hi) > target:
        hi *= 2.0
    if logd(lo) <= target:
        return lo
    return float(optimize.brentq(lambda s: logd(s) - target, lo, hi))


def _check_inputs(params: HawkesParams, path: EventPath, T: float):
    if not np.isfinite(T) or T <= 0:
        raise ValueError("T must be positive and finite")
    if not np.all(np.isfinite(params.vector)):
        raise ValueError("parameters contain NaN or inf")
    if path.times.size and path.times[-1] > T:
        raise ValueError("path has events after T")


def loglik_continuous(params: HawkesParams, path: EventPath, T: float) -> float:
    """``sum_i log lambda(tau_i) - int_0^T lambda`` by direct summation over pairs."""
    _check_inputs(params, path, T)
    times = path.times
    bg = params.background
    nu_at = np.asarray(bg.rate(times), dtype=float) if times.size else np.zeros(0)
    k = params.kernel
    if k.kind == "exponential":
        s = _direct_exp_sum(times, nu_at, params.eta, k.rate)
    else:
        s = _direct_gamma_sum(times, nu_at, params.eta, k.alpha, k.rate,
                              _gamma_cutoff(k.alpha, k.rate))
    comp = bg.integral(0.0, T) + params.eta * float(np.sum(k.cdf(T - times)))
    return float(s - comp)


# ---------------------------------------------------------------------------
# Linear-time recursion for the exponential kernel, with gradient
# ---------------------------------------------------------------------------

@njit(cache=True)
def _exp_loglik_grad(times, Phi, Ibg, theta_nu, eta, rate, T):
    """Log-likelihood and gradient w.r.t. (theta_nu, eta, rate).

    Uses A_i = e^{-rate d_i}(1 + A_{i-1}) and the companion
    B_i = sum_{j<i}(tau_i - tau_j) e^{-rate(tau_i - tau_j)}.
    """
    n = times.size
    q = theta_nu.size
    g = np.zeros(q + 2)
    ll = 0.0
    A = 0.0
    B = 0.0
    for i in range(n):
        if i > 0:
            d = times[i] - times[i - 1]
            if rate * d > UNDERFLOW:
                A = 0.0
                B = 0.0
            else:
                e = math.exp(-rate * d)
                B = e * (B + d * (1.0 + A))
                A = e * (1.0 + A)
        nu = 0.0
        for r in range(q):
            nu += theta_nu[r] * Phi[i, r]
        lam = nu + eta * rate * A
        if not lam > 0.0:
            return -np.inf, g
        ll += math.log(lam)
        inv = 1.0 / lam
        for r in range(q):
            g[r] += Phi[i, r] * inv
        g[q] += rate * A * inv
        g[q + 1] += eta * (A - rate * B) * inv
    for r in range(q):
        ll -= theta_nu[r] * Ibg[r]
        g[r] -= Ibg[r]
    # walk back from T; once exp(-rate s) is below double epsilon every
    # earlier event contributes exactly eta to the compensator
    for i in range(n - 1, -1, -1):
        s = T - times[i]
        if rate * s > SATURATED:
            ll -= eta * (i + 1)
            g[q] -= i + 1
            break
        E = math.exp(-rate * s)
        ll -= eta * (1.0 - E)
        g[q] -= 1.0 - E
        g[q + 1] -= eta * s * E
    return ll, g


class _ExpData:
    """Background design at the event times, reused across likelihood evaluations."""

    def __init__(self, path: EventPath, T: float, background):
        self.times = path.times
        self.T = float(T)
        if self.times.size:
            self.Phi = np.ascontiguousarray(background.design(self.times), dtype=float)
        else:
            self.Phi = np.zeros((0, background.params.size))
        self.Ibg = np.asarray(background.integral_design(0.0, self.T), dtype=float)

    def __call__(self, theta_nu, eta, scale):
        ll, g = _exp_loglik_grad(self.times, self.Phi, self.Ibg,
                                 np.asarray(theta_nu, dtype=float), float(eta), 1.0 / float(scale),
                                 self.T)
        g[-1] *= -1.0 / scale ** 2
        return ll, g


def loglik_exponential_recursive(params: HawkesParams, path: EventPath, T: float) -> float:
    """Exponential-kernel log-likelihood in linear time."""
    if params.kernel.kind != "exponential":
        raise ValueError("the recursion needs an exponential kernel")
    _check_inputs(params, path, T)
    ll, _ = _ExpData(path, T, params.background)(params.background.params, params.eta,
                                                 params.kernel.beta)
    return float(ll)


def loglik_exponential_grad(params: HawkesParams, path: EventPath, T: float):
    """Log-likelihood and its gradient in the natural parameter order."""
    if params.kernel.kind != "exponential":
        raise ValueError("the recursion needs an exponential kernel")
    ll, g = _ExpData(path, T, params.background)(params.background.params, params.eta,
                                                 params.kernel.beta)
    return float(ll), g.copy()


# ---------------------------------------------------------------------------
# Parameter transforms used by the optimiser
# ---------------------------------------------------------------------------

def transform_kinds(family: ModelFamily) -> tuple:
    """Per-coordinate transform: ``log`` (positive), ``logit`` (eta) or ``identity``."""
    bg = family.background
    if bg.kind == "constant":
        kinds = ["log"]
    elif bg.kind == "trig":
        kinds = ["log"] + ["identity"] * (bg.size - 1)
    else:
        kinds = ["identity"] * bg.size
    kinds.append("logit")
    kinds += ["log"] * (family.dim - bg.size - 1)
    return tuple(kinds)


def to_unconstrained(vec, kinds) -> np.ndarray:
    out = np.empty(len(kinds))
    for i, (v, k) in enumerate(zip(vec, kinds)):
        if k == "log":
            out[i] = math.log(v)
        elif k == "logit":
            v = min(max(v, 1e-12), 1 - 1e-12)
            out[i] = math.log(v / (1.0 - v))
        else:
            out[i] = v
    return out


def from_unconstrained(z, kinds) -> tuple[np.ndarray, np.ndarray]:
    """Natural-scale vector and the Jacobian diagonal d(theta)/dz."""
    vec = np.empty(len(kinds))
    jac = np.empty(len(kinds))
    for i, (v, k) in enumerate(zip(z, kinds)):
        if k == "log":
            vec[i] = math.exp(v)
            jac[i] = vec[i]
        elif k == "logit":
            vec[i] = special.expit(v)
            jac[i] = vec[i] * (1.0 - vec[i])
        else:
            vec[i] = v
            jac[i] = 1.0
    return vec, jac


def _bounds(kinds, T: float):
    out = []
    for k in kinds:
        if k == "log":
            out.append((-LOG_BOUND, LOG_BOUND))
        elif k == "logit":
            out.append((-LOGIT_BOUND, LOGIT_BOUND))
        else:
            out.append((None, None))
    # a kernel scale beyond the window is not identified from one path: the
    # excitation term then just mimics a slow trend and eta runs off to 1
    out[-1] = (-LOG_BOUND, math.log(T))
    return out


def default_init(path: EventPath, T: float, family: ModelFamily) -> np.ndarray:
    rate = max(len(path), 1) / T
    bg = family.background
    if bg.kind == "constant":
        nu = [0.5 * rate]
    elif bg.kind == "trig":
        nu = [0.5 * rate] + [0.0] * (bg.size - 1)
    else:
        nu = [0.5 * rate] * bg.size
    return np.array(nu + [0.5] + [1.0] * (family.dim - bg.size - 1))


def restart_inits(path: EventPath, T: float, family: ModelFamily) -> list:
    """Low-excitation starting points tried when the default start degenerates."""
    rate = max(len(path), 1) / T
    out = []
    for scale in (1.0, 1.0 / rate):
        x = default_init(path, T, family)
        q = family.background.size
        x[:q] *= 1.8
        x[q] = 0.1
        x[q + 1:] = 1.0
        x[-1] = scale
        out.append(x)
    return out


def _degenerate(vec, family: ModelFamily, T: float) -> bool:
    # the likelihood is flat along eta -> 1 with a kernel far longer than the
    # window; an optimiser that drifts there has usually missed the interior mode
    q = family.background.size
    mean_lag = float(np.prod(vec[q + 1:]))
    return bool(vec[q] > 0.95 or mean_lag > 0.1 * T)


def _clip_box(z, bounds) -> np.ndarray:
    return np.array([min(max(v, lo if lo is not None else -np.inf), hi if hi is not None else np.inf)
                     for v, (lo, hi) in zip(z, bounds)])


def _projected_grad(z, g, bounds) -> float:
    pg = np.array(g, dtype=float)
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and z[i] <= lo + 1e-10 and pg[i] > 0:
            pg[i] = 0.0
        if hi is not None and z[i] >= hi - 1e-10 and pg[i] < 0:
            pg[i] = 0.0
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def fit_mle(path: EventPath, T: float, family: ModelFamily, init=None,
            method: str = "auto") -> FitResult:
    """Maximise the continuous-path log-likelihood over transformed parameters.

    ``method="auto"`` uses L-BFGS-B with the analytic gradient;
    ``method="nelder-mead"`` is the derivative-free alternative.  On non-convergence the best iterate is
    returned with ``converged=False``.
    """
    if len(path) == 0:
        raise ValueError("cannot fit a Hawkes process to an empty path")
    kinds = transform_kinds(family)
    bounds = _bounds(kinds, T)
    x0 = np.asarray(default_init(path, T, family) if init is None else init, dtype=float)
    z0 = _clip_box(to_unconstrained(x0, kinds), bounds)
    q = family.background.size
    varying_bg = family.background.kind != "constant"

    def valid(vec):
        if not varying_bg:
            return True
        try:
            family.background.make(vec[:q])
        except ValueError:
            return False
        return True

    if method == "auto":
        method = "lbfgs"

    if method == "lbfgs":
        cls = _ExpData if family.kernel == "exponential" else _GammaData
        data = cls(path, T, family.background.make(x0[:q]))

        lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
        hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])

        def objective(z):
            # box constraints as a smooth penalty around the clipped point; hard
            # bounds let the first L-BFGS-B step jump straight to a corner
            zc = np.clip(z, lo, hi)
            vec, jac = from_unconstrained(zc, kinds)
            if not valid(vec):
                return 1e100, np.zeros_like(z)
            ll, g = data(vec[:q], *vec[q:])
            if not np.isfinite(ll):
                return 1e100, np.zeros_like(z)
            over = z - zc
            return -ll + PENALTY * float(over @ over), -g * jac + 2.0 * PENALTY * over

        def run(z_start):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = optimize.minimize(objective, z_start, jac=True, method="L-BFGS-B",
                                        options={"maxiter": MAX_ITER, "ftol": 1e-12, "gtol": 1e-8})
            z = np.clip(res.x, lo, hi)
            f, g = objective(z)
            return z, f, g, int(res.nit)

        z_best, f, g, nit = run(z0)
        if _degenerate(from_unconstrained(z_best, kinds)[0], family, T):
            for x_alt in restart_inits(path, T, family):
                z_alt, f_alt, g_alt, nit_alt = run(_clip_box(to_unconstrained(x_alt, kinds), bounds))
                nit += nit_alt
                if f_alt < f:
                    z_best, f, g = z_alt, f_alt, g_alt
        gnorm = _projected_grad(z_best, g, bounds)
        converged = bool(f < 1e99 and gnorm <= GRAD_TOL)
    elif method == "nelder-mead":
        def negll(z):
            vec, _ = from_unconstrained(z, kinds)
            if not valid(vec):
                return 1e100
            ll = loglik_continuous(family.make(vec), path, T)
            return -ll if np.isfinite(ll) else 1e100

        res = optimize.minimize(negll, z0, method="Nelder-Mead",
                                options={"maxiter": MAX_ITER, "maxfev": 4 * MAX_ITER,
                                         "xatol": 1e-8, "fatol": 1e-10, "adaptive": True})
        z_best, nit = res.x, int(res.nit)
        f = float(res.fun)
        g = optimize.approx_fprime(z_best, negll, 1e-6)
        gnorm = float(np.max(np.abs(g)))
        converged = bool(res.success and f < 1e99 and gnorm <= GRAD_TOL)
    else:
        raise ValueError(f"unknown method {method!r}")
    vec, _ = from_unconstrained(z_best, kinds)
    vec[q] = min(vec[q], 1.0 - 1e-12)
    return FitResult(family.make(vec), float(-f), converged, nit, gnorm)
