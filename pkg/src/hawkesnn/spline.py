"""Periodic (cyclic) B-spline basis.

A periodic spline of order ``k`` on ``n`` distinct knots ``u_0 < ... < u_{n-1}``
in ``[0, P)`` has ``n`` basis functions.  The knot sequence is extended
cyclically, ``t_{j+n} = t_j + P``, and basis function ``i`` is the ordinary
B-spline on ``t_i, ..., t_{i+k}`` folded back onto one period.  A knot equal to
``P`` is the same point as a knot at ``0`` and is dropped.
"""
from __future__ import annotations

import numpy as np
from numba import njit

DEFAULT_ORDER = 4


def normalize_knots(knots, period: float, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Distinct knot positions on the circle ``[0, period)``, sorted.

    Raises ``ValueError`` unless the closed cyclic sequence has at least
    ``order + 1`` knots, i.e. at least ``order`` distinct positions.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    u = np.asarray(knots, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("knots must be a nonempty 1-d sequence")
    if np.any(np.diff(u) <= 0):
        raise ValueError("knots must be strictly ascending")
    if u[0] < 0 or u[-1] > period:
        raise ValueError("knots must lie within [0, period]")
    if u[-1] == period:
        if u[0] == 0.0:
            u = u[:-1]
        else:
            u = np.concatenate([[0.0], u[:-1]])
    if u.size < order:
        raise ValueError(
            f"a periodic order-{order} spline needs at least {order + 1} effective knots, "
            f"got {u.size + 1}")
    return u


def extended_knots(u: np.ndarray, period: float, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Cyclic extension ``t_j`` for ``j = -order .. n + order``, stored at offset ``order``."""
    n = u.size
    j = np.arange(-order, n + order + 1)
    return u[j % n] + period * np.floor_divide(j, n)


@njit(cache=True)
def _local_basis(ext, n, order, period, x, out):
    """Nonzero basis values at ``x``; returns the span index ``s``.

    ``out[r]`` is the value of cyclic basis ``(s - order + 1 + r) mod n``.
    """
    off = order
    u0 = ext[off]
    y = u0 + ((x - u0) % period)
    if y >= u0 + period:
        y -= period
    # span s with t_s <= y < t_{s+1}, 0 <= s < n
    lo = 0
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ext[off + mid] <= y:
            lo = mid
        else:
            hi = mid
    s = lo
    deg = order - 1
    left = np.empty(order)
    right = np.empty(order)
    out[0] = 1.0
    for j in range(1, deg + 1):
        left[j] = y - ext[off + s + 1 - j]
        right[j] = ext[off + s + j] - y
        saved = 0.0
        for r in range(j):
            temp = out[r] / (right[r + 1] + left[j - r])
            out[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        out[j] = saved
    return s


@njit(cache=True)
def _basis_matrix(ext, n, order, period, xs):
    m = xs.size
    W = np.zeros((m, n))
    loc = np.empty(order)
    for a in range(m):
        s = _local_basis(ext, n, order, period, xs[a], loc)
        for r in range(order):
            W[a, (s - order + 1 + r) % n] += loc[r]
    return W


@njit(cache=True)
def _spline_values(ext, n, order, period, coeffs, xs):
    m = xs.size
    out = np.empty(m)
    loc = np.empty(order)
    for a in range(m):
        s = _local_basis(ext, n, order, period, xs[a], loc)
        v = 0.0
        for r in range(order):
            v += coeffs[(s - order + 1 + r) % n] * loc[r]
        out[a] = v
    return out


class PeriodicBSpline:
    """Cyclic B-spline basis on fixed knots; evaluation is linear in the coefficients."""

    def __init__(self, knots, period: float, order: int = DEFAULT_ORDER):
        self.order = int(order)
        self.period = float(period)
        self.knots = normalize_knots(knots, self.period, self.order)
        self.n = self.knots.size
        self.ext = extended_knots(self.knots, self.period, self.order)

    def basis(self, t) -> np.ndarray:
        """Basis weights, shape ``(len(t), n)`` (or ``(n,)`` for scalar ``t``)."""
        scalar = np.ndim(t) == 0
        xs = np.atleast_1d(np.asarray(t, dtype=float))
        W = _basis_matrix(self.ext, self.n, self.order, self.period, xs)
        return W[0] if scalar else W

    def __call__(self, coeffs, t):
        scalar = np.ndim(t) == 0
        xs = np.atleast_1d(np.asarray(t, dtype=float))
        v = _spline_values(self.ext, self.n, self.order, self.period,
                           np.asarray(coeffs, dtype=float), xs)
        return float(v[0]) if scalar else v

    def period_integrals(self) -> np.ndarray:
        """Integral of each basis function over one full period."""
        i = np.arange(self.n) + self.order
        return (self.ext[i + self.order] - self.ext[i]) / self.order

    def integrals(self, a: float, b: float) -> np.ndarray:
        """Exact integral of each basis function over ``[a, b]``."""
        if b < a:
            raise ValueError("need a <= b")
        P = self.period
        full = np.floor((b - a) / P)
        out = full * self.period_integrals()
        lo = a + full * P
        if b > lo:
            out = out + self._partial(lo, b)
        return out

    def _partial(self, a: float, b: float) -> np.ndarray:
        # Gauss-Legendre on each polynomial piece is exact for degree <= 2*npts-1.
        edges = np.concatenate([[a], self._cuts(a, b), [b]])
        xg, wg = np.polynomial.legendre.leggauss(self.order)
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        pts = (0.5 * (hi + lo))[:, None] + half[:, None] * xg[None, :]
        W = self.basis(pts.ravel()).reshape(pts.shape[0], pts.shape[1], self.n)
        return np.einsum("p,q,pqn->n", half, wg, W)

    def _cuts(self, a: float, b: float) -> np.ndarray:
        P = self.period
        base = np.floor((a - self.knots[0]) / P) * P
        k = int(np.ceil((b - a) / P)) + 2
        cuts = np.concatenate([self.knots + base + j * P for j in range(k)])
        return cuts[(cuts > a) & (cuts < b)]

    def convex_hull_bound(self, coeffs, a: float, b: float) -> float:
        """Upper bound of the spline on ``[a, b]``: max of the active coefficients."""
        c = np.asarray(coeffs, dtype=float)
        if b - a >= self.period:
            return float(c.max())
        loc = np.empty(self.order)
        s0 = _local_basis(self.ext, self.n, self.order, self.period, a, loc)
        nspans = self._cuts(a, b).size + 1
        active = {(s0 + j - self.order + 1 + r) % self.n
                  for j in range(nspans) for r in range(self.order)}
        return float(max(c[i] for i in active))
