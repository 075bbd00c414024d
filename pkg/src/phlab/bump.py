"""C-infinity truncation profile and the lower bound M it induces.

The profile is built from the standard non-analytic step
sigma(t) = e(t) / (e(t) + e(1-t)), e(t) = exp(-1/t) for t > 0 and 0 otherwise,
rescaled so the transition band is exactly (delta/2, delta):

    s(x) = 1      for |x| <= delta/2,
    s(x) = 0      for |x| >= delta,
    s strictly decreasing in between, even, C-infinity.

The half-width obeys the measure budget 16 delta^2 <= 1/100, i.e.
delta <= 1/40, enforced at construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeasureConstraintError

MAX_DELTA = 1.0 / 40.0

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _e(t):
    """exp(-1/t) continued by 0 for t <= 0 (vectorized, warning-free)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def _e_prime(t):
    """d/dt exp(-1/t) = exp(-1/t)/t^2, continued by 0 for t <= 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.exp(-1.0 / tp) / (tp * tp)
    return out


def _sigma(t):
    t = np.asarray(t, dtype=float)
    a = _e(t)
    b = _e(1.0 - t)
    out = np.zeros_like(t)
    mid = (t > 0) & (t < 1)
    out[mid] = a[mid] / (a[mid] + b[mid])
    out[t >= 1] = 1.0
    return out


def _sigma_prime(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    a = _e(tm)
    b = _e(1.0 - tm)
    da = _e_prime(tm)
    db = _e_prime(1.0 - tm)
    out[mid] = (da * b + a * db) / (a + b) ** 2
    return out


class SmoothBump:
    """The truncation s(delta; .) with its analytic derivative.

    Immutable; evaluation is pure, vectorized, and safe to call concurrently.
    """

    def __init__(self, delta: float):
        if delta <= 0:
            raise MeasureConstraintError("delta must be positive")
        if delta > MAX_DELTA + 1e-15:
            raise MeasureConstraintError(
                f"delta={delta} violates 16*delta^2 <= 1/100 (max {MAX_DELTA})"
            )
        self.delta = float(delta)

    def _t(self, x):
        return (self.delta - np.abs(x)) / (self.delta / 2.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        val = _sigma(self._t(np.atleast_1d(x)))
        return float(val[0]) if scalar else val

    def derivative(self, x):
        """s'(x); odd by symmetry, zero on the plateau and outside the support."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        val = _sigma_prime(self._t(xa)) * (-np.sign(xa) / (self.delta / 2.0))
        return float(val[0]) if scalar else val

    def weighted(self, y):
        """s(y) + y * s'(y), the factor whose negative part defines M."""
        y = np.asarray(y, dtype=float)
        return self(y) + y * self.derivative(y)

    def sup_derivative(self, samples: int = 20001) -> float:
        """Grid estimate of max |s'| over the transition band."""
        ys = np.linspace(0.0, self.delta, samples)
        return float(np.max(np.abs(self.derivative(ys))))

    def sup_y_times_s(self, samples: int = 20001) -> float:
        """Grid estimate of max |y * s(y)| over [0, delta]."""
        ys = np.linspace(0.0, self.delta, samples)
        return float(np.max(np.abs(ys * self(ys))))


def make_bump(delta: float) -> SmoothBump:
    return SmoothBump(delta)


@dataclass(frozen=True)
class BumpBound:
    """The constant M >= 0 with -M <= s(x)(s(y) + y s'(y)) everywhere sampled."""

    M: float
    argmin: tuple
    min_value: float
    grid: int


def _golden_min(f, lo, hi, tol):
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def compute_M(bump: SmoothBump, grid: int = 2001, tol: float = 1e-8) -> BumpBound:
    """Numerical minimum of s(x)(s(y) + y s'(y)) over [0, delta]^2.

    Uniform grid scan followed by coordinate-wise golden-section refinement;
    the objective is smooth, with the minimizer in the transition band.
    By symmetry of s the same bound holds for x of either sign.
    """
    delta = bump.delta
    xs = np.linspace(0.0, delta, grid)
    sx = bump(xs)
    hy = bump.weighted(xs)
    g = sx[:, None] * hy[None, :]
    i, j = np.unravel_index(np.argmin(g), g.shape)
    x0, y0 = xs[i], xs[j]
    best = g[i, j]
    h = delta / (grid - 1)

    def obj(x, y):
        return float(bump(np.array(x)) * bump.weighted(np.array(y)))

    for _ in range(4):
        y0, best = _golden_min(
            lambda y: obj(x0, y), max(0.0, y0 - h), min(delta, y0 + h), tol * delta
        )
        x0, best = _golden_min(
            lambda x: obj(x, y0), max(0.0, x0 - h), min(delta, x0 + h), tol * delta
        )
    min_value = min(best, float(g[i, j]))
    return BumpBound(M=max(0.0, -min_value), argmin=(x0, y0), min_value=min_value, grid=grid)
