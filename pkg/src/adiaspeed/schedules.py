"""Schedules s(tau) and the monotone piecewise-cubic interpolant behind tabulated ones."""
from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

ENDPOINT_TOL = 1e-12


class MonotoneCubic:
    """C1 monotone piecewise cubic Hermite interpolant (PCHIP).

    Data must be strictly increasing in both x and y; the interpolant is then
    monotone on every interval.
    """

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValidationError("need matching 1-D arrays with at least two points")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("abscissae must be strictly increasing")
        if np.any(np.diff(y) <= 0):
            raise ValidationError("ordinates must be strictly increasing (non-monotone data)")
        self.x = x
        self.y = y
        self.slopes = self._limited_slopes(x, y)

    @staticmethod
    def _limited_slopes(x, y):
        h = np.diff(x)
        delta = np.diff(y) / h
        n = x.size
        m = np.empty(n)
        if n == 2:
            m[:] = delta[0]
            return m
        # weighted harmonic mean of neighbouring secants (Fritsch-Butland)
        w1 = 2 * h[1:] + h[:-1]
        w2 = h[1:] + 2 * h[:-1]
        m[1:-1] = (w1 + w2) / (w1 / delta[:-1] + w2 / delta[1:])
        m[0] = MonotoneCubic._edge_slope(h[0], h[1], delta[0], delta[1])
        m[-1] = MonotoneCubic._edge_slope(h[-1], h[-2], delta[-1], delta[-2])
        # Fritsch-Carlson box limiter (alpha, beta <= 3 keeps each cubic monotone);
        # never active for harmonic-mean slopes, kept as a guard
        np.minimum(m[:-1], 3 * delta, out=m[:-1])
        np.minimum(m[1:], 3 * delta, out=m[1:])
        return m

    @staticmethod
    def _edge_slope(h0, h1, d0, d1):
        m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
        return max(m, 0.0)

    def _locate(self, xq):
        xq = np.asarray(xq, dtype=float)
        k = np.clip(np.searchsorted(self.x, xq, side="right") - 1, 0, self.x.size - 2)
        h = self.x[k + 1] - self.x[k]
        t = (xq - self.x[k]) / h
        return k, h, t

    def __call__(self, xq):
        k, h, t = self._locate(xq)
        t2, t3 = t * t, t * t * t
        return (
            (2 * t3 - 3 * t2 + 1) * self.y[k]
            + (t3 - 2 * t2 + t) * h * self.slopes[k]
            + (-2 * t3 + 3 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.slopes[k + 1]
        )

    def derivative(self, xq):
        k, h, t = self._locate(xq)
        t2 = t * t
        return (
            (6 * t2 - 6 * t) * (self.y[k] - self.y[k + 1]) / h
            + (3 * t2 - 4 * t + 1) * self.slopes[k]
            + (3 * t2 - 2 * t) * self.slopes[k + 1]
        )

    def second_derivative(self, xq):
        k, h, t = self._locate(xq)
        return (
            (12 * t - 6) * (self.y[k] - self.y[k + 1]) / h**2
            + (6 * t - 4) * self.slopes[k] / h
            + (6 * t - 2) * self.slopes[k + 1] / h
        )


class Schedule:
    """Monotone map tau in [0, 1] -> s in [0, 1] with s(0) = 0 and s(1) = 1."""

    kind = "schedule"

    def __call__(self, tau):
        raise NotImplementedError

    def derivative(self, tau):
        raise NotImplementedError

    def second_derivative(self, tau):
        raise NotImplementedError

    def inverse(self, s, tol=1e-15):
        """tau with s(tau) = s, by vectorized bisection."""
        s = np.asarray(s, dtype=float)
        lo = np.zeros_like(s)
        hi = np.ones_like(s)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self(mid) < s
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= tol):
                break
        return 0.5 * (lo + hi)

    def describe(self) -> str:
        return self.kind


class LinearSchedule(Schedule):
    kind = "linear"

    def __call__(self, tau):
        return np.asarray(tau, dtype=float) * 1.0

    def derivative(self, tau):
        return np.ones_like(np.asarray(tau, dtype=float))

    def second_derivative(self, tau):
        return np.zeros_like(np.asarray(tau, dtype=float))

    def inverse(self, s, tol=None):
        return np.asarray(s, dtype=float) * 1.0


class GroverOptimalSchedule(Schedule):
    """Closed-form local-adiabatic schedule for Grover search with N items."""

    kind = "grover-optimal"

    def __init__(self, n_items: int):
        if n_items < 2:
            raise ValidationError(f"need N >= 2, got {n_items}")
        self.n_items = n_items
        self._root = math.sqrt(n_items - 1)
        self._angle = math.atan(self._root)

    def _u(self, tau):
        return (2 * np.asarray(tau, dtype=float) - 1) * self._angle

    def __call__(self, tau):
        return 0.5 + np.tan(self._u(tau)) / (2 * self._root)

    def derivative(self, tau):
        return self._angle / self._root / np.cos(self._u(tau)) ** 2

    def second_derivative(self, tau):
        u = self._u(tau)
        return 4 * self._angle**2 * np.tan(u) / np.cos(u) ** 2 / self._root

    def inverse(self, s, tol=None):
        s = np.asarray(s, dtype=float)
        return 0.5 + np.arctan(self._root * (2 * s - 1)) / (2 * self._angle)

    def describe(self) -> str:
        return f"grover-optimal N={self.n_items}"


class TabulatedSchedule(Schedule):
    kind = "tabulated"

    def __init__(self, tau, s):
        tau = np.array(tau, dtype=float)
        s = np.array(s, dtype=float)
        ends = (tau[0], tau[-1] - 1.0, s[0], s[-1] - 1.0) if tau.size >= 2 else (1.0,)
        if s.size != tau.size or max(abs(e) for e in ends) > ENDPOINT_TOL:
            raise ValidationError("tabulated schedule must run from (0, 0) to (1, 1)")
        # snap round-off at the ends
        tau[[0, -1]] = 0.0, 1.0
        s[[0, -1]] = 0.0, 1.0
        self.interpolant = MonotoneCubic(tau, s)

    @property
    def points(self):
        return self.interpolant.x, self.interpolant.y

    def __call__(self, tau):
        return np.clip(self.interpolant(tau), 0.0, 1.0)

    def derivative(self, tau):
        return self.interpolant.derivative(tau)

    def second_derivative(self, tau):
        return self.interpolant.second_derivative(tau)

    def describe(self) -> str:
        return f"tabulated ({self.interpolant.x.size} points)"


def linear() -> LinearSchedule:
    return LinearSchedule()


def grover_optimal(n_items: int) -> GroverOptimalSchedule:
    return GroverOptimalSchedule(n_items)


def interpolate_monotone(points) -> TabulatedSchedule:
    """Schedule through (tau_j, s_j) pairs."""
    pts = np.asarray(points, dtype=float)
    return TabulatedSchedule(pts[:, 0], pts[:, 1])
