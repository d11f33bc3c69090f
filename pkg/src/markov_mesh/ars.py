"""Adaptive rejection sampling for log-concave univariate densities.

The sampler builds a piecewise-linear upper hull from tangents at the
evaluated abscissae and a chordal lower squeeze between them; every rejected
point that required a density evaluation is added to the hull.
"""
from __future__ import annotations

import bisect
import math
from typing import Callable, Protocol

import numpy as np

from .lattice import Scene, sorted_offsets
from .model import pattern_counts
from .pbf import PBF

MAX_EXPANSIONS = 60
MAX_HULL_POINTS = 64
CONCAVITY_TOL = 1e-8


class ConcavityError(RuntimeError):
    pass


class BracketError(RuntimeError):
    pass


class LogDensity(Protocol):
    domain: tuple[float, float]

    def __call__(self, x: float) -> tuple[float, float]: ...


class _Hull:
    def __init__(self, points, lo, hi):
        points = sorted(points)
        self.x = [p[0] for p in points]
        self.h = [p[1] for p in points]
        self.dh = [p[2] for p in points]
        self.lo = lo
        self.hi = hi
        self._update()

    def _update(self):
        x, h, dh = self.x, self.h, self.dh
        z = []
        for j in range(len(x) - 1):
            den = dh[j] - dh[j + 1]
            if den > 1e-12 * (abs(dh[j]) + abs(dh[j + 1]) + 1e-300):
                zj = (h[j + 1] - h[j] - x[j + 1] * dh[j + 1] + x[j] * dh[j]) / den
                zj = min(max(zj, x[j]), x[j + 1])
            else:
                zj = 0.5 * (x[j] + x[j + 1])
            z.append(zj)
        self.edges = [self.lo] + z + [self.hi]
        logm = []
        for j in range(len(x)):
            logm.append(self._piece_log_mass(j))
        top = max(logm)
        if not math.isfinite(top):
            raise BracketError("upper hull has no finite mass")
        w = [math.exp(v - top) for v in logm]
        total = sum(w)
        acc = 0.0
        self.cum = []
        for v in w:
            acc += v / total
            self.cum.append(acc)

    def _piece_log_mass(self, j):
        a = self.dh[j]
        left, right = self.edges[j], self.edges[j + 1]
        width = right - left
        if width <= 0:
            return -math.inf
        if a == 0.0 or (math.isfinite(width) and abs(a * width) < 1e-10):
            if not math.isfinite(width):
                raise BracketError("flat hull piece on an unbounded interval")
            return self.h[j] + a * (0.5 * (left + right) - self.x[j]) + math.log(width)
        if a > 0:
            if math.isinf(right):
                raise BracketError("increasing hull piece on an unbounded right tail")
            u_r = self.h[j] + a * (right - self.x[j])
            span = a * width
            return u_r + math.log(-math.expm1(-span)) - math.log(a)
        if math.isinf(left):
            raise BracketError("decreasing hull piece on an unbounded left tail")
        u_l = self.h[j] + a * (left - self.x[j])
        span = -a * width
        return u_l + math.log(-math.expm1(-span)) - math.log(-a)

    def sample(self, rng):
        j = min(bisect.bisect_left(self.cum, rng.random()), len(self.cum) - 1)
        a = self.dh[j]
        left, right = self.edges[j], self.edges[j + 1]
        width = right - left
        u = rng.random()
        if a == 0.0 or (math.isfinite(width) and abs(a * width) < 1e-10):
            x = left + u * width
        elif a > 0:
            x = right + math.log(u + (1.0 - u) * math.exp(-a * width)) / a
        else:
            x = left + math.log(u + (1.0 - u) * math.exp(a * width)) / a
        return min(max(x, left), right)

    def upper(self, x):
        j = min(bisect.bisect_left(self.edges, x) - 1, len(self.x) - 1)
        j = max(j, 0)
        return self.h[j] + self.dh[j] * (x - self.x[j])

    def lower(self, x):
        xs = self.x
        if x < xs[0] or x > xs[-1]:
            return -math.inf
        i = min(bisect.bisect_right(xs, x) - 1, len(xs) - 2)
        if i < 0:
            return -math.inf
        t = (x - xs[i]) / (xs[i + 1] - xs[i])
        return (1.0 - t) * self.h[i] + t * self.h[i + 1]

    def insert(self, x, h, dh):
        k = bisect.bisect_left(self.x, x)
        if k < len(self.x) and self.x[k] == x:
            return
        self.x.insert(k, x)
        self.h.insert(k, h)
        self.dh.insert(k, dh)
        self._update()


def _evaluate(target, x):
    h, dh = target(x)
    h, dh = float(h), float(dh)
    if not (math.isfinite(h) and math.isfinite(dh)):
        raise BracketError(f"log-density not finite at {x!r}")
    return h, dh


def _bracket(target, init, lo, hi):
    xl, xr = float(init[0]), float(init[1])
    if not xl < xr:
        raise BracketError("initial points must satisfy left < right")
    pts = [(xl, *_evaluate(target, xl)), (xr, *_evaluate(target, xr))]
    step = 0.5 * (xr - xl)
    k = 0
    while math.isinf(lo) and pts[0][2] <= 0:
        if k >= MAX_EXPANSIONS:
            raise BracketError("could not find a point with positive slope")
        x = pts[0][0] - step
        step *= 2
        k += 1
        pts.insert(0, (x, *_evaluate(target, x)))
    step = 0.5 * (xr - xl)
    k = 0
    while math.isinf(hi) and pts[-1][2] >= 0:
        if k >= MAX_EXPANSIONS:
            raise BracketError("could not find a point with negative slope")
        x = pts[-1][0] + step
        step *= 2
        k += 1
        pts.append((x, *_evaluate(target, x)))
    return pts


def ars_sample(
    target: LogDensity | Callable,
    init=(-1.0, 1.0),
    seed=None,
    size: int | None = None,
    max_points: int = MAX_HULL_POINTS,
):
    """Exact draws from the density proportional to ``exp(target(x)[0])``.

    ``target`` returns the log-density and its derivative; it may carry a
    ``domain`` attribute ``(lo, hi)``.  ``seed`` is an int or a numpy
    ``Generator``.  Returns a float, or an array when ``size`` is given.
    Draws taken in one call share the adaptively refined hull; they are
    still independent.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = getattr(target, "domain", (-math.inf, math.inf))
    hull = _Hull(_bracket(target, init, lo, hi), lo, hi)
    n = 1 if size is None else int(size)
    draws = []
    while len(draws) < n:
        x = hull.sample(rng)
        log_w = math.log(rng.random())
        u = hull.upper(x)
        if log_w <= hull.lower(x) - u:
            draws.append(x)
            continue
        h, dh = _evaluate(target, x)
        tol = CONCAVITY_TOL * max(1.0, abs(u))
        if h > u + tol or h < hull.lower(x) - tol:
            raise ConcavityError(f"log-density is not concave near {x!r}")
        if log_w <= h - u:
            draws.append(x)
        if len(hull.x) < max_points:
            hull.insert(x, h, dh)
    return draws[0] if size is None else np.array(draws)


class LineLogDensity:
    """Concave log-density of a step ``alpha`` along a direction in parameter space.

    Each term has value ``t = b + alpha*c`` and contributes
    ``w1*t - w2*log(1+e^t) - w3*t^2``.  Prior terms use ``(1, 2, 1/2sigma^2)``;
    a data pattern seen ``n`` times with ``s`` ones uses ``(s, n, 0)``.
    The value is defined up to an additive constant.
    """

    domain = (-math.inf, math.inf)

    def __init__(self, b, c, w1, w2, w3):
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.w1 = np.asarray(w1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.w3 = np.asarray(w3, dtype=float)

    @classmethod
    def build(cls, prior_b, prior_c, sigma, data_b, data_c, count, ones):
        prior_b = np.asarray(prior_b, dtype=float)
        data_b = np.asarray(data_b, dtype=float)
        k, p = prior_b.size, data_b.size
        return cls(
            np.concatenate([prior_b, data_b]),
            np.concatenate([np.asarray(prior_c, dtype=float), np.asarray(data_c, dtype=float)]),
            np.concatenate([np.ones(k), np.asarray(ones, dtype=float)]),
            np.concatenate([np.full(k, 2.0), np.asarray(count, dtype=float)]),
            np.concatenate([np.full(k, 0.5 / (sigma * sigma)), np.zeros(p)]),
        )

    def __call__(self, alpha):
        t = self.b + alpha * self.c
        e = np.exp(-np.abs(t))
        sp = np.maximum(t, 0.0) + np.log1p(e)
        sig = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        value = np.dot(self.w1, t) - np.dot(self.w2, sp) - np.dot(self.w3, t * t)
        deriv = np.dot(self.c, self.w1 - self.w2 * sig - 2.0 * self.w3 * t)
        return float(value), float(deriv)

    def second_derivative(self, alpha):
        t = self.b + alpha * self.c
        e = np.exp(-np.abs(t))
        s = e / (1.0 + e) ** 2
        return float(-np.dot(self.c * self.c, self.w2 * s + 2.0 * self.w3))


def alpha_full_conditional(pbf: PBF, delta, scene: Scene, sigma: float) -> LineLogDensity:
    """Log full conditional of ``alpha`` for ``theta + alpha*delta`` on the support.

    Data enter through the distinct active interactions of the scene; the
    direction at a non-member interaction is obtained by the same Moebius
    extension that defines ``theta`` there.
    """
    sigma = getattr(sigma, "sigma", sigma)
    lams = list(pbf.support)
    theta = np.array([pbf.theta[lam] for lam in lams])
    direction = np.array([float(delta[lam]) for lam in lams])
    dpbf = PBF(pbf.support, dict(zip(lams, direction)))
    pats = pattern_counts(scene.values, sorted_offsets(pbf.template))
    data_b = pbf.evaluate_masks(pats.masks, pats.offsets)
    data_c = dpbf.evaluate_masks(pats.masks, pats.offsets)
    return LineLogDensity.build(theta, direction, sigma, data_b, data_c, pats.count, pats.ones)
