"""Exact univariate laws and covariate-indexed conditional laws.

Every law broadcasts over numpy arrays: parameters may be arrays (for
example shape ``(n, 1)`` for a batch of covariate values) and are combined
with ``y`` or ``tau`` arrays by ordinary numpy broadcasting.

Quantiles follow ``q(tau) = inf{y : F(y) >= tau}`` with ``q(0)`` and
``q(1)`` the support endpoints, which may be infinite.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "Law",
    "Normal",
    "Exponential",
    "Lognormal",
    "Uniform",
    "SymmetricPareto",
    "Affine",
    "Mixture",
    "ConditionalLaw",
    "InversionError",
    "bisect_quantile",
]

DEFAULT_TOL = 1e-10
MAX_BISECT = 200
_MAX_DOUBLINGS = 1000


class InversionError(RuntimeError):
    """Quantile inversion failed to bracket or converge."""


def bisect_quantile(law: "Law", tau, tol: float = DEFAULT_TOL, max_iter: int = MAX_BISECT):
    """Vectorized ``inf{y : F(y) >= tau}`` by bisection on the cdf.

    The bracket keeps ``F(lo) < tau <= F(hi)``; infinite support ends are
    bracketed by doubling ``±2**j``. Iteration stops once every bracket is
    narrower than ``tol * max(1, |hi|)``.
    """
    tau = np.asarray(tau, dtype=float)
    s_lo, s_hi = law.support()
    shape = np.broadcast_shapes(tau.shape, np.shape(law.cdf(np.float64(0.0))),
                                np.shape(s_lo), np.shape(s_hi))
    tau = np.broadcast_to(tau, shape)
    s_lo = np.broadcast_to(np.asarray(s_lo, dtype=float), shape)
    s_hi = np.broadcast_to(np.asarray(s_hi, dtype=float), shape)
    out = np.empty(shape)

    at_lo = tau <= 0.0
    at_hi = tau >= 1.0
    out[at_lo] = s_lo[at_lo]
    out[at_hi] = s_hi[at_hi]
    inner = ~(at_lo | at_hi)

    lo = np.where(np.isfinite(s_lo), s_lo, -1.0)
    hi = np.where(np.isfinite(s_hi), s_hi, 1.0)
    # mass sitting on a finite lower endpoint
    lo_hit = inner & np.isfinite(s_lo) & (law.cdf(lo) >= tau)
    out[lo_hit] = s_lo[lo_hit]
    inner &= ~lo_hit

    for _ in range(_MAX_DOUBLINGS):
        need = inner & ~np.isfinite(s_lo) & (law.cdf(lo) >= tau)
        if not need.any():
            break
        lo = np.where(need, 2.0 * lo - np.abs(hi), lo)
    else:
        raise InversionError("could not bracket lower quantile")
    for _ in range(_MAX_DOUBLINGS):
        need = inner & ~np.isfinite(s_hi) & (law.cdf(hi) < tau)
        if not need.any():
            break
        hi = np.where(need, 2.0 * hi + np.abs(lo), hi)
    else:
        raise InversionError("could not bracket upper quantile")

    for _ in range(max_iter):
        width = hi - lo
        if not np.any(inner & (width > tol * np.maximum(1.0, np.abs(hi)))):
            break
        mid = lo + 0.5 * width
        go_lo = law.cdf(mid) >= tau
        hi = np.where(inner & go_lo, mid, hi)
        lo = np.where(inner & ~go_lo, mid, lo)
    else:
        if np.any(inner & (hi - lo > tol * np.maximum(1.0, np.abs(hi)))):
            raise InversionError(f"bisection did not converge in {max_iter} iterations")
    out[inner] = hi[inner]
    return out if out.ndim else float(out)


class Law:
    """Base class; subclasses define ``cdf``, ``pdf`` and ``support``."""

    closed_form = False

    def cdf(self, y):
        raise NotImplementedError

    def pdf(self, y):
        raise NotImplementedError

    def support(self):
        raise NotImplementedError

    def _ppf(self, tau):
        raise NotImplementedError

    def quantile(self, tau, tol: float = DEFAULT_TOL):
        if not self.closed_form:
            return bisect_quantile(self, tau, tol)
        tau = np.asarray(tau, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            q = np.asarray(self._ppf(np.clip(tau, 0.0, 1.0)), dtype=float)
        lo, hi = self.support()
        q = np.where(tau <= 0.0, lo, np.where(tau >= 1.0, hi, q))
        return q if q.ndim else float(q)

    def sample(self, rng: np.random.Generator, size):
        """Inverse-cdf draws."""
        return np.asarray(self.quantile(rng.random(size)), dtype=float)

    def mass(self, a, b):
        """``P(a <= Y <= b)`` for a continuous law."""
        return self.cdf(b) - self.cdf(a)


class Normal(Law):
    closed_form = True

    def __init__(self, mu=0.0, sigma=1.0):
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)

    def cdf(self, y):
        return ndtr((np.asarray(y, dtype=float) - self.mu) / self.sigma)

    def pdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * self.sigma)

    def support(self):
        s = np.full(np.broadcast(self.mu, self.sigma).shape, np.inf)
        return -s, s

    def _ppf(self, tau):
        return self.mu + self.sigma * ndtri(tau)


class Exponential(Law):
    """``loc + Exp(rate)``."""

    closed_form = True

    def __init__(self, rate=1.0, loc=0.0):
        self.rate = np.asarray(rate, dtype=float)
        self.loc = np.asarray(loc, dtype=float)

    def cdf(self, y):
        t = np.asarray(y, dtype=float) - self.loc
        return np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)

    def pdf(self, y):
        t = np.asarray(y, dtype=float) - self.loc
        return np.where(t >= 0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)

    def support(self):
        lo = np.broadcast_to(self.loc, np.broadcast(self.loc, self.rate).shape).astype(float)
        return lo, np.full(lo.shape, np.inf)

    def _ppf(self, tau):
        return self.loc - np.log1p(-tau) / self.rate


class Lognormal(Law):
    """``shift + exp(meanlog + sdlog * Z)``."""

    closed_form = True

    def __init__(self, meanlog=0.0, sdlog=1.0, shift=0.0):
        self.meanlog = np.asarray(meanlog, dtype=float)
        self.sdlog = np.asarray(sdlog, dtype=float)
        self.shift = np.asarray(shift, dtype=float)

    def cdf(self, y):
        t = np.asarray(y, dtype=float) - self.shift
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(np.where(t > 0, t, 1.0)) - self.meanlog) / self.sdlog
        return np.where(t > 0, ndtr(z), 0.0)

    def pdf(self, y):
        t = np.asarray(y, dtype=float) - self.shift
        safe = np.where(t > 0, t, 1.0)
        z = (np.log(safe) - self.meanlog) / self.sdlog
        dens = np.exp(-0.5 * z * z) / (safe * self.sdlog * np.sqrt(2 * np.pi))
        return np.where(t > 0, dens, 0.0)

    def support(self):
        shape = np.broadcast(self.meanlog, self.sdlog, self.shift).shape
        return np.broadcast_to(self.shift, shape).astype(float), np.full(shape, np.inf)

    def _ppf(self, tau):
        return self.shift + np.exp(self.meanlog + self.sdlog * ndtri(tau))


class Uniform(Law):
    closed_form = True

    def __init__(self, a=0.0, b=1.0):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if np.any(self.b <= self.a):
            raise ValueError("uniform needs a < b")

    def cdf(self, y):
        return np.clip((np.asarray(y, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.a) & (y <= self.b), 1.0 / (self.b - self.a), 0.0)

    def support(self):
        shape = np.broadcast(self.a, self.b).shape
        return (np.broadcast_to(self.a, shape).astype(float),
                np.broadcast_to(self.b, shape).astype(float))

    def _ppf(self, tau):
        return self.a + tau * (self.b - self.a)


class SymmetricPareto(Law):
    """``scale * S * T`` with ``S = ±1`` equiprobable and ``T ~ Pareto(1, shape)``.

    The density vanishes on ``(-scale, scale)``.
    """

    closed_form = True

    def __init__(self, shape=2.5, scale=1.0):
        self.shape = np.asarray(shape, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    def cdf(self, y):
        z = np.asarray(y, dtype=float) / self.scale
        a = np.abs(z)
        with np.errstate(divide="ignore"):
            tail = 0.5 * np.where(a >= 1, a, 1.0) ** (-self.shape)
        return np.where(z <= -1, tail, np.where(z >= 1, 1.0 - tail, 0.5))

    def pdf(self, y):
        z = np.abs(np.asarray(y, dtype=float) / self.scale)
        safe = np.where(z >= 1, z, 1.0)
        return np.where(z >= 1, 0.5 * self.shape * safe ** (-self.shape - 1) / self.scale, 0.0)

    def support(self):
        s = np.full(np.broadcast(self.shape, self.scale).shape, np.inf)
        return -s, s

    def _ppf(self, tau):
        low = -((2.0 * np.maximum(tau, 1e-300)) ** (-1.0 / self.shape))
        high = (2.0 * np.maximum(1.0 - tau, 1e-300)) ** (-1.0 / self.shape)
        return self.scale * np.where(tau <= 0.5, low, high)


class Affine(Law):
    """Law of ``loc + scale * E`` for a base law ``E`` and ``scale > 0``."""

    def __init__(self, base: Law, loc=0.0, scale=1.0):
        self.base = base
        self.loc = np.asarray(loc, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.closed_form = base.closed_form

    def cdf(self, y):
        return self.base.cdf((np.asarray(y, dtype=float) - self.loc) / self.scale)

    def pdf(self, y):
        return self.base.pdf((np.asarray(y, dtype=float) - self.loc) / self.scale) / self.scale

    def support(self):
        lo, hi = self.base.support()
        with np.errstate(invalid="ignore"):
            return self.loc + self.scale * lo, self.loc + self.scale * hi

    def _ppf(self, tau):
        return self.loc + self.scale * np.asarray(self.base.quantile(tau), dtype=float)


class Mixture(Law):
    """Finite mixture; weights may be arrays that broadcast with ``y``."""

    def __init__(self, weights, components):
        if len(weights) != len(components) or not components:
            raise ValueError("need one weight per component")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.components = list(components)
        if any(np.any(w < 0) for w in self.weights):
            raise ValueError("mixture weights must be nonnegative")
        if not np.allclose(sum(self.weights), 1.0, atol=1e-12):
            raise ValueError("mixture weights must sum to 1")

    def cdf(self, y):
        return sum(w * c.cdf(y) for w, c in zip(self.weights, self.components))

    def pdf(self, y):
        return sum(w * c.pdf(y) for w, c in zip(self.weights, self.components))

    def support(self):
        los, his = zip(*(c.support() for c in self.components))
        return np.minimum.reduce(np.broadcast_arrays(*los)), np.maximum.reduce(np.broadcast_arrays(*his))

    def sample(self, rng: np.random.Generator, size):
        return np.asarray(self.quantile(rng.random(size)), dtype=float)


def _as_covariates(x):
    """Scalar-parameter view for a single row, column view for a batch."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    return x


class ConditionalLaw:
    """Law of ``Y | X = x`` given as a map from covariates to a :class:`Law`.

    ``at(x)`` receives either one covariate row of shape ``(p,)`` or a batch
    of shape ``(n, p)``; the returned law's parameters then broadcast to
    ``(n, 1)`` against level or response arrays of shape ``(L,)``.
    """

    def __init__(self, at: Callable[[np.ndarray], Law], name: str = "law"):
        self._at = at
        self.name = name

    @classmethod
    def constant(cls, law: Law, name: str = "law") -> "ConditionalLaw":
        return cls(lambda x: law, name=name)

    def at(self, x) -> Law:
        return self._at(_as_covariates(x))

    def cdf(self, y, x):
        return self.at(x).cdf(y)

    def pdf(self, y, x):
        return self.at(x).pdf(y)

    def quantile(self, tau, x, tol: float = DEFAULT_TOL):
        return self.at(x).quantile(tau, tol)

    def support(self, x):
        return self.at(x).support()

    def __repr__(self):
        return f"ConditionalLaw({self.name})"
