"""Population quantities for known conditional laws.

Everything here is exact up to numerical inversion: quantiles, the
length-minimizing tail allocation, density superlevel sets, and the costs
of connectedness and of truncating the allocation range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .laws import DEFAULT_TOL, ConditionalLaw, Law

__all__ = [
    "OracleInterval",
    "HdrResult",
    "BalanceCheck",
    "ShortestInterval",
    "oracle_quantile",
    "oracle_lengths",
    "oracle_allocation",
    "check_balanced_density",
    "hdr",
    "valley_ratio",
    "gap_lower_bound",
    "connected_hull",
    "truncation_cost",
    "brute_force_shortest_interval",
    "golden_section_min",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    """Minimize ``f`` on ``[a, b]`` assuming unimodality; returns ``(x, f(x))``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _law(law, x) -> Law:
    return law.at(x) if isinstance(law, ConditionalLaw) else law


def oracle_quantile(law, x, tau, tol: float = DEFAULT_TOL):
    """``inf{y : F(y | x) >= tau}``; closed form when the law has one."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any((tau_arr < 0) | (tau_arr > 1)):
        raise ValueError("quantile level must lie in [0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _law(law, x).quantile(tau, tol)


def _length_fn(dist: Law, alpha: float, tol: float):
    def lengths(taus):
        taus = np.asarray(taus, dtype=float)
        upper = np.where(taus >= alpha, 1.0, np.minimum(1.0 - alpha + taus, 1.0))
        lo = np.asarray(dist.quantile(taus, tol), dtype=float)
        hi = np.asarray(dist.quantile(upper, tol), dtype=float)
        with np.errstate(invalid="ignore"):
            out = hi - lo
        return np.where(np.isnan(out), np.inf, out)
    return lengths


def oracle_lengths(law, x, alpha: float, taus, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Population core lengths ``L_tau(x)``; batch ``x`` gives shape ``(n, len(taus))``."""
    return _length_fn(_law(law, x), alpha, tol)(taus)


@dataclass(frozen=True)
class OracleInterval:
    tau_star: float
    lo: float
    hi: float
    length: float
    bounds: tuple[float, float]


def oracle_allocation(law, x, alpha: float, fine_grid_size: int = 2001,
                      epsilon: float = 0.0, tol: float = DEFAULT_TOL) -> OracleInterval:
    """Smallest length-minimizing allocation over ``[epsilon, alpha - epsilon]``.

    A uniform scan of ``fine_grid_size`` allocations is refined by
    golden-section search over the cells either side of the best scan point;
    the refinement is accepted only on strict improvement so that flat
    stretches keep the leftmost minimizer. ``epsilon = 0`` is the full
    problem, where boundary cores use the support endpoints.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if fine_grid_size < 100:
        raise ValueError("fine_grid_size must be at least 100")
    if not 0 <= epsilon < alpha / 2:
        raise ValueError("epsilon must lie in [0, alpha/2)")
    dist = _law(law, x)
    length = _length_fn(dist, alpha, tol)
    a, b = epsilon, alpha - epsilon
    taus = np.linspace(a, b, fine_grid_size)
    taus[-1] = b
    vals = length(taus)
    if not np.any(np.isfinite(vals)):
        raise ValueError("every candidate core has infinite length")
    j = int(np.argmin(vals))
    t_best, l_best = float(taus[j]), float(vals[j])
    left, right = taus[max(j - 1, 0)], taus[min(j + 1, fine_grid_size - 1)]
    t_g, l_g = golden_section_min(lambda t: float(length(np.array([t]))[0]), left, right)
    # improvements below the inversion accuracy are noise, not a better allocation
    if l_g < l_best - max(1e-13, 10.0 * tol) * max(1.0, abs(l_best)):
        t_best, l_best = float(t_g), float(l_g)
    lo = float(np.asarray(dist.quantile(t_best, tol)))
    hi = lo + l_best
    return OracleInterval(t_best, lo, hi, l_best, (a, b))


@dataclass(frozen=True)
class BalanceCheck:
    """``kind`` is ``interior``, ``lower`` or ``upper``.

    For interior allocations ``value`` is ``|f(lo) - f(hi)|``; at a boundary
    it is the one-sided derivative of the core length.
    """

    kind: str
    value: float
    ok: bool


def check_balanced_density(law, x, tau_star: float, alpha: float, tol: float = 1e-3,
                           h: float = 1e-6) -> BalanceCheck:
    dist = _law(law, x)
    length = _length_fn(dist, alpha, DEFAULT_TOL)
    s_lo, s_hi = (float(np.asarray(v)) for v in dist.support())
    if tau_star <= 0.0:
        d = float((length(np.array([h]))[0] - length(np.array([0.0]))[0]) / h)
        return BalanceCheck("lower", d, math.isfinite(s_lo) and d >= 0)
    if tau_star >= alpha:
        d = float((length(np.array([alpha]))[0] - length(np.array([alpha - h]))[0]) / h)
        return BalanceCheck("upper", d, math.isfinite(s_hi) and d <= 0)
    lo = dist.quantile(tau_star)
    hi = dist.quantile(1.0 - alpha + tau_star)
    r = float(abs(dist.pdf(lo) - dist.pdf(hi)))
    return BalanceCheck("interior", r, r <= tol)


@dataclass(frozen=True)
class HdrResult:
    level: float
    components: tuple[tuple[float, float], ...]
    total_mass: float
    total_length: float


def _scan_range(dist: Law, tail: float = 5e-7) -> tuple[float, float]:
    s_lo, s_hi = (float(np.asarray(v)) for v in dist.support())
    a = s_lo if math.isfinite(s_lo) else float(dist.quantile(tail))
    b = s_hi if math.isfinite(s_hi) else float(dist.quantile(1.0 - tail))
    return a, b


def _edge(dist: Law, lam: float, outside: float, inside: float, iters: int = 100) -> float:
    """Bisect the crossing of ``f = lam`` between an outside and an inside point."""
    for _ in range(iters):
        mid = 0.5 * (outside + inside)
        if mid in (outside, inside):
            break
        if float(dist.pdf(mid)) >= lam:
            inside = mid
        else:
            outside = mid
    return inside


def _superlevel(dist: Law, ys: np.ndarray, fs: np.ndarray, lam: float):
    above = fs >= lam
    comps = []
    i, n = 0, ys.size
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        a = ys[i] if i == 0 else _edge(dist, lam, ys[i - 1], ys[i])
        b = ys[j] if j == n - 1 else _edge(dist, lam, ys[j + 1], ys[j])
        comps.append((float(a), float(b)))
        i = j + 1
    return comps


def _mass(dist: Law, comps) -> float:
    return float(sum(dist.cdf(b) - dist.cdf(a) for a, b in comps))


def _merge(comps, gap: float):
    out = []
    for a, b in sorted(comps):
        if out and a - out[-1][1] <= gap:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _difference(outer, inner, min_len: float):
    """Pieces of the union ``outer`` not covered by the union ``inner``."""
    pieces = []
    for a, b in outer:
        cur = a
        for c, d in inner:
            if d <= cur or c >= b:
                continue
            if c > cur:
                pieces.append((cur, c))
            cur = max(cur, d)
        if cur < b:
            pieces.append((cur, b))
    return [(a, b) for a, b in pieces if b - a > min_len]


def hdr(law, x, alpha: float, tol: float = 1e-7, scan_size: int = 4096) -> HdrResult:
    """Density superlevel set of mass ``1 - alpha``.

    The threshold is found by bisection on the mass of ``{f >= lam}``, whose
    components come from sign changes of ``f - lam`` on a scan grid refined
    by local bisection. When the mass jumps across the target (a density
    plateau at the threshold) the plateau is filled from the left until the
    mass is exactly ``1 - alpha``.
    """
    dist = _law(law, x)
    target = 1.0 - alpha
    a, b = _scan_range(dist)
    ys = np.linspace(a, b, scan_size)
    fs = np.asarray(dist.pdf(ys), dtype=float)
    scale = max(b - a, 1e-300)
    lam_lo, lam_hi = 0.0, float(fs.max())
    lo_comps = _superlevel(dist, ys, fs, 0.0)
    if _mass(dist, lo_comps) < target - tol:
        raise ValueError("mass target unreachable on the scan grid")
    comps, mass = lo_comps, _mass(dist, lo_comps)
    hi_comps = []
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        cand = _superlevel(dist, ys, fs, lam)
        m = _mass(dist, cand)
        if abs(m - target) <= tol:
            comps, mass, lam_lo = cand, m, lam
            break
        if m > target:
            lam_lo, lo_comps = lam, cand
        else:
            lam_hi, hi_comps = lam, cand
        if lam_hi - lam_lo <= 1e-14 * max(lam_hi, 1e-300):
            comps = None
            break
    else:
        comps = None
    if comps is None:
        base = hi_comps
        deficit = target - _mass(dist, base)
        filled = list(base)
        for c, d in _difference(lo_comps, base, 1e-9 * scale):
            if deficit <= 0:
                break
            piece = float(dist.cdf(d) - dist.cdf(c))
            if piece <= deficit:
                filled.append((c, d))
                deficit -= piece
            else:
                end = float(dist.quantile(min(float(dist.cdf(c)) + deficit, 1.0)))
                filled.append((c, end))
                deficit = 0.0
        comps = _merge(filled, 1e-9 * scale)
        mass = _mass(dist, comps)
    comps = tuple((float(u), float(v)) for u, v in comps)
    return HdrResult(float(lam_lo), comps, float(mass), float(sum(v - u for u, v in comps)))


def valley_ratio(result: HdrResult, law, x, points: int = 4097) -> float:
    """``sup f / lam`` over the open valley between two HDR components."""
    if len(result.components) != 2:
        raise ValueError(f"need exactly two HDR components, got {len(result.components)}")
    dist = _law(law, x)
    (_, b1), (a2, _) = result.components
    ys = np.linspace(b1, a2, points + 2)[1:-1]
    return float(np.max(dist.pdf(ys)) / result.level)


def gap_lower_bound(result: HdrResult, law, x) -> float:
    """``|H| + (1 - beta)(a2 - b1)`` for a two-component HDR."""
    beta = valley_ratio(result, law, x)
    (_, b1), (a2, _) = result.components
    return result.total_length + (1.0 - beta) * (a2 - b1)


def connected_hull(components) -> tuple[float, float]:
    comps = list(components)
    if not comps:
        raise ValueError("connected hull of an empty set")
    return float(min(c[0] for c in comps)), float(max(c[1] for c in comps))


def truncation_cost(law, x_sample, alpha: float, epsilon: float,
                    fine_grid_size: int = 2001) -> float:
    """Average over ``x_sample`` of ``L*_eps(x) - L*(x)``."""
    if not 0 < epsilon < alpha / 2:
        raise ValueError("epsilon must lie in (0, alpha/2)")
    xs = np.asarray(x_sample, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    total = 0.0
    for row in xs:
        full = oracle_allocation(law, row, alpha, fine_grid_size)
        trunc = oracle_allocation(law, row, alpha, fine_grid_size, epsilon=epsilon)
        total += trunc.length - full.length
    return max(total / xs.shape[0], 0.0)


@dataclass(frozen=True)
class ShortestInterval:
    lo: float
    hi: float
    length: float


def brute_force_shortest_interval(law, x, alpha: float,
                                  endpoint_grid_size: int = 2000) -> ShortestInterval:
    """Shortest ``[u, v]`` of mass ``1 - alpha`` by scanning lower endpoints.

    For each ``u`` the upper end is ``q(F(u) + 1 - alpha)``; the best scan
    point is refined by golden-section search over its neighbouring cells.
    Works on the response scale only and never touches allocations.
    """
    if endpoint_grid_size < 500:
        raise ValueError("endpoint_grid_size must be at least 500")
    dist = _law(law, x)
    s_lo = float(np.asarray(dist.support()[0]))
    u_min = s_lo if math.isfinite(s_lo) else float(dist.quantile(1e-12))
    u_max = float(dist.quantile(alpha))
    us = np.linspace(u_min, u_max, endpoint_grid_size)

    def upper(u):
        lvl = np.minimum(np.asarray(dist.cdf(u), dtype=float) + (1.0 - alpha), 1.0)
        return np.asarray(dist.quantile(lvl), dtype=float)

    lengths = upper(us) - us
    j = int(np.argmin(lengths))
    u_best, l_best = float(us[j]), float(lengths[j])
    left, right = us[max(j - 1, 0)], us[min(j + 1, us.size - 1)]
    u_g, l_g = golden_section_min(lambda u: float(upper(np.array([u]))[0] - u), left, right)
    if l_g < l_best:
        u_best, l_best = float(u_g), float(l_g)
    return ShortestInterval(u_best, u_best + l_best, l_best)
