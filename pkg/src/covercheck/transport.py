"""Wasserstein distances between ``mu`` and an empirical measure.

wasserstein_1d        exact quantile formula on the line and the circle
coupling_cost         cost of the coupling ``(1/n) sum_i mu_i x delta_{X_i}``
                      induced by a certificate
wasserstein_matching  assignment between equal-mass quantile atoms and the
                      sample (small validator)

All costs on 1-D components use the antiderivative of ``|x - z|^p`` against
a piecewise-constant density, so they are closed form per piece.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spaces import TAU

MAX_MATCHING_M = 512
GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class WassersteinResult:
    """``value`` is ``W_p``; ``error_bound`` is the geometric slack of the method."""

    p: float
    value: float
    method: str
    error_bound: float = 0.0

    def to_dict(self):
        return {"p": self.p, "value": self.value, "method": self.method, "error_bound": self.error_bound}


def _check_p(p, hi=8):
    p = float(p)
    if not 1 <= p <= hi:
        raise ValueError(f"p must lie in [1, {hi}], got {p}")
    return p


def _apow(x, z, p):
    """Antiderivative of ``|x - z|^p``."""
    d = x - z
    return np.sign(d) * np.abs(d) ** (p + 1) / (p + 1)


def abs_pow_integral(a, b, z, p):
    """``int_a^b |x - z|^p dx`` (vectorised, ``a <= b``)."""
    return _apow(b, z, p) - _apow(a, z, p)


def _quantile(comp, u):
    """Quantile map of a component on mass coordinates ``u`` (skips null pieces)."""
    cum, brk, rate = comp.fcum, comp.fbreaks, comp.frates
    k = np.searchsorted(cum, u, side="right") - 1
    k = np.clip(k, 0, len(rate) - 1)
    # step over zero-mass pieces to the first piece with positive rate
    pos = np.flatnonzero(rate > 0)
    j = pos[np.clip(np.searchsorted(pos, k), 0, len(pos) - 1)]
    return brk[j] + (u - cum[j]) / rate[j]


def _transport_cost(comp, u_breaks, targets, p):
    """``int |F^{-1}(u) - target(u)|^p du`` with ``target`` constant between ``u_breaks``.

    ``targets[k]`` is the target on ``[u_breaks[k], u_breaks[k+1]]``.
    Density breakpoints are inserted so each slice has one constant rate.
    """
    u = np.union1d(u_breaks, comp.fcum[(comp.fcum > u_breaks[0]) & (comp.fcum < u_breaks[-1])])
    mid = (u[:-1] + u[1:]) / 2
    k = np.clip(np.searchsorted(u_breaks, mid, side="right") - 1, 0, len(targets) - 1)
    z = np.asarray(targets)[k]
    seg = np.clip(np.searchsorted(comp.fcum, mid, side="right") - 1, 0, len(comp.frates) - 1)
    rate = comp.frates[seg]
    ok = (rate > 0) & (u[1:] > u[:-1])
    x0 = comp.fbreaks[seg] + (u[:-1] - comp.fcum[seg]) / np.where(ok, rate, 1)
    x1 = comp.fbreaks[seg] + (u[1:] - comp.fcum[seg]) / np.where(ok, rate, 1)
    # du = rate dx, so the u-integral is rate times the x-integral
    vals = rate * abs_pow_integral(x0, x1, z, p)
    return float(np.sum(vals[ok]))


def _interval_cost(comp, xs, p):
    n = len(xs)
    ub = np.arange(n + 1) / n
    return _transport_cost(comp, ub, np.sort(xs), p)


def _circle_cost(comp, zs, p, theta):
    """Lifted cost ``int_0^1 |F^{-1}(u) - G^{-1}(u + theta)|^p du`` (``zs`` sorted)."""
    n = len(zs)
    lo = math.floor(theta * n)
    ks = np.arange(lo, lo + n + 1)
    # atom ks[k] (lifted by whole turns) serves u in [edges[k], edges[k+1]]
    edges = np.clip(np.append(ks, lo + n + 1) / n - theta, 0.0, 1.0)
    tgt = zs[ks % n] + 2.0 * np.floor_divide(ks, n)
    return _transport_cost(comp, edges, tgt, p)


def _golden_min(f, a, b, tol=1e-12, max_iter=200):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def wasserstein_1d(space, sample, p=1):
    """Exact ``W_p(mu, empirical)`` on an interval, two-interval or circle space.

    On the line ``W_p^p = int_0^1 |F^{-1}(u) - Q(u)|^p du``.  On the circle the
    lifted cost is minimised over the rotation offset ``theta``: candidate
    offsets at the sample alignment points ``k/n`` are scanned, then the best
    bracket is refined by golden-section search (the cost is convex in
    ``theta``).
    """
    p = _check_p(p)
    xs = np.sort(np.asarray(sample, dtype=float).ravel())
    if len(xs) == 0:
        raise ValueError("empty sample")
    comp = space.components[0] if space.is_one_dimensional else None
    if space.kind in ("interval", "two_interval"):
        return WassersteinResult(p, _interval_cost(comp, xs, p) ** (1 / p), "quantile_exact")
    if space.kind != "circle":
        raise ValueError(f"wasserstein_1d needs a line or circle space, got {space.kind!r}")
    n = len(xs)
    xs = np.mod(xs, 2.0)
    xs.sort()

    def cost(t):
        return _circle_cost(comp, xs, p, t)

    steps = min(n, 200)
    grid = np.arange(-steps, steps + 1) / steps
    vals = [cost(t) for t in grid]
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    t, v = _golden_min(cost, a, b)
    v = min(v, vals[k])
    return WassersteinResult(p, max(v, 0.0) ** (1 / p), "quantile_exact")


# --- certificate coupling ----------------------------------------------------------

def _line_piece_cost(comp, a, b, z, p):
    """``int_a^b |x - z|^p dmu`` on a line component."""
    brk = comp.fbreaks
    pts = np.concatenate([[a], brk[(brk > a) & (brk < b)], [b]])
    mid = (pts[:-1] + pts[1:]) / 2
    seg = np.clip(np.searchsorted(brk, mid, side="right") - 1, 0, len(comp.frates) - 1)
    return float(np.sum(comp.frates[seg] * abs_pow_integral(pts[:-1], pts[1:], z, p)))


def _circle_piece_cost(comp, a, b, c, p):
    """Same on the circle: split at antipodes, use the nearest lift of ``c``."""
    anti = c + 1.0 + 2.0 * np.arange(-2, 2)
    pts = np.concatenate([[a], np.sort(anti[(anti > a) & (anti < b)]), [b]])
    total = 0.0
    for x0, x1 in zip(pts[:-1], pts[1:]):
        m = (x0 + x1) / 2
        lift = c + 2.0 * round((m - c) / 2.0)
        total += _line_piece_cost(comp, x0, x1, lift, p)
    return total


def coupling_cost(cert, p=1, validate=True):
    """``W_p`` cost of the coupling induced by a certificate.

    Exact for line and circle spaces.  For graphs and cubes each piece is
    represented by its midpoint, and ``error_bound`` is the largest half
    piece diameter.
    """
    from .certificates import _piece_masses, validate_certificate

    p = _check_p(p)
    if validate:
        rep = validate_certificate(cert)
        if not rep.ok:
            raise ValueError(f"invalid certificate: {rep.flags}")
    space = cert.space
    n = cert.n
    pm = _piece_masses(space, cert.pieces)
    gm = np.array([pm[list(g)].sum() for g in cert.groups])
    total = 0.0
    err = 0.0
    for g, b, m in cert.alloc:
        m = float(m)
        if m <= 0 or gm[g] <= 0:
            continue
        w = m / n / gm[g]
        for k in cert.groups[g]:
            if pm[k] <= 0:
                continue
            piece = cert.pieces[k]
            if space.kind in ("interval", "two_interval"):
                c, a, bb = piece
                total += w * _line_piece_cost(space.components[c], float(a), float(bb), float(cert.centers[b]), p)
            elif space.kind == "circle":
                c, a, bb = piece
                total += w * _circle_piece_cost(space.components[c], float(a), float(bb), float(cert.centers[b]), p)
            elif space.kind == "graph":
                c, a, bb = piece
                t = (float(a) + float(bb)) / 2
                d = space.distance((c, t), cert.centers[b])
                total += w * pm[k] * d**p
                err = max(err, (float(bb) - float(a)) / 2 * float(space.ell))
            else:
                lo, hi = np.asarray(piece[0], float), np.asarray(piece[1], float)
                d = space.distance((lo + hi) / 2, cert.centers[b])
                total += w * pm[k] * d**p
                half = (hi - lo) / 2
                err = max(err, float(half.max() if space.metric == "linf" else np.sqrt(np.sum(half**2))))
    method = "certificate_upper" if err == 0 else "certificate_midpoint"
    return WassersteinResult(p, max(total, 0.0) ** (1 / p), method, err)


# --- discrete matching --------------------------------------------------------------

def _quantile_atoms(space, m):
    if space.kind in ("interval", "two_interval", "circle"):
        u = (np.arange(m) + 0.5) / m
        return _quantile(space.components[0], u)
    if space.kind in ("cube_linf", "cube_l2"):
        k = round(m ** (1 / space.D))
        if k**space.D != m:
            raise ValueError(f"m = {m} is not a perfect {space.D}-th power")
        if not np.allclose(space.grid, space.grid.flat[0]):
            raise ValueError("matching atoms on cubes need a uniform density")
        axis = (np.arange(k) + 0.5) / k
        mesh = np.meshgrid(*([axis] * space.D), indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=1)
    raise ValueError(f"no quantile atoms for {space.kind!r}")


def _pairwise(space, atoms, sample):
    if space.kind in ("interval", "two_interval"):
        return np.abs(atoms[:, None] - sample[None, :])
    if space.kind == "circle":
        d = np.abs(atoms[:, None] - sample[None, :]) % 2.0
        return np.minimum(d, 2.0 - d)
    diff = np.abs(atoms[:, None, :] - sample[None, :, :])
    if space.metric == "linf":
        return diff.max(axis=2)
    return np.sqrt(np.sum(diff**2, axis=2))


def wasserstein_matching(space, sample, m, p=1):
    """Assignment cost between ``m`` equal-mass quantile atoms and the sample.

    Each of the ``n`` sample points is repeated ``m / n`` times and the
    ``m x m`` assignment problem is solved exactly.
    """
    p = _check_p(p)
    sample = np.asarray(sample, dtype=float)
    n = len(sample)
    if not 1 <= m <= MAX_MATCHING_M or m % n:
        raise ValueError(f"need m <= {MAX_MATCHING_M} and n | m, got m={m}, n={n}")
    atoms = _quantile_atoms(space, m)
    cost = _pairwise(space, atoms, sample) ** p
    cost = np.repeat(cost, m // n, axis=1)
    rows, cols = linear_sum_assignment(cost)
    return WassersteinResult(p, float(cost[rows, cols].mean()) ** (1 / p), "matching_discrete")


def bound_chain_ok(w, cost, r, tol=TAU):
    """``W_p <= coupling cost <= r`` up to tolerance and the reported geometric error."""
    return w.value <= cost.value + cost.error_bound + tol and cost.value <= r + cost.error_bound + tol
