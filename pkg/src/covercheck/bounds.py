"""Rate formulas and the average-case Lipschitz bound.

Rates
-----
``rate_r`` gives the radius ``r(n)`` at which each family is
``(eps(n), r(n))``-disintegrable for large ``n``; ``rate_eps`` gives the
failure probability ``eps(n)``.  ``rate_best_known`` is a shape-only
comparison curve with all hidden constants set to 1.

Average case
------------
For a disintegration ``mu = (1/n) sum_i mu_i`` with ``mu_i`` supported on
``B(X_i, r)`` and any Lipschitz ``f``::

    |int f dmu - (1/n) sum_i f(X_i)|
        <= (1/n) sum_i int |f(x) - f(X_i)| mu_i(dx)
        <= r (1/n) sum_i Lip(f; B(X_i, r))

``avg_case_gap`` evaluates all three terms and the worst-case comparator
``Lip(f) W_1(mu, empirical)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .spaces import TAU

FAMILIES = ("interval", "circle", "graph", "cube_linf", "cube_l2")


@dataclass
class RateParams:
    """Parameters of a rate theorem.

    Attributes
    ----------
    family : str
        One of ``interval``, ``circle``, ``graph``, ``cube_linf``, ``cube_l2``.
    alpha : float
        Failure exponent, ``eps(n) = n^-alpha``.
    c, C : float
        Density bounds.
    D : int
        Cube dimension.
    edges : int
        Edge count (graph family).
    p : float
        Wasserstein order (comparison curve only).
    """

    family: str = "interval"
    alpha: float = 1.0
    c: float = 1.0
    C: float = None
    D: int = 1
    edges: int = None
    p: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.alpha > 0 or not self.c > 0:
            raise ValueError("alpha and c must be positive")
        if self.C is not None and self.C < self.c:
            raise ValueError("need C >= c")
        if self.family.startswith("cube") and (int(self.D) != self.D or self.D < 1):
            raise ValueError("cube family needs an integer D >= 1")
        if self.family == "graph" and (self.edges is None or self.edges < 1):
            raise ValueError("graph family needs edges >= 1")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @classmethod
    def for_space(cls, space, alpha=1.0, **kw):
        """Parameters matching a space (density bounds read from it)."""
        c, C = space.density_bounds
        fam = space.kind
        if fam == "two_interval":
            raise ValueError("no rate theorem for the two-interval space")
        extra = {}
        if fam.startswith("cube"):
            extra["D"] = space.D
        if fam == "graph":
            extra["edges"] = len(space.edges)
        extra.update(kw)
        return cls(fam, alpha, c, C, **extra)


def rate_r(params, n):
    """Theorem radius ``r(n)`` for the family (``n >= 2``)."""
    if n < 2:
        raise ValueError("rate_r needs n >= 2")
    a, c = params.alpha, params.c
    logn = math.log(n) / n
    fam = params.family
    if fam in ("interval", "graph"):
        return 4.0 / c * math.sqrt((2 + a) * logn)
    if fam == "circle":
        return 2.0 / c * math.sqrt((2 + a) * logn)
    D = int(params.D)
    r = c ** (-1 / D) * (4 * 3 ** (D - 1)) ** (1 / D) * (2 + a) ** (1 / (2 * D)) * logn ** (1 / (2 * D))
    return r * math.sqrt(D) if fam == "cube_l2" else r


def rate_eps(params, n):
    """Failure probability bound ``eps(n)``; the graph family carries an edge factor."""
    eps = float(n) ** (-params.alpha)
    if params.family == "graph":
        E = params.edges
        base = E * (E - 1)
        eps *= 1.0 if E - 1 == 0 else float(base) ** (E - 1)
    return eps


def rate_best_known(params, n):
    """Shape-only comparison curve (hidden constants set to 1, ``n >= 3``)."""
    if n < 3:
        raise ValueError("rate_best_known needs n >= 3")
    p, D = params.p, params.D
    logf = math.log(n) ** (1 / p) if 2 * p == D else 1.0
    return n ** (-1 / max(2 * p, D)) * logf + n ** (-1 / max(2, p)) * math.sqrt(math.log(n))


# --- test functions ------------------------------------------------------------

class PiecewiseLinear:
    """Continuous-or-jump piecewise-linear function on the real line.

    Linear between consecutive knots, constant outside ``[knots[0], knots[-1]]``.
    A jump is encoded as a steep piece; for local Lipschitz constants only
    pieces meeting the interior of a ball piece count.

    Parameters
    ----------
    knots : array_like
        Strictly increasing.
    values : array_like
    name : str
    """

    def __init__(self, knots, values, name="piecewise_linear"):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.knots.ndim != 1 or len(self.knots) != len(self.values) or len(self.knots) < 1:
            raise ValueError("knots and values must be 1-D of equal nonzero length")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        self.slopes = np.diff(self.values) / np.diff(self.knots)
        self.name = name

    def __call__(self, x):
        return np.interp(x, self.knots, self.values)

    @property
    def lipschitz(self):
        return float(np.max(np.abs(self.slopes))) if len(self.slopes) else 0.0

    def local_lipschitz(self, a, b):
        """Largest ``|slope|`` of the pieces meeting ``(a, b)``."""
        if len(self.slopes) == 0 or b <= a:
            return 0.0
        hit = (self.knots[1:] > a) & (self.knots[:-1] < b)
        return float(np.max(np.abs(self.slopes[hit]))) if hit.any() else 0.0

    def _breaks(self, a, b):
        k = self.knots
        return np.concatenate([[a], k[(k > a) & (k < b)], [b]])

    def integral(self, comp, a, b):
        """``int_a^b f dmu`` for a line component (exact: linear times constant)."""
        pts = np.union1d(self._breaks(a, b), comp.fbreaks[(comp.fbreaks > a) & (comp.fbreaks < b)])
        mid = (pts[:-1] + pts[1:]) / 2
        rate = comp.frates[np.clip(np.searchsorted(comp.fbreaks, mid, side="right") - 1, 0, len(comp.frates) - 1)]
        return float(np.sum(rate * (pts[1:] - pts[:-1]) * (self(pts[:-1]) + self(pts[1:])) / 2))

    def abs_dev_integral(self, comp, a, b, y):
        """``int_a^b |f(x) - y| dmu`` (exact; pieces split at sign changes)."""
        pts = np.union1d(self._breaks(a, b), comp.fbreaks[(comp.fbreaks > a) & (comp.fbreaks < b)])
        total = 0.0
        for x0, x1 in zip(pts[:-1], pts[1:]):
            v0, v1 = self(x0) - y, self(x1) - y
            rate = comp.frates[min(max(np.searchsorted(comp.fbreaks, (x0 + x1) / 2, side="right") - 1, 0),
                                   len(comp.frates) - 1)]
            if v0 * v1 >= 0:
                total += rate * (x1 - x0) * (abs(v0) + abs(v1)) / 2
            else:
                xm = x0 + (x1 - x0) * v0 / (v0 - v1)
                total += rate * ((xm - x0) * abs(v0) + (x1 - xm) * abs(v1)) / 2
        return total


def constant(value=1.0, lo=-1.0, hi=1.0):
    return PiecewiseLinear([lo, hi], [value, value], name="constant")


def spike(sample, L=100.0, eps_target=0.25, gap=None):
    """Tent ``L (delta - |x - c|)_+`` centered between consecutive sample points.

    ``c`` is the midpoint of gap ``gap`` (index into the sorted sample; the
    widest gap by default) and ``delta = min(gap / 2, sqrt(eps_target / L))``,
    so the tent vanishes at every sample point and ``int f dx <= eps_target``.
    """
    y = np.sort(np.asarray(sample, dtype=float))
    if len(y) < 2:
        raise ValueError("spike needs at least two sample points")
    gaps = np.diff(y)
    k = int(np.argmax(gaps)) if gap is None else int(gap)
    if not gaps[k] > 0:
        raise ValueError("chosen gap has zero width")
    c = (y[k] + y[k + 1]) / 2
    delta = min(gaps[k] / 2, math.sqrt(eps_target / L))
    f = PiecewiseLinear([c - delta, c, c + delta], [0.0, L * delta, 0.0], name="spike")
    f.center, f.delta, f.height = c, delta, L * delta
    return f


def component_indicator(space, n):
    """``n`` times the indicator of the left component of a two-interval space."""
    if space.kind != "two_interval":
        raise ValueError("component_indicator needs a two-interval space")
    comp = space.components[0]
    a, b, c = (float(v) for v in comp.breaks[:3])
    return PiecewiseLinear([a, b, c], [float(n), float(n), 0.0], name="component_indicator")


def random_piecewise_linear(rng, lo=0.0, hi=1.0, knots=8, slope=10.0):
    """Random continuous piecewise-linear function with slopes in ``[-slope, slope]``."""
    x = np.sort(rng.random(knots - 2)) * (hi - lo) + lo
    x = np.unique(np.concatenate([[lo], x, [hi]]))
    s = (2 * rng.random(len(x) - 1) - 1) * slope
    v = np.concatenate([[2 * rng.random(1)[0] - 1], np.cumsum(s * np.diff(x))])
    return PiecewiseLinear(x, v, name="random_pl")


@dataclass
class AvgCaseGap:
    """``lhs <= mid <= rhs_avg`` on a valid certificate; ``rhs_worst`` for comparison."""

    lhs: float
    mid: float
    rhs_avg: float
    rhs_worst: float
    local_lipschitz: np.ndarray = None

    @property
    def holds(self):
        return self.lhs <= self.rhs_avg + TAU and self.lhs <= self.mid + TAU and self.mid <= self.rhs_avg + TAU

    def to_dict(self):
        return {"lhs": float(self.lhs), "mid": float(self.mid), "rhs_avg": float(self.rhs_avg),
                "rhs_worst": float(self.rhs_worst)}


def local_lipschitz(f, trace):
    """Lipschitz constant of ``f`` over a ball trace (conservative across gaps)."""
    pieces = trace.pieces
    if not pieces:
        return 0.0
    if len(pieces) == 1:
        return f.local_lipschitz(float(pieces[0][1]), float(pieces[0][2]))
    # several pieces: take the hull, which bounds cross-piece difference quotients too
    return f.local_lipschitz(min(float(p[1]) for p in pieces), max(float(p[2]) for p in pieces))


def empirical_gap(space, sample, f):
    """``|int f dmu - (1/n) sum_i f(X_i)|`` on a line space (exact for piecewise-linear ``f``)."""
    comp = space.components[0]
    x = np.asarray(sample, dtype=float)
    integral = sum(f.integral(comp, a, b) for a, b in _support_intervals(comp))
    return abs(integral - float(np.mean(f(x))))


def ball_lipschitz(space, sample, r, f):
    """Local Lipschitz constants of ``f`` over each ``B(X_i, r)``."""
    return np.array([local_lipschitz(f, space.ball_trace(float(xi), float(r))) for xi in sample])


def avg_case_gap(cert, f, validate=True, w1=None):
    """Evaluate the average-case bound for ``f`` on a certificate.

    Parameters
    ----------
    cert : Certificate
        On an interval or two-interval space.
    f : PiecewiseLinear
    validate : bool
        Validate the certificate first (raises ``ValueError`` if invalid).
    w1 : float, optional
        Precomputed ``W_1(mu, empirical)``.
    """
    from .certificates import _piece_masses, validate_certificate
    from .transport import wasserstein_1d

    space = cert.space
    if space.kind not in ("interval", "two_interval"):
        raise ValueError("avg_case_gap evaluates line-space test functions only")
    if validate:
        rep = validate_certificate(cert)
        if not rep.ok:
            raise ValueError(f"invalid certificate: {rep.flags}")
    comp = space.components[0]
    n = cert.n
    x = np.array([float(c) for c in cert.centers])
    r = float(cert.r)
    lhs = empirical_gap(space, x, f)

    pm = _piece_masses(space, cert.pieces)
    gm = np.array([pm[list(g)].sum() for g in cert.groups])
    mid = 0.0
    for g, b, m in cert.alloc:
        m = float(m)
        if m <= 0 or gm[g] <= 0:
            continue
        fx = float(f(x[b]))
        dev = sum(f.abs_dev_integral(comp, float(cert.pieces[k][1]), float(cert.pieces[k][2]), fx)
                  for k in cert.groups[g] if pm[k] > 0)
        mid += m / n * dev / gm[g]

    lips = ball_lipschitz(space, x, r, f)
    rhs_avg = r * float(lips.mean())
    if w1 is None:
        w1 = wasserstein_1d(space, x, 1).value
    rhs_worst = f.lipschitz * w1
    return AvgCaseGap(lhs, mid, rhs_avg, rhs_worst, lips)


def _support_intervals(comp):
    """Maximal intervals of a line component with positive density."""
    out = []
    for k, v in enumerate(comp.frates):
        a, b = comp.fbreaks[k], comp.fbreaks[k + 1]
        if v > 0:
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
    return out
