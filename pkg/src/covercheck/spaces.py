"""Metric probability spaces with exact ball geometry.

Supported kinds
---------------
``interval``      [0, 1] with the Euclidean metric.
``circle``        arclength coordinate s in [0, 2), geodesic metric, diameter 1.
``graph``         a connected simple graph; each edge has length 1/|E| and a
                  point is ``(edge, t)`` with ``t`` the fraction of the edge
                  travelled from its first endpoint.
``cube_linf``     [0, 1]^D with the l-infinity metric.
``cube_l2``       [0, 1]^D with the Euclidean metric.
``two_interval``  [-1, -(1-q)] U [0, 1-q] with the Euclidean metric and the
                  uniform (Lebesgue) probability.

Densities are piecewise constant and are always given relative to the
space's uniform probability measure, so the uniform law has density 1.

All one-dimensional kinds are stored as a list of :class:`Component` objects
(one per interval, circle or graph edge) carrying a piecewise-constant mass
rate per unit of local coordinate.  Geometry can be evaluated in floating
point or, with ``exact=True``, in :class:`fractions.Fraction` arithmetic;
floats convert to fractions without rounding.
"""

import bisect
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

TAU = 1e-9
DENSITY_TOL = 1e-12

KINDS = ("interval", "circle", "graph", "cube_linf", "cube_l2", "two_interval")


def to_fraction(x):
    """Exact rational value of ``x``; strings such as ``"1/3"`` are accepted."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (bool, np.bool_)):
        raise ValueError("boolean is not a number")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


def _num(x, exact):
    return to_fraction(x) if exact else float(x)


class GraphPoint(NamedTuple):
    edge: int
    t: float


class Component:
    """A 1-D piece ``[breaks[0], breaks[-1]]`` with constant mass rate per piece.

    ``rates[k]`` is the probability mass per unit of local coordinate on
    ``[breaks[k], breaks[k+1]]``.
    """

    def __init__(self, breaks, rates, cyclic=False):
        self.breaks = tuple(to_fraction(b) for b in breaks)
        self.rates = tuple(to_fraction(v) for v in rates)
        if len(self.breaks) != len(self.rates) + 1 or not self.rates:
            raise ValueError("need len(breaks) == len(values) + 1 >= 2")
        if any(b1 <= b0 for b0, b1 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(v < 0 for v in self.rates):
            raise ValueError("density values must be non-negative")
        cum = [Fraction(0)]
        for k, v in enumerate(self.rates):
            cum.append(cum[-1] + v * (self.breaks[k + 1] - self.breaks[k]))
        self.cum = tuple(cum)
        self.cyclic = cyclic
        self.lo, self.hi = self.breaks[0], self.breaks[-1]
        self.flo, self.fhi = float(self.lo), float(self.hi)
        self.fbreaks = np.array([float(b) for b in self.breaks])
        self.fcum = np.array([float(c) for c in self.cum])
        self.frates = np.array([float(v) for v in self.rates])
        self.total = self.cum[-1]

    def bounds(self, exact=False):
        return (self.lo, self.hi) if exact else (self.flo, self.fhi)

    def cdf(self, x, exact=False):
        """Mass of ``[lo, x]``; ``x`` is clipped to the component."""
        if not exact:
            return np.interp(x, self.fbreaks, self.fcum)
        x = to_fraction(x)
        if x <= self.lo:
            return Fraction(0)
        if x >= self.hi:
            return self.total
        k = bisect.bisect_right(self.breaks, x) - 1
        return self.cum[k] + self.rates[k] * (x - self.breaks[k])

    def mass(self, a, b, exact=False):
        if b <= a:
            return Fraction(0) if exact else 0.0
        return self.cdf(b, exact) - self.cdf(a, exact)

    def rate_at(self, x):
        k = min(max(bisect.bisect_right(self.fbreaks.tolist(), float(x)) - 1, 0), len(self.rates) - 1)
        return self.frates[k]


def _normalized(comps, total):
    """Rescale rates so the exact total mass is 1 (inputs are checked to tolerance first)."""
    if abs(total - 1) > DENSITY_TOL:
        raise ValueError(f"density integrates to {float(total)!r}, not 1")
    if total == 1:
        return tuple(comps)
    return tuple(Component(c.breaks, [v / total for v in c.rates], c.cyclic) for c in comps)


@dataclass(frozen=True)
class RegionTrace:
    """Canonical form of a closed ball.

    For 1-D spaces ``pieces`` is a sorted tuple of disjoint ``(comp, a, b)``
    subintervals.  For cubes ``lo``/``hi`` give the (clipped) l-infinity box,
    and for ``cube_l2`` the ball is ``center``/``radius`` intersected with it.
    """

    pieces: tuple = ()
    lo: tuple = None
    hi: tuple = None
    center: tuple = None
    radius: float = None

    def contains_interval(self, comp, a, b, tol=0.0):
        for c, lo, hi in self.pieces:
            if c == comp and lo - tol <= a and b <= hi + tol:
                return True
        return False


def merge_intervals(intervals):
    """Merge closed intervals ``(a, b)``; returns a sorted disjoint list."""
    out = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            if b > out[-1][1]:
                out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


class Space:
    """Common interface; see the concrete subclasses."""

    kind = None
    components = ()
    diameter = None

    def distance(self, p, q, exact=False):
        raise NotImplementedError

    def sample(self, rng, n=None):
        raise NotImplementedError

    def ball_trace(self, center, r, exact=False):
        raise NotImplementedError

    def union_measure(self, centers, r, subset=None, exact=False, **kw):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    @property
    def is_one_dimensional(self):
        return self.kind in ("interval", "circle", "graph", "two_interval")

    @property
    def density_bounds(self):
        """``(c, C)``: smallest and largest density value on the support."""
        return self._bounds

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r})"


def _check_radius(r):
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r!r}")


def _subset(subset, n):
    if subset is None:
        idx = list(range(n))
    else:
        idx = sorted(set(int(i) for i in subset))
    if not idx:
        raise ValueError("subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError("subset index out of range")
    return idx


class _OneDimSpace(Space):
    """Shared machinery for spaces made of 1-D components."""

    def _local(self, p):
        """``(component, coordinate)`` of a point."""
        raise NotImplementedError

    def _trace_pieces(self, comp, x, r, exact):
        raise NotImplementedError

    def _scale(self, comp):
        """Metric length of one unit of local coordinate on ``comp``."""
        return 1

    def point_list(self, centers):
        """Normalise a sample array or list of points to a list of points."""
        if isinstance(centers, np.ndarray) and centers.ndim == 2 and self.kind == "graph":
            return [GraphPoint(int(e), float(t)) for e, t in centers]
        if isinstance(centers, np.ndarray):
            return [float(c) for c in centers]
        return list(centers)

    def ball_trace(self, center, r, exact=False):
        _check_radius(r)
        comp, x = self._local(center)
        pieces = self._trace_pieces(comp, _num(x, exact), _num(r, exact), exact)
        # boundary-only contacts (e.g. a far vertex at distance exactly r) are null sets
        return RegionTrace(pieces=tuple(sorted(p for p in pieces if p[1] < p[2])))

    def traces(self, centers, r, exact=False):
        return [self.ball_trace(c, r, exact) for c in self.point_list(centers)]

    def union_measure_of_traces(self, traces, exact=False):
        by_comp = {}
        for tr in traces:
            for c, a, b in tr.pieces:
                by_comp.setdefault(c, []).append((a, b))
        total = Fraction(0) if exact else 0.0
        for c, ivs in by_comp.items():
            comp = self.components[c]
            for a, b in merge_intervals(ivs):
                total += comp.mass(a, b, exact)
        return total if exact else float(total)

    def union_measure(self, centers, r, subset=None, exact=False, **kw):
        pts = self.point_list(centers)
        idx = _subset(subset, len(pts))
        _check_radius(r)
        return self.union_measure_of_traces([self.ball_trace(pts[i], r, exact) for i in idx], exact)

    # sampling: map a uniform mass coordinate onto (component, coordinate)
    def _segments(self):
        if getattr(self, "_seg_cache", None) is None:
            starts, comps, x0, rate = [], [], [], []
            acc = 0.0
            for c, comp in enumerate(self.components):
                for k in range(len(comp.rates)):
                    m = float(comp.cum[k + 1] - comp.cum[k])
                    if m > 0:
                        starts.append(acc)
                        comps.append(c)
                        x0.append(float(comp.breaks[k]))
                        rate.append(float(comp.rates[k]))
                    acc += m
            self._seg_cache = (np.array(starts), np.array(comps), np.array(x0), np.array(rate))
        return self._seg_cache

    def _from_mass(self, u):
        starts, comps, x0, rate = self._segments()
        k = np.clip(np.searchsorted(starts, u, side="right") - 1, 0, len(starts) - 1)
        x = x0[k] + (u - starts[k]) / rate[k]
        c = comps[k]
        his = np.array([comp.fhi for comp in self.components])
        return c, np.minimum(x, his[c])

    def piece_mass(self, comp, a, b, exact=False):
        return self.components[comp].mass(a, b, exact)

    def piece_contained(self, comp, a, b, center, r, tol=1e-12):
        """Whether ``[a, b]`` on ``comp`` lies inside the closed ball."""
        tr = self.ball_trace(center, r)
        return tr.contains_interval(comp, float(a), float(b), tol)


class LineSpace(_OneDimSpace):
    """Interval ``[0, 1]`` or the two-interval space, as subsets of the real line.

    A single component spans the convex hull; for the two-interval space the
    gap carries zero mass.
    """

    def __init__(self, kind="interval", breaks=(0, 1), values=(1,), q=None):
        if kind == "interval":
            comp = Component(breaks, values)
            if comp.lo != 0 or comp.hi != 1:
                raise ValueError("interval density must span [0, 1]")
            support = [v for v in comp.rates]
        elif kind == "two_interval":
            q = to_fraction(q if q is not None else DEFAULT_Q)
            if not 0 < q < 1:
                raise ValueError("q must lie in (0, 1)")
            comp = Component((-1, -(1 - q), 0, 1 - q), (1, 0, 1))
            support = [Fraction(1)]
        else:
            raise ValueError(f"not a line kind: {kind!r}")
        self.kind = kind
        self.q = q
        self.components = _normalized([comp], comp.total)
        self.diameter = float(comp.hi - comp.lo)
        self._bounds = (float(min(support)), float(max(support)))

    @property
    def line(self):
        return self.components[0]

    def _local(self, p):
        x = p if not isinstance(p, (tuple, list)) else p[-1]
        return 0, x

    def _trace_pieces(self, comp, x, r, exact):
        lo, hi = self.line.bounds(exact)
        a, b = max(lo, x - r), min(hi, x + r)
        if a > b:
            return []
        if self.kind == "two_interval":
            gap_lo, gap_hi = self.line.breaks[1], self.line.breaks[2]
            if not exact:
                gap_lo, gap_hi = float(gap_lo), float(gap_hi)
            out = []
            if a <= gap_lo:
                out.append((0, a, min(b, gap_lo)))
            if b >= gap_hi:
                out.append((0, max(a, gap_hi), b))
            return out
        return [(0, a, b)]

    def distance(self, p, q, exact=False):
        return abs(_num(self._local(p)[1], exact) - _num(self._local(q)[1], exact))

    def cdf(self, x, exact=False):
        return self.line.cdf(x, exact)

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        ok = (x >= self.line.flo) & (x <= self.line.fhi)
        if self.kind == "two_interval":
            ok &= ~((x > float(self.line.breaks[1])) & (x < float(self.line.breaks[2])))
        return ok

    def sample(self, rng, n=None):
        u = rng.random(1 if n is None else n)
        _, x = self._from_mass(u)
        return float(x[0]) if n is None else x

    def to_dict(self):
        if self.kind == "two_interval":
            return {"kind": "two_interval", "q": _json_num(self.q)}
        c = self.line
        return {"kind": "interval", "density": {"breaks": [_json_num(b) for b in c.breaks],
                                                "values": [_json_num(v) for v in c.rates]}}


DEFAULT_Q = 1 / math.sqrt(2)


class CircleSpace(_OneDimSpace):
    """Circle of circumference 2 (geodesic diameter 1), arclength coordinate."""

    kind = "circle"

    def __init__(self, breaks=(0, 2), values=(1,)):
        # user density is relative to the uniform probability ds / 2
        comp = Component(breaks, [to_fraction(v) / 2 for v in values], cyclic=True)
        if comp.lo != 0 or comp.hi != 2:
            raise ValueError("circle density must span [0, 2]")
        self.components = _normalized([comp], comp.total)
        self.diameter = 1.0
        self._bounds = (2 * float(min(comp.rates)), 2 * float(max(comp.rates)))

    @property
    def line(self):
        return self.components[0]

    def _local(self, p):
        return 0, p

    def _trace_pieces(self, comp, x, r, exact):
        two = Fraction(2) if exact else 2.0
        zero = two * 0
        if r >= 1:
            return [(0, zero, two)]
        x = x % two
        a, b = x - r, x + r
        if a < 0:
            return [(0, zero, b), (0, a + two, two)]
        if b > two:
            return [(0, zero, b - two), (0, a, two)]
        return [(0, a, b)]

    def distance(self, p, q, exact=False):
        two = Fraction(2) if exact else 2.0
        d = abs(_num(p, exact) - _num(q, exact)) % two
        return min(d, two - d)

    def cdf(self, x, exact=False):
        return self.line.cdf(x, exact)

    def sample(self, rng, n=None):
        u = rng.random(1 if n is None else n)
        _, x = self._from_mass(u)
        x = np.where(x >= 2.0, 0.0, x)
        return float(x[0]) if n is None else x

    def to_dict(self):
        c = self.line
        return {"kind": "circle", "density": {"breaks": [_json_num(b) for b in c.breaks],
                                              "values": [_json_num(2 * v) for v in c.rates]}}


def floyd_warshall(n_vertices, edges):
    """All-pairs hop distances; ``inf`` marks unreachable pairs."""
    d = np.full((n_vertices, n_vertices), np.inf)
    np.fill_diagonal(d, 0)
    for u, v in edges:
        d[u, v] = d[v, u] = 1
    for k in range(n_vertices):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


class GraphSpace(_OneDimSpace):
    """Embedded finite connected simple graph with edge length 1/|E|.

    Parameters
    ----------
    vertices : list of (x, y)
        Planar embedding; only used by :meth:`point_from_xy`.
    edges : list of (u, v)
        Vertex index pairs.  Point ``(e, t)`` sits at metric distance
        ``t / |E|`` from ``edges[e][0]``.
    edge_densities : list of (breaks, values), optional
        Per-edge density in ``t``, relative to the uniform probability on the
        graph (each edge carries mass 1/|E| under it).
    """

    kind = "graph"

    def __init__(self, vertices, edges, edge_densities=None):
        self.vertices = [tuple(float(c) for c in v) for v in vertices]
        self.edges = [(int(u), int(v)) for u, v in edges]
        nv, ne = len(self.vertices), len(self.edges)
        if ne < 1:
            raise ValueError("graph needs at least one edge")
        seen = set()
        for u, v in self.edges:
            if u == v or not (0 <= u < nv and 0 <= v < nv):
                raise ValueError(f"invalid edge {(u, v)}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {(u, v)}: graph must be simple")
            seen.add(key)
        hops = floyd_warshall(nv, self.edges)
        if not np.all(np.isfinite(hops)):
            raise ValueError("graph must be connected")
        self.hops = hops.astype(np.int64)
        self.ell = Fraction(1, ne)
        if edge_densities is None:
            edge_densities = [((0, 1), (1,))] * ne
        if len(edge_densities) != ne:
            raise ValueError("need one density per edge")
        comps = []
        support = []
        for breaks, values in edge_densities:
            comps.append(Component(breaks, [to_fraction(v) * self.ell for v in values]))
            support.extend(to_fraction(v) for v in values)
            if comps[-1].lo != 0 or comps[-1].hi != 1:
                raise ValueError("edge densities must span t in [0, 1]")
        self.components = _normalized(comps, sum(c.total for c in comps))
        # upper bound: farthest vertex pair plus one edge
        self.diameter = float((self.hops.max() + 1) * self.ell)
        self._bounds = (float(min(support)), float(max(support)))

    def _local(self, p):
        e, t = p
        e = int(e)
        if not 0 <= e < len(self.edges):
            raise ValueError(f"edge index {e} out of range")
        return e, t

    def _ell(self, exact):
        return self.ell if exact else float(self.ell)

    def vertex_distance(self, p, w, exact=False):
        e, t = self._local(p)
        t = _num(t, exact)
        ell = self._ell(exact)
        u, v = self.edges[e]
        return min(t * ell + int(self.hops[u, w]) * ell, (1 - t) * ell + int(self.hops[v, w]) * ell)

    def distance(self, p, q, exact=False):
        e1, t1 = self._local(p)
        e2, t2 = self._local(q)
        t1, t2 = _num(t1, exact), _num(t2, exact)
        ell = self._ell(exact)
        best = None
        if e1 == e2:
            best = abs(t1 - t2) * ell
        u1, v1 = self.edges[e1]
        u2, v2 = self.edges[e2]
        for a, da in ((u1, t1 * ell), (v1, (1 - t1) * ell)):
            for b, db in ((u2, t2 * ell), (v2, (1 - t2) * ell)):
                d = da + int(self.hops[a, b]) * ell + db
                if best is None or d < best:
                    best = d
        return best

    def _trace_pieces(self, comp, t0, r, exact):
        ell = self._ell(exact)
        one = Fraction(1) if exact else 1.0
        zero = one * 0
        center = (comp, t0)
        out = []
        for e, (u, v) in enumerate(self.edges):
            ivs = []
            du = self.vertex_distance(center, u, exact)
            dv = self.vertex_distance(center, v, exact)
            if r >= du:
                ivs.append((zero, min(one, (r - du) / ell)))
            if r >= dv:
                ivs.append((max(zero, one - (r - dv) / ell), one))
            if e == comp:
                ivs.append((max(zero, t0 - r / ell), min(one, t0 + r / ell)))
            out.extend((e, a, b) for a, b in merge_intervals(ivs))
        return out

    def point_from_xy(self, xy, tol=1e-9):
        """Locate an embedded planar point on an edge as ``GraphPoint``."""
        x = np.asarray(xy, dtype=float)
        for e, (u, v) in enumerate(self.edges):
            pu, pv = np.array(self.vertices[u]), np.array(self.vertices[v])
            seg = pv - pu
            t = float(np.dot(x - pu, seg) / np.dot(seg, seg))
            if -tol <= t <= 1 + tol and np.linalg.norm(pu + t * seg - x) <= tol:
                return GraphPoint(e, min(max(t, 0.0), 1.0))
        raise ValueError(f"point {xy} is not on the embedded graph")

    def sample(self, rng, n=None):
        u = rng.random(1 if n is None else n)
        c, t = self._from_mass(u)
        if n is None:
            return GraphPoint(int(c[0]), float(t[0]))
        return np.column_stack([c.astype(float), t])

    def to_dict(self):
        dens = [{"breaks": [_json_num(b) for b in c.breaks],
                 "values": [_json_num(v / self.ell) for v in c.rates]} for c in self.components]
        return {"kind": "graph", "vertices": [list(v) for v in self.vertices],
                "edges": [list(e) for e in self.edges], "density": {"per_edge": dens}}


class CubeSpace(Space):
    """Unit cube ``[0, 1]^D`` with a density constant on an ``m^D`` grid.

    Parameters
    ----------
    D : int
    metric : {"linf", "l2"}
    grid : array_like of shape (m,)*D, optional
        Density values relative to Lebesgue measure; mean must be 1.
    """

    def __init__(self, D, metric="linf", grid=None):
        self.D = int(D)
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if metric not in ("linf", "l2"):
            raise ValueError(f"unknown cube metric {metric!r}")
        self.metric = metric
        self.kind = "cube_" + metric
        if grid is None:
            grid = np.ones((1,) * self.D)
        grid = np.asarray(grid, dtype=object if _has_str(grid) else float)
        if grid.dtype == object:
            self.grid_exact = np.vectorize(to_fraction, otypes=[object])(grid)
            grid = self.grid_exact.astype(float)
        else:
            self.grid_exact = None
        if grid.ndim != self.D or len(set(grid.shape)) != 1:
            raise ValueError("density grid must have shape (m,)*D")
        if np.any(grid < 0):
            raise ValueError("density values must be non-negative")
        if abs(grid.mean() - 1) > DENSITY_TOL:
            raise ValueError(f"density integrates to {grid.mean()!r}, not 1")
        self.grid = grid
        self.m = grid.shape[0]
        self.diameter = 1.0 if metric == "linf" else math.sqrt(self.D)
        self._bounds = (float(grid.min()), float(grid.max()))

    def _exact_grid(self):
        if self.grid_exact is None:
            self.grid_exact = np.vectorize(to_fraction, otypes=[object])(self.grid)
        mean = sum(self.grid_exact.ravel()) / self.grid_exact.size
        if mean != 1:
            self.grid_exact = self.grid_exact / mean
        return self.grid_exact

    def _point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.D,):
            raise ValueError(f"expected a point of dimension {self.D}")
        return p

    def distance(self, p, q, exact=False):
        if exact:
            dp = [abs(to_fraction(a) - to_fraction(b)) for a, b in zip(p, q)]
            if self.metric == "linf":
                return max(dp)
            return math.sqrt(sum(d * d for d in dp))
        diff = np.abs(self._point(p) - self._point(q))
        return float(diff.max() if self.metric == "linf" else np.sqrt(np.sum(diff**2)))

    def density_at(self, x):
        idx = np.minimum((np.asarray(x) * self.m).astype(int), self.m - 1)
        return self.grid[tuple(idx.T)]

    def sample(self, rng, n=None):
        want = 1 if n is None else int(n)
        cmax = self.grid.max()
        out = []
        have = 0
        while have < want:
            batch = max(2 * (want - have), 16)
            u = rng.random(batch * (self.D + 1)).reshape(batch, self.D + 1)
            x, acc = u[:, : self.D], u[:, self.D]
            keep = x[acc * cmax < self.density_at(x)]
            out.append(keep)
            have += len(keep)
        pts = np.concatenate(out)[:want]
        return pts[0] if n is None else pts

    def ball_trace(self, center, r, exact=False):
        _check_radius(r)
        c = self._point(center)
        if exact:
            cf = [to_fraction(v) for v in c]
            rf = to_fraction(r)
            lo = tuple(max(Fraction(0), v - rf) for v in cf)
            hi = tuple(min(Fraction(1), v + rf) for v in cf)
        else:
            lo = tuple(np.maximum(0.0, c - r).tolist())
            hi = tuple(np.minimum(1.0, c + r).tolist())
        if self.metric == "linf":
            return RegionTrace(lo=lo, hi=hi)
        return RegionTrace(lo=lo, hi=hi, center=tuple(c.tolist()), radius=float(r))

    # --- box geometry -------------------------------------------------
    def axis_overlaps(self, lo, hi):
        """Overlap lengths of ``[lo, hi]`` (shape (k,)) with the density grid columns."""
        g = np.arange(self.m + 1) / self.m
        return np.clip(np.minimum(hi[:, None], g[None, 1:]) - np.maximum(lo[:, None], g[None, :-1]), 0, None)

    def box_masses(self, lo, hi):
        """Masses of boxes ``lo``/``hi`` of shape (k, D) (float)."""
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        letters = "abcdefgh"[: self.D]
        ops = [self.axis_overlaps(lo[:, d], hi[:, d]) for d in range(self.D)]
        spec = ",".join("k" + ch for ch in letters) + "," + letters + "->k"
        return np.einsum(spec, *ops, self.grid)

    def box_mass_exact(self, lo, hi):
        g = self._exact_grid()
        per_axis = []
        for d in range(self.D):
            ov = []
            for j in range(self.m):
                a = max(to_fraction(lo[d]), Fraction(j, self.m))
                b = min(to_fraction(hi[d]), Fraction(j + 1, self.m))
                ov.append(b - a if b > a else Fraction(0))
            per_axis.append(ov)
        total = Fraction(0)
        for idx in np.ndindex(*g.shape):
            w = g[idx]
            for d, j in enumerate(idx):
                w = w * per_axis[d][j]
                if not w:
                    break
            total += w
        return total

    def boxes_inside(self, lo, hi, center, r, tol=1e-12):
        """Which boxes (k, D) lie inside the closed ball of radius ``r``."""
        c = np.asarray(center, dtype=float)
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        if self.metric == "linf":
            return far.max(axis=1) <= r + tol
        return np.sqrt(np.sum(far**2, axis=1)) <= r + tol

    def boxes_meeting(self, lo, hi, center, r, tol=0.0):
        """Which boxes (k, D) intersect the closed ball."""
        c = np.asarray(center, dtype=float)
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        near = np.maximum(0.0, np.maximum(lo - c, c - hi))
        if self.metric == "linf":
            return near.max(axis=1) <= r + tol
        return np.sqrt(np.sum(near**2, axis=1)) <= r + tol

    def union_measure(self, centers, r, subset=None, exact=False, h=1 / 64):
        """Mass of the union of balls.

        ``cube_linf`` is exact (coordinate compression over the boxes).
        ``cube_l2`` returns an ``(inner, outer)`` pair of grid bounds at
        spacing ``h``.
        """
        pts = np.atleast_2d(np.asarray(centers, dtype=float))
        idx = _subset(subset, len(pts))
        _check_radius(r)
        if self.metric == "l2":
            return self._l2_union_bounds(pts[idx], r, h)
        if exact:
            return self._linf_union_exact(pts[idx], r)
        cuts = [np.unique(np.concatenate([np.clip(pts[idx, d] - r, 0, 1), np.clip(pts[idx, d] + r, 0, 1),
                                          np.arange(self.m + 1) / self.m])) for d in range(self.D)]
        lo, hi = _grid_cells(cuts)
        mid = (lo + hi) / 2
        covered = np.zeros(len(lo), dtype=bool)
        for i in idx:
            covered |= np.all(np.abs(mid - pts[i]) <= r, axis=1)
        vol = np.prod(hi - lo, axis=1)
        return float(np.sum(vol[covered] * self.density_at(mid[covered])))

    def _linf_union_exact(self, pts, r):
        rf = to_fraction(r)
        cf = [[to_fraction(v) for v in p] for p in pts]
        cuts = []
        for d in range(self.D):
            s = {Fraction(0), Fraction(1)} | {Fraction(j, self.m) for j in range(self.m + 1)}
            for p in cf:
                s.add(min(Fraction(1), max(Fraction(0), p[d] - rf)))
                s.add(min(Fraction(1), max(Fraction(0), p[d] + rf)))
            cuts.append(sorted(s))
        g = self._exact_grid()
        total = Fraction(0)
        for cell in np.ndindex(*[len(c) - 1 for c in cuts]):
            lo = [cuts[d][j] for d, j in enumerate(cell)]
            hi = [cuts[d][j + 1] for d, j in enumerate(cell)]
            mid = [(a + b) / 2 for a, b in zip(lo, hi)]
            if any(all(abs(mid[d] - p[d]) <= rf for d in range(self.D)) for p in cf):
                vol = Fraction(1)
                for a, b in zip(lo, hi):
                    vol *= b - a
                gidx = tuple(min(int(v * self.m), self.m - 1) for v in mid)
                total += vol * g[gidx]
        return total

    def _l2_union_bounds(self, pts, r, h):
        m = max(1, int(math.ceil(1 / h)))
        lo, hi = _grid_cells([np.arange(m + 1) / m] * self.D)
        inner = np.zeros(len(lo), dtype=bool)
        outer = np.zeros(len(lo), dtype=bool)
        for p in pts:
            inner |= self.boxes_inside(lo, hi, p, r, tol=0.0)
            outer |= self.boxes_meeting(lo, hi, p, r)
        mass = self.box_masses(lo, hi)
        return float(mass[inner].sum()), float(mass[outer].sum())

    def point_list(self, centers):
        return [np.asarray(c, dtype=float) for c in np.atleast_2d(np.asarray(centers, dtype=float))]

    def to_dict(self):
        return {"kind": self.kind, "D": self.D, "density": {"grid": self.grid.tolist()}}


def _grid_cells(cuts):
    """All boxes of the product grid defined by per-axis sorted cut arrays."""
    los = np.meshgrid(*[c[:-1] for c in cuts], indexing="ij")
    his = np.meshgrid(*[c[1:] for c in cuts], indexing="ij")
    lo = np.stack([a.ravel() for a in los], axis=1)
    hi = np.stack([a.ravel() for a in his], axis=1)
    return lo, hi


def _has_str(grid):
    if isinstance(grid, str):
        return True
    if isinstance(grid, (list, tuple)):
        return any(_has_str(g) for g in grid)
    return False


def _json_num(x):
    x = to_fraction(x)
    if x.denominator == 1:
        return int(x)
    if Fraction(float(x)) == x:
        return float(x)
    return f"{x.numerator}/{x.denominator}"


def space_from_dict(d):
    """Build a space from its JSON description (see README for the schema)."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError("space description must be an object with a 'kind'")
    kind = d["kind"]
    dens = d.get("density") or {}
    if kind == "interval":
        return LineSpace("interval", dens.get("breaks", (0, 1)), dens.get("values", (1,)))
    if kind == "two_interval":
        return LineSpace("two_interval", q=d.get("q", DEFAULT_Q))
    if kind == "circle":
        return CircleSpace(dens.get("breaks", (0, 2)), dens.get("values", (1,)))
    if kind == "graph":
        per_edge = dens.get("per_edge")
        if per_edge is not None:
            per_edge = [(p["breaks"], p["values"]) for p in per_edge]
        return GraphSpace(d["vertices"], d["edges"], per_edge)
    if kind in ("cube_linf", "cube_l2"):
        return CubeSpace(d["D"], kind[5:], dens.get("grid"))
    raise ValueError(f"unknown space kind {kind!r}")


def load_space(path):
    with open(path) as fh:
        return space_from_dict(json.load(fh))


def triangle_graph():
    """Triangle on v1=(0,0), v2=(1/3,0), v3=(1/6, sqrt(1/12)) with uniform density."""
    verts = [(0.0, 0.0), (1 / 3, 0.0), (1 / 6, math.sqrt(1 / 12))]
    return GraphSpace(verts, [(0, 1), (0, 2), (1, 2)])
