"""Decide whether ``mu`` disintegrates along a random ball cover.

For centers ``X_1..X_n`` and radius ``r`` the uniform law on ``[n]`` admits
a disintegration of ``mu`` along ``x -> {i : x in B(X_i, r)}`` iff

    mu(U_{i in I} B(X_i, r)) >= |I| / n    for every nonempty I.

Checkers
--------
check_connected    contiguous runs of order statistics (line and circle)
check_arrangement  exact cell arrangement + max-flow (1-D spaces, l-inf cubes)
check_sandwich     inner/outer grid models with refinement (cubes)
check_bruteforce   all 2^n - 1 subsets (oracle)

Every ``NotDisintegrable`` witness is re-verified against
``space.union_measure`` before it is returned.  Subset indices are 0-based
positions in ``cover.centers``.
"""

import math
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import flow
from .certificates import construct_edf, decompose_flow
from .errors import CovercheckError, ResourceLimitError
from .spaces import TAU, _grid_cells, to_fraction

DISINTEGRABLE = "disintegrable"
NOT_DISINTEGRABLE = "not_disintegrable"
INCONCLUSIVE = "inconclusive"

# float slacks within this of zero are treated as equality
ROUND_TOL = 1e-12
MAX_CELLS = 200_000
MAX_BRUTE_N = 20

LINE_KINDS = ("interval", "two_interval")


class BallCover:
    """``n`` centers and a common radius on a space.

    Parameters
    ----------
    space : Space
    centers : array_like or list of points
    r : float or Fraction
    """

    def __init__(self, space, centers, r):
        if not r > 0:
            raise ValueError(f"radius must be positive, got {r!r}")
        self.space = space
        self.centers = space.point_list(centers)
        if len(self.centers) < 1:
            raise ValueError("need at least one center")
        self.r = r
        self.sorted_order = None
        self.coords = None
        if space.kind in LINE_KINDS or space.kind == "circle":
            self.coords = np.array([float(c) for c in self.centers])
            self.sorted_order = np.argsort(self.coords, kind="stable")
        self._traces = {}

    @property
    def n(self):
        return len(self.centers)

    def with_radius(self, r):
        out = BallCover.__new__(BallCover)
        out.__dict__.update(self.__dict__)
        out.r = r
        out._traces = {}
        return out

    def traces(self, exact=False):
        if exact not in self._traces:
            r = to_fraction(self.r) if exact else float(self.r)
            self._traces[exact] = [self.space.ball_trace(c, r, exact) for c in self.centers]
        return self._traces[exact]

    def union_measure(self, subset, exact=False):
        r = to_fraction(self.r) if exact else float(self.r)
        return self.space.union_measure(self.centers, r, subset, exact=exact)


@dataclass
class SubsetWitness:
    """Hall-violating ball set ``I``: ``union_mass < required_mass``."""

    subset: tuple
    union_mass: float
    required_mass: float

    @property
    def deficiency(self):
        return self.required_mass - self.union_mass

    def to_dict(self):
        return {"subset": [int(i) for i in self.subset], "union_mass": float(self.union_mass),
                "required_mass": float(self.required_mass)}


@dataclass
class CheckOutcome:
    """Verdict plus evidence.

    ``status`` is one of ``"disintegrable"`` (with ``certificate`` when one
    was requested), ``"not_disintegrable"`` (with ``witness``) or
    ``"inconclusive"`` (with the gap fields).  ``slack`` is the smallest
    ``union_mass - |I|/n`` found (or minus the flow deficit).
    """

    status: str
    certificate: object = None
    witness: SubsetWitness = None
    slack: float = None
    inner_deficit: float = None
    outer_slack: float = None
    grid_h: float = None
    method: str = ""
    details: dict = field(default_factory=dict)

    @property
    def is_disintegrable(self):
        return self.status == DISINTEGRABLE

    @property
    def is_not_disintegrable(self):
        return self.status == NOT_DISINTEGRABLE

    @property
    def is_inconclusive(self):
        return self.status == INCONCLUSIVE

    def to_dict(self):
        out = {"outcome": self.status, "method": self.method}
        if self.slack is not None:
            out["slack"] = float(self.slack)
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        if self.certificate is not None:
            out["certificate_digest"] = self.certificate.digest()
        if self.is_inconclusive:
            out.update(inner_deficit=_f(self.inner_deficit), outer_slack=_f(self.outer_slack),
                       grid_h=_f(self.grid_h))
        out.update(self.details)
        return out


def _f(x):
    return None if x is None else float(x)


def _status_from_slack(slack):
    """Verdict for a float slack ``min_I union(I) - |I|/n``."""
    if slack >= -ROUND_TOL:
        return DISINTEGRABLE
    if slack >= -TAU:
        return INCONCLUSIVE
    return NOT_DISINTEGRABLE


def _status_from_deficit(d, exact):
    if exact:
        if d == 0:
            return DISINTEGRABLE
        return INCONCLUSIVE if d <= TAU else NOT_DISINTEGRABLE
    return DISINTEGRABLE if d <= TAU else NOT_DISINTEGRABLE


def _verified_witness(cover, subset, exact=False, union=None):
    """Witness for ``subset`` if it violates Hall by more than TAU, else None."""
    subset = tuple(sorted(int(i) for i in subset))
    if union is None:
        union = cover.union_measure(subset, exact)
    need = Fraction(len(subset), cover.n) if exact else len(subset) / cover.n
    if need - union > TAU:
        return SubsetWitness(subset, union, need)
    return None


def _refuted(method, cover, subset, slack, exact=False, union=None, details=None, **kw):
    details = dict(details or {})
    w = _verified_witness(cover, subset, exact, union)
    if w is None:
        details["note"] = "witness did not re-verify beyond tolerance"
        return CheckOutcome(INCONCLUSIVE, slack=slack, method=method, details=details, **kw)
    return CheckOutcome(NOT_DISINTEGRABLE, witness=w, slack=slack, method=method, details=details, **kw)


# --- connected runs ---------------------------------------------------------

def _line_runs(F, y, r, n):
    """Worst run ``(slack, i, j)`` over sorted line centers ``y``."""
    hole = np.maximum(0.0, F(y[1:] - r) - F(y[:-1] + r))
    H = np.concatenate([[0.0], np.cumsum(hole)])
    a = F(y + r) - H
    b = F(y - r) - H
    k = np.arange(n)
    P = b - k / n
    Q = a - (k + 1) / n
    M = np.maximum.accumulate(P)
    s = Q - M
    j = int(np.argmin(s))
    i = int(np.argmax(P[: j + 1]))
    return float(s[j]), i, j


def _circle_mass(F, x):
    w = np.floor(x / 2.0)
    return w + F(x - 2.0 * w)


def _circle_runs(F, y, r, n, chunk=1024):
    """Worst cyclic run ``(slack, i, length)``; the full set is handled separately."""
    r = min(r, 1.0)
    z = np.concatenate([y, y + 2.0])
    hole = np.maximum(0.0, _circle_mass(F, z[1:] - r) - _circle_mass(F, z[:-1] + r))
    H = np.concatenate([[0.0], np.cumsum(hole)])
    A = _circle_mass(F, z + r) - H[: 2 * n]
    B = _circle_mass(F, z - r) - H[: 2 * n]
    Mr = _circle_mass(F, z + r - 2.0)
    Ml = _circle_mass(F, z - r)
    full = 1.0 - float(hole[:n].sum())
    best = (full - 1.0, 0, n)
    if n == 1:
        return best
    L = np.arange(n - 1)
    need = (L + 1) / n
    for start in range(0, n, chunk):
        i = np.arange(start, min(n, start + chunk))[:, None]
        j = i + L[None, :]
        union = A[j] - B[i] - np.maximum(0.0, Mr[j] - Ml[i])
        s = union - need[None, :]
        flat = int(np.argmin(s))
        ii, ll = divmod(flat, n - 1)
        if s[ii, ll] < best[0]:
            best = (float(s[ii, ll]), int(i[ii, 0]), ll + 1)
    return best


def check_connected(cover, certificate=True):
    """Hall condition over contiguous runs of order statistics.

    On the line (interval and two-interval spaces) runs ``i..j`` of the
    sorted centers suffice; on the circle cyclic runs of length at most
    ``n - 1`` plus the full set.  Line instances are decided in ``O(n)``
    using prefix maxima, circle instances in ``O(n^2)`` vectorised.

    Parameters
    ----------
    cover : BallCover
    certificate : bool
        Build a certificate for disintegrable instances (EDF on the line,
        flow decomposition on the circle).
    """
    kind = cover.space.kind
    if kind not in LINE_KINDS and kind != "circle":
        raise ValueError(f"check_connected needs an interval or circle space, got {kind!r}")
    t0 = time.perf_counter()
    n = cover.n
    comp = cover.space.components[0]
    F = comp.cdf
    order = cover.sorted_order
    y = cover.coords[order]
    r = float(cover.r)
    if kind == "circle":
        slack, i, length = _circle_runs(F, y, r, n)
        run = [int(order[(i + k) % n]) for k in range(length)]
    else:
        slack, i, j = _line_runs(F, y, r, n)
        run = [int(order[k]) for k in range(i, j + 1)]
    status = _status_from_slack(slack)
    timing = {"check_seconds": time.perf_counter() - t0}
    if status == NOT_DISINTEGRABLE:
        out = _refuted("connected", cover, run, slack)
    elif status == INCONCLUSIVE:
        out = CheckOutcome(INCONCLUSIVE, slack=slack, inner_deficit=-slack, outer_slack=-slack,
                           method="connected")
    else:
        cert = None
        if certificate:
            if kind == "circle":
                cert = check_arrangement(cover, exact=False).certificate
            else:
                cert = construct_edf(cover)
        out = CheckOutcome(DISINTEGRABLE, certificate=cert, slack=slack, method="connected")
    out.details["timings"] = timing
    return out


# --- exact arrangement --------------------------------------------------------

@dataclass
class ArrangementCells:
    """Cells cut by all ball boundaries and density breakpoints.

    ``pieces`` holds ``(comp, a, b)`` for 1-D spaces and ``(lo, hi)`` for
    cubes; ``members[k]`` lists the balls containing cell ``k``.  Zero-mass
    cells are dropped.
    """

    pieces: list
    masses: list
    members: list
    exact: bool

    def __len__(self):
        return len(self.pieces)

    def groups(self):
        """Cells grouped by identical membership: ``(cell lists, masses, members)``."""
        index = {}
        cells, masses, members = [], [], []
        for k, mem in enumerate(self.members):
            key = tuple(mem)
            g = index.get(key)
            if g is None:
                g = index[key] = len(cells)
                cells.append([])
                masses.append(self.masses[k] * 0)
                members.append(list(mem))
            cells[g].append(k)
            masses[g] = masses[g] + self.masses[k]
        return cells, masses, members


def _cells_1d(cover, exact, max_cells):
    space = cover.space
    traces = cover.traces(exact)
    cuts = {c: set(comp.breaks if exact else comp.fbreaks.tolist()) for c, comp in enumerate(space.components)}
    for tr in traces:
        for c, a, b in tr.pieces:
            cuts[c].update((a, b))
    total = sum(len(v) - 1 for v in cuts.values())
    if total > max_cells:
        raise ResourceLimitError(f"arrangement has {total} cells, limit {max_cells}")
    starts, ends, offset = {}, {}, {}
    pieces = []
    for c in sorted(cuts):
        pts = sorted(cuts[c])
        offset[c] = len(pieces)
        starts[c], ends[c] = pts[:-1], pts[1:]
        pieces.extend((c, a, b) for a, b in zip(pts[:-1], pts[1:]))
    members = [[] for _ in pieces]
    for i, tr in enumerate(traces):
        for c, a, b in tr.pieces:
            lo = bisect_left(starts[c], a)
            hi = bisect_right(ends[c], b)
            for k in range(offset[c] + lo, offset[c] + hi):
                members[k].append(i)
    masses = [space.components[c].mass(a, b, exact) for c, a, b in pieces]
    keep = [k for k, m in enumerate(masses) if m > 0]
    return ArrangementCells([pieces[k] for k in keep], [masses[k] for k in keep],
                            [members[k] for k in keep], exact)


def _cells_cube(cover, exact, max_cells):
    space = cover.space
    D, m = space.D, space.m
    cast = to_fraction if exact else float
    r = cast(cover.r)
    zero, one = cast(0), cast(1)
    centers = [[cast(v) for v in c] for c in cover.centers]
    axes = []
    total = 1
    for d in range(D):
        s = {Fraction(j, m) if exact else j / m for j in range(m + 1)}
        for c in centers:
            s.add(min(one, max(zero, c[d] - r)))
            s.add(min(one, max(zero, c[d] + r)))
        pts = sorted(s)
        axes.append(pts)
        total *= len(pts) - 1
    if total > max_cells:
        raise ResourceLimitError(f"arrangement has {total} cells, limit {max_cells}")
    inside, lengths, gidx = [], [], []
    for d, pts in enumerate(axes):
        a, b = pts[:-1], pts[1:]
        lo_i = [max(zero, c[d] - r) for c in centers]
        hi_i = [min(one, c[d] + r) for c in centers]
        inside.append(np.array([[lo_i[i] <= a[k] and b[k] <= hi_i[i] for k in range(len(a))]
                                for i in range(len(centers))], dtype=bool))
        lengths.append([y - x for x, y in zip(a, b)])
        gidx.append([min(int((x + y) / 2 * m), m - 1) for x, y in zip(a, b)])
    shape = [len(p) - 1 for p in axes]
    member = inside[0]
    for d in range(1, D):
        member = (member[..., None] & inside[d].reshape((len(centers),) + (1,) * d + (-1,)))
    member = member.reshape(len(centers), -1)
    grid = space._exact_grid() if exact else space.grid
    pieces, masses, members = [], [], []
    for flat, idx in enumerate(np.ndindex(*shape)):
        w = grid[tuple(gidx[d][k] for d, k in enumerate(idx))]
        for d, k in enumerate(idx):
            w = w * lengths[d][k]
        if not w > 0:
            continue
        lo = tuple(axes[d][k] for d, k in enumerate(idx))
        hi = tuple(axes[d][k + 1] for d, k in enumerate(idx))
        pieces.append((lo, hi))
        masses.append(w if exact else float(w))
        members.append(np.flatnonzero(member[:, flat]).tolist())
    return ArrangementCells(pieces, masses, members, exact)


def arrangement_cells(cover, exact=True, max_cells=MAX_CELLS):
    """Build the :class:`ArrangementCells` of a cover."""
    space = cover.space
    if space.is_one_dimensional:
        return _cells_1d(cover, exact, max_cells)
    if space.kind == "cube_linf":
        return _cells_cube(cover, exact, max_cells)
    raise ValueError(f"no exact arrangement for {space.kind!r}; use check_sandwich")


def _solve_groups(cover, cells, exact, max_scale=None):
    gcells, gmass, gmem = cells.groups()
    cn = flow.build_cover_network(gmass, gmem, cover.n, exact=exact, max_scale=max_scale)
    flow.max_flow(cn)
    return cn, gcells


def check_arrangement(cover, exact=True, certificate=True, max_cells=MAX_CELLS, max_scale=None):
    """Exact max-flow decision over the cell arrangement.

    Parameters
    ----------
    cover : BallCover
        Interval, circle, graph, two-interval, or ``cube_linf`` with
        ``D <= 3`` and ``n <= 64``.
    exact : bool
        Rational cell masses and integer capacities.
    certificate : bool
        Decompose the flow into a certificate when disintegrable.
    max_cells : int
        Raise :class:`ResourceLimitError` above this many cells.
    max_scale : int, optional
        Cap on the common denominator before falling back to floats.
    """
    space = cover.space
    if space.kind == "cube_l2":
        raise ValueError("cube_l2 balls are curved; use check_sandwich")
    if space.kind == "cube_linf" and (space.D > 3 or cover.n > 64):
        raise ValueError("cube_linf arrangement needs D <= 3 and n <= 64")
    t0 = time.perf_counter()
    cells = arrangement_cells(cover, exact, max_cells)
    cn, gcells = _solve_groups(cover, cells, exact, max_scale)
    d = flow.deficit(cn)
    status = _status_from_deficit(d, cn.exact)
    details = {"timings": {"check_seconds": time.perf_counter() - t0}, "cells": len(cells),
               "groups": len(gcells), "exact": cn.exact}
    slack = -float(d)
    if status == DISINTEGRABLE:
        cert = decompose_flow(cn, cells.pieces, gcells, cover.centers, cover.r, space) if certificate else None
        return CheckOutcome(DISINTEGRABLE, certificate=cert, slack=slack, method="arrangement", details=details)
    if status == INCONCLUSIVE:
        return CheckOutcome(INCONCLUSIVE, slack=slack, inner_deficit=float(d), outer_slack=float(d),
                            method="arrangement", details=details)
    subset = flow.min_cut_ball_side(cn)
    return _refuted("arrangement", cover, subset, slack, exact=cn.exact, details=details)


# --- grid sandwich -------------------------------------------------------------

def _grid_model(space, m):
    cuts = [np.arange(m + 1) / m] * space.D
    lo, hi = _grid_cells(cuts)
    return lo, hi, space.box_masses(lo, hi)


def _model_flow(cover, mask, mass):
    """Max-flow where ``mask[k, i]`` says cell ``k`` is linked to ball ``i``."""
    keep = mass > 0
    mask, mass = mask[keep], mass[keep]
    idx = np.flatnonzero(keep)
    packed = np.packbits(mask, axis=1)
    _, first, inv = np.unique(packed, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    gmass = np.bincount(inv, weights=mass, minlength=len(first))
    gmem = [np.flatnonzero(mask[f]).tolist() for f in first]
    gcells = [[] for _ in first]
    for k, g in zip(idx, inv):
        gcells[g].append(int(k))
    cn = flow.build_cover_network(gmass.tolist(), gmem, cover.n, exact=False)
    flow.max_flow(cn)
    return cn, gcells


def check_sandwich(cover, h0=1 / 8, refinements=3, certificate=True):
    """Two-sided grid approximation for cubes.

    The inner model links a grid box to a ball only if the box lies inside
    it; a saturating inner flow is a valid certificate.  The outer model
    links every box meeting a ball; an unsaturated outer flow yields a
    witness whose true union is even smaller.  Otherwise the grid is halved
    up to ``refinements`` times.
    """
    space = cover.space
    if space.kind not in ("cube_linf", "cube_l2"):
        raise ValueError("check_sandwich needs a cube space")
    if not h0 > 0:
        raise ValueError("h0 must be positive")
    if refinements < 0:
        raise ValueError("refinements must be >= 0")
    t0 = time.perf_counter()
    r = float(cover.r)
    centers = np.array(cover.centers)
    m0 = max(1, int(math.ceil(1.0 / h0 - 1e-12)))
    inner_d = outer_d = None
    for level in range(refinements + 1):
        m = m0 * 2**level
        lo, hi, mass = _grid_model(space, m)
        inner = np.stack([space.boxes_inside(lo, hi, c, r, tol=0.0) for c in centers], axis=1)
        cn, gcells = _model_flow(cover, inner, mass)
        inner_d = float(flow.deficit(cn))
        details = {"grid_h": 1.0 / m, "level": level}
        if inner_d <= TAU:
            cert = None
            if certificate:
                pieces = [(tuple(a), tuple(b)) for a, b in zip(lo.tolist(), hi.tolist())]
                cert = decompose_flow(cn, pieces, gcells, cover.centers, cover.r, space)
            details["timings"] = {"check_seconds": time.perf_counter() - t0}
            return CheckOutcome(DISINTEGRABLE, certificate=cert, slack=-inner_d, grid_h=1.0 / m,
                                method="sandwich", details=details)
        outer = np.stack([space.boxes_meeting(lo, hi, c, r, tol=1e-12) for c in centers], axis=1)
        cn, _ = _model_flow(cover, outer, mass)
        outer_d = float(flow.deficit(cn))
        if outer_d > TAU:
            subset = flow.min_cut_ball_side(cn)
            if space.kind == "cube_linf":
                union = cover.union_measure(subset)
            else:
                union = space.union_measure(cover.centers, r, subset, h=1.0 / m)[1]
            details["timings"] = {"check_seconds": time.perf_counter() - t0}
            return _refuted("sandwich", cover, subset, -outer_d, union=union, grid_h=1.0 / m, details=details)
    return CheckOutcome(INCONCLUSIVE, inner_deficit=inner_d, outer_slack=outer_d, grid_h=1.0 / m,
                        method="sandwich",
                        details={"timings": {"check_seconds": time.perf_counter() - t0}})


# --- brute force -----------------------------------------------------------------

def check_bruteforce(cover, exact=False, certificate=True):
    """Enumerate all nonempty subsets (``n <= 20``).

    Returns the subset of largest Hall deficiency as the witness.
    Disintegrable instances get their certificate from the arrangement
    checker.
    """
    space = cover.space
    n = cover.n
    if n > MAX_BRUTE_N:
        raise ResourceLimitError(f"brute force limited to n <= {MAX_BRUTE_N}, got {n}")
    if space.kind == "cube_l2":
        raise ValueError("cube_l2 has no exact union measure")
    t0 = time.perf_counter()
    if space.is_one_dimensional:
        traces = cover.traces(exact)

        def union(sub):
            return space.union_measure_of_traces([traces[i] for i in sub], exact)
    else:
        r = to_fraction(cover.r) if exact else float(cover.r)

        def union(sub):
            return space.union_measure(cover.centers, r, sub, exact=exact)

    best = None
    best_sub = None
    for mask in range(1, 1 << n):
        sub = [i for i in range(n) if mask >> i & 1]
        need = Fraction(len(sub), n) if exact else len(sub) / n
        s = union(sub) - need
        if best is None or s < best:
            best, best_sub = s, sub
    details = {"timings": {"check_seconds": time.perf_counter() - t0}}
    if exact:
        status = DISINTEGRABLE if best >= 0 else (INCONCLUSIVE if best >= -TAU else NOT_DISINTEGRABLE)
    else:
        status = _status_from_slack(best)
    if status == NOT_DISINTEGRABLE:
        return _refuted("brute", cover, best_sub, float(best), exact=exact, details=details)
    if status == INCONCLUSIVE:
        return CheckOutcome(INCONCLUSIVE, slack=float(best), inner_deficit=-float(best),
                            outer_slack=-float(best), method="brute", details=details)
    cert = None
    if certificate and (space.is_one_dimensional or space.kind == "cube_linf"):
        res = check_arrangement(cover, exact=exact)
        if not res.is_disintegrable:
            raise CovercheckError("brute force and arrangement disagree on a disintegrable instance")
        cert = res.certificate
    return CheckOutcome(DISINTEGRABLE, certificate=cert, slack=float(best), method="brute", details=details)


CHECKERS = {
    "connected": check_connected,
    "arrangement": check_arrangement,
    "sandwich": check_sandwich,
    "brute": check_bruteforce,
}


def check(cover, mode="arrangement", **kw):
    """Dispatch to a checker by name."""
    try:
        fn = CHECKERS[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; choose from {sorted(CHECKERS)}") from None
    return fn(cover, **kw)
