"""Disintegration certificates.

A certificate describes component measures ``mu_1..mu_n`` at cell
granularity.  The support of ``mu`` is split into disjoint *pieces* (1-D
subintervals ``(comp, a, b)`` or cube boxes ``(lo, hi)``), pieces are collected
into *groups*, and each allocation ``(g, i, m)`` gives ``mu_i(group g) = m``
with ``mu_i`` restricted to the group proportional to ``mu``.  The three
defining conditions are then

1. every ``mu_i`` has total mass 1,
2. every group carrying ``mu_i``-mass lies inside ``B(X_i, r)``,
3. ``(1/n) * sum_i mu_i(g) = mu(g)`` for every group, and the pieces
   partition the support.

Validation recomputes piece masses and containment from the space geometry,
so it does not trust the producer.
"""

import hashlib
import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CovercheckError, InvalidStateError
from .spaces import TAU, _json_num

EDF_TOL = 1e-12


@dataclass
class Certificate:
    """Finitely supported disintegration of ``mu`` along a ball cover.

    Attributes
    ----------
    space : Space
    centers : list
        Ball centers, in cover order.
    r : float or Fraction
    pieces : list
        ``(comp, a, b)`` for 1-D spaces, ``(lo, hi)`` tuples for cubes.
    groups : list of list of int
        Piece indices making up each group.
    alloc : list of (int, int, number)
        ``(group, ball, mass)`` triples; ``mass = mu_ball(group)``.
    method : str
        ``"edf"`` or ``"flow"``.
    """

    space: object
    centers: list
    r: object
    pieces: list
    groups: list
    alloc: list
    method: str = "flow"

    @property
    def n(self):
        return len(self.centers)

    def ball_measure(self, i):
        """``[(group, mass), ...]`` for ``mu_i``."""
        return [(g, m) for g, b, m in self.alloc if b == i]

    def to_dict(self):
        is_cube = not self.space.is_one_dimensional
        if is_cube:
            pieces = [{"lo": [float(v) for v in lo], "hi": [float(v) for v in hi]} for lo, hi in self.pieces]
        else:
            pieces = [{"comp": int(c), "a": _json_num(a), "b": _json_num(b)} for c, a, b in self.pieces]
        return {
            "space": self.space.to_dict(),
            "n": self.n,
            "centers": [_center_json(c) for c in self.centers],
            "r": _json_num(self.r),
            "method": self.method,
            "pieces": pieces,
            "groups": [list(map(int, g)) for g in self.groups],
            "alloc": [[int(g), int(b), _json_num(m)] for g, b, m in self.alloc],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def digest(self):
        """SHA-256 of the canonical JSON dump."""
        return hashlib.sha256(self.to_json(separators=(",", ":")).encode()).hexdigest()


def _center_json(c):
    if isinstance(c, tuple):
        return [int(c[0]), float(c[1])]
    if isinstance(c, np.ndarray):
        return [float(v) for v in c]
    return float(c)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_certificate`; magnitudes are worst cases."""

    mass_deficit: float
    support_violation: float
    average_tv: float
    partition_error: float
    tol: float
    flags: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.flags

    def __bool__(self):
        return self.ok


def _piece_masses(space, pieces):
    if space.is_one_dimensional:
        return np.array([float(space.components[c].mass(a, b)) for c, a, b in pieces])
    if not pieces:
        return np.zeros(0)
    lo = np.array([[float(v) for v in p[0]] for p in pieces])
    hi = np.array([[float(v) for v in p[1]] for p in pieces])
    return space.box_masses(lo, hi)


def _overlap_1d(pieces):
    """Total length of pairwise overlaps among 1-D pieces."""
    by_comp = {}
    for c, a, b in pieces:
        by_comp.setdefault(c, []).append((float(a), float(b)))
    worst = 0.0
    for ivs in by_comp.values():
        ivs.sort()
        reach = -np.inf
        for a, b in ivs:
            if a < reach:
                worst = max(worst, min(reach, b) - a)
            reach = max(reach, b)
    return worst


def _outside_mass(space, cert, g, b, pm, cache):
    """Mass of the pieces of group ``g`` not contained in ball ``b``."""
    idx = [k for k in cert.groups[g] if pm[k] > 0]
    if not idx:
        return 0.0
    if space.is_one_dimensional:
        tr = cache.get(b)
        if tr is None:
            tr = cache[b] = space.ball_trace(cert.centers[b], float(cert.r))
        return float(sum(pm[k] for k in idx
                         if not tr.contains_interval(cert.pieces[k][0], float(cert.pieces[k][1]),
                                                     float(cert.pieces[k][2]), 1e-12)))
    if "boxes" not in cache:
        cache["boxes"] = (np.array([[float(v) for v in p[0]] for p in cert.pieces]),
                          np.array([[float(v) for v in p[1]] for p in cert.pieces]))
    lo, hi = cache["boxes"]
    inside = space.boxes_inside(lo[idx], hi[idx], cert.centers[b], float(cert.r), tol=1e-12)
    return float(pm[idx][~inside].sum())


def validate_certificate(cert, space=None, tol=TAU):
    """Check the three certificate conditions against the space geometry.

    Parameters
    ----------
    cert : Certificate
    space : Space, optional
        Space whose metric defines the balls; defaults to ``cert.space``.
        Passing a cube with a different metric re-checks containment under
        that metric (masses come from ``cert.space`` either way).
    tol : float
        Tolerance on all three conditions.

    Returns
    -------
    ValidationReport
    """
    space = cert.space if space is None else space
    n = cert.n
    pm = _piece_masses(cert.space, cert.pieces)
    gm = np.array([pm[list(g)].sum() if len(g) else 0.0 for g in cert.groups])

    totals = np.zeros(n)
    per_group = np.zeros(len(cert.groups))
    support = 0.0
    trace_cache = {}
    for g, b, m in cert.alloc:
        m = float(m)
        if not 0 <= b < n or not 0 <= g < len(cert.groups):
            raise ValueError(f"allocation ({g}, {b}) out of range")
        totals[b] += m
        per_group[g] += m / n
        if m <= 0:
            continue
        outside = _outside_mass(space, cert, g, b, pm, trace_cache)
        if outside > 0:
            support = max(support, m * outside / gm[g] if gm[g] > 0 else m)

    mass_deficit = float(np.max(np.abs(totals - 1.0))) if n else 0.0
    average_tv = float(np.sum(np.abs(per_group - gm)))
    partition = abs(1.0 - float(pm.sum()))
    if cert.space.is_one_dimensional:
        partition = max(partition, _overlap_1d(cert.pieces))
    flags = []
    if mass_deficit > tol:
        flags.append("mass_deficit")
    if support > tol:
        flags.append("support_violation")
    if average_tv > tol:
        flags.append("average_mismatch")
    if partition > tol:
        flags.append("partition_error")
    return ValidationReport(mass_deficit, support, average_tv, partition, tol, flags)


# --- construction ---------------------------------------------------------

def decompose_flow(cn, cells, group_cells, centers, r, space):
    """Certificate from a saturated cell/ball flow.

    Parameters
    ----------
    cn : CoverNetwork
        Solved network whose cell nodes are the groups.
    cells : sequence
        Geometric pieces.
    group_cells : list of list of int
        Pieces of each network cell.
    """
    from .flow import deficit

    d = deficit(cn)
    if (cn.exact and d != 0) or (not cn.exact and d > TAU):
        raise InvalidStateError(f"flow is not saturated (deficit {float(d):.3e})")
    n = cn.n_balls
    alloc = []
    for g, b, eid in cn.mid_arcs:
        f = cn.arc_flow(eid)
        if f > 0:
            alloc.append((g, b, n * f))
    return Certificate(space, list(centers), r, list(cells), [list(g) for g in group_cells], alloc, "flow")


def _mass_segments(comp):
    """Positive-mass segments ``(u0, u1, x0, rate)`` of a line component."""
    out = []
    for k, v in enumerate(comp.rates):
        if v > 0:
            out.append((float(comp.cum[k]), float(comp.cum[k + 1]), float(comp.breaks[k]), float(v)))
    return out


def _to_space_pieces(segments, u0, u1):
    """Map a mass-coordinate interval back to spatial pieces."""
    out = []
    for s0, s1, x0, rate in segments:
        a, b = max(u0, s0), min(u1, s1)
        if b > a:
            out.append((x0 + (a - s0) / rate, x0 + (b - s0) / rate, b - a))
    return out


def construct_edf(cover):
    """Earliest-deadline-first certificate on a line space.

    Works in mass coordinates ``u = F(x)``: ball ``i`` is the window
    ``[F(X_i - r), F(X_i + r)]`` and must receive mass ``1/n``.  The sweep
    serves the released ball with the earliest right end (ties to the smaller
    index).  Any idle point or missed deadline means the instance is not
    disintegrable.

    Raises
    ------
    CovercheckError
        If the instance is infeasible; the message names a deficient run.
    """
    space = cover.space
    if space.kind not in ("interval", "two_interval"):
        raise ValueError("construct_edf needs an interval or two-interval space")
    comp = space.components[0]
    n = cover.n
    x = cover.coords
    r = float(cover.r)
    s = comp.cdf(x - r).tolist()
    e = comp.cdf(x + r).tolist()
    order = sorted(range(n), key=lambda i: (s[i], i))
    need = 1.0 / n
    remaining = [need] * n
    heap = []
    u = 0.0
    nxt = 0
    runs = []  # (ball, u0, u1)
    while u < 1.0 - EDF_TOL:
        while nxt < n and s[order[nxt]] <= u + EDF_TOL:
            i = order[nxt]
            heapq.heappush(heap, (e[i], i))
            nxt += 1
        if not heap:
            raise CovercheckError(f"EDF idles at mass coordinate {u:.6g}: balls released so far cannot cover it")
        dl, i = heapq.heappop(heap)
        if dl <= u + EDF_TOL:
            if remaining[i] <= EDF_TOL:
                continue
            raise CovercheckError(f"EDF misses the deadline of ball {i} by {remaining[i]:.3e}")
        release = s[order[nxt]] if nxt < n else np.inf
        t = min(u + remaining[i], dl, release, 1.0)
        if t > u:
            if runs and runs[-1][0] == i and runs[-1][2] == u:
                runs[-1] = (i, runs[-1][1], t)
            else:
                runs.append((i, u, t))
        remaining[i] -= t - u
        u = t
        if remaining[i] > EDF_TOL:
            heapq.heappush(heap, (dl, i))
    left = max(remaining)
    if left > EDF_TOL:
        raise CovercheckError(f"EDF ends with ball {remaining.index(left)} short by {left:.3e}")
    segments = _mass_segments(comp)
    pieces, groups, alloc = [], [], []
    for i, u0, u1 in runs:
        for a, b, m in _to_space_pieces(segments, u0, u1):
            groups.append([len(pieces)])
            pieces.append((0, a, b))
            alloc.append((len(groups) - 1, i, n * m))
    return Certificate(space, list(cover.centers), cover.r, pieces, groups, alloc, "edf")


def certificate_from_dict(d):
    """Inverse of :meth:`Certificate.to_dict`."""
    from .spaces import GraphPoint, space_from_dict, to_fraction

    space = space_from_dict(d["space"])
    if space.is_one_dimensional:
        pieces = [(p["comp"], to_fraction(p["a"]), to_fraction(p["b"])) for p in d["pieces"]]
    else:
        pieces = [(tuple(p["lo"]), tuple(p["hi"])) for p in d["pieces"]]
    if space.kind == "graph":
        centers = [GraphPoint(int(e), float(t)) for e, t in d["centers"]]
    elif space.is_one_dimensional:
        centers = [float(c) for c in d["centers"]]
    else:
        centers = [np.asarray(c, dtype=float) for c in d["centers"]]
    alloc = [(int(g), int(b), to_fraction(m)) for g, b, m in d["alloc"]]
    return Certificate(space, centers, to_fraction(d["r"]), pieces, [list(g) for g in d["groups"]],
                       alloc, d.get("method", "flow"))
