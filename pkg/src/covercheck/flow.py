"""Max-flow on the bipartite cell/ball network.

The network is ``source -> cell -> ball -> sink`` with source capacities equal
to cell masses, infinite cell->ball arcs wherever the cell lies inside the
ball, and sink capacities equal to the ball demands (1/n each).  A saturating
flow is a discrete coupling of the cell masses with the uniform law on the
balls; an unsaturated one yields a Hall-deficient ball set through the
minimum cut.

In exact mode all capacities are scaled by a common denominator and the
flow runs on Python integers.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidStateError

FLOAT_EPS = 1e-15


class FlowNetwork:
    """Directed network with paired residual arcs, solved by Dinic's algorithm."""

    def __init__(self, n_nodes, eps=0):
        self.n = n_nodes
        self.adj = [[] for _ in range(n_nodes)]
        self.to = []
        self.cap = []
        self.orig = []
        self.eps = eps

    def add_edge(self, u, v, cap):
        eid = len(self.to)
        self.to += [v, u]
        self.cap += [cap, cap * 0]
        self.orig += [cap, cap * 0]
        self.adj[u].append(eid)
        self.adj[v].append(eid + 1)
        return eid

    def flow_on(self, eid):
        return self.orig[eid] - self.cap[eid]

    def _levels(self, s):
        level = [-1] * self.n
        level[s] = 0
        queue = deque([s])
        cap, to, eps = self.cap, self.to, self.eps
        while queue:
            u = queue.popleft()
            for e in self.adj[u]:
                v = to[e]
                if level[v] < 0 and cap[e] > eps:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level

    def _blocking_flow(self, s, t, level):
        cap, to, adj, eps = self.cap, self.to, self.adj, self.eps
        it = [0] * self.n
        total = 0
        path = []
        u = s
        while True:
            if u == t:
                f = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= f
                    cap[e ^ 1] += f
                total += f
                # retreat to the tail of the first saturated arc
                k = next(i for i, e in enumerate(path) if cap[e] <= eps)
                u = to[path[k] ^ 1]
                del path[k:]
                continue
            edges = adj[u]
            i = it[u]
            while i < len(edges):
                e = edges[i]
                if cap[e] > eps and level[to[e]] == level[u] + 1:
                    break
                i += 1
            it[u] = i
            if i == len(edges):
                if u == s:
                    return total
                level[u] = -1
                e = path.pop()
                u = to[e ^ 1]
                it[u] += 1
                continue
            path.append(edges[i])
            u = to[edges[i]]

    def max_flow(self, s, t):
        flow = 0
        while True:
            level = self._levels(s)
            if level[t] < 0:
                return flow
            flow += self._blocking_flow(s, t, level)

    def reachable(self, s):
        """Nodes reachable from ``s`` in the residual graph."""
        return [lv >= 0 for lv in self._levels(s)]


@dataclass
class CoverNetwork:
    """Bipartite cell/ball network plus bookkeeping for certificates and cuts."""

    net: FlowNetwork
    source: int
    sink: int
    masses: list
    demands: list
    adjacency: list
    exact: bool
    scale: int = 1
    cell_arcs: list = field(default_factory=list)
    ball_arcs: list = field(default_factory=list)
    mid_arcs: list = field(default_factory=list)
    value: object = None

    @property
    def n_cells(self):
        return len(self.masses)

    @property
    def n_balls(self):
        return len(self.demands)

    @property
    def total_demand(self):
        return sum(self.demands, Fraction(0) if self.exact else 0.0)

    def cell_node(self, c):
        return 1 + c

    def ball_node(self, b):
        return 1 + self.n_cells + b

    def arc_flow(self, eid):
        f = self.net.flow_on(eid)
        return Fraction(f, self.scale) if self.exact else f


def _lcm(values):
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def build_cover_network(masses, adjacency, n_balls, demands=None, exact=True, max_scale=None):
    """Build the source/cell/ball/sink network.

    Parameters
    ----------
    masses : sequence
        Cell masses (Fractions in exact mode).
    adjacency : sequence of sequences of int
        Balls containing each cell.
    n_balls : int
    demands : sequence, optional
        Ball demands; defaults to ``1/n_balls`` each.
    exact : bool
        Integer capacities over a common denominator.  Falls back to floats
        when the denominator exceeds ``max_scale`` (``None`` means unbounded).
    """
    if demands is None:
        demands = [Fraction(1, n_balls)] * n_balls if exact else [1.0 / n_balls] * n_balls
    if exact:
        masses = [Fraction(m) for m in masses]
        demands = [Fraction(d) for d in demands]
        scale = _lcm([m.denominator for m in masses] + [d.denominator for d in demands])
        if max_scale is not None and scale > max_scale:
            exact = False
    if not exact:
        masses = [float(m) for m in masses]
        demands = [float(d) for d in demands]
        scale = 1
    n_cells = len(masses)
    total_supply = sum(masses)
    eps = 0 if exact else FLOAT_EPS * max(1.0, float(total_supply))
    net = FlowNetwork(2 + n_cells + n_balls, eps=eps)
    cn = CoverNetwork(net, 0, 1 + n_cells + n_balls, list(masses), list(demands),
                      [list(a) for a in adjacency], exact, scale)

    def cap(x):
        return int(x * scale) if exact else x

    big = cap(total_supply) + cap(sum(demands)) + 1
    for c, m in enumerate(masses):
        cn.cell_arcs.append(net.add_edge(cn.source, cn.cell_node(c), cap(m)))
    for c, balls in enumerate(cn.adjacency):
        for b in balls:
            cn.mid_arcs.append((c, b, net.add_edge(cn.cell_node(c), cn.ball_node(b), big)))
    for b, d in enumerate(demands):
        cn.ball_arcs.append(net.add_edge(cn.ball_node(b), cn.sink, cap(d)))
    return cn


def max_flow(cn):
    """Solve in place; returns the flow value in mass units."""
    raw = cn.net.max_flow(cn.source, cn.sink)
    cn.value = Fraction(raw, cn.scale) if cn.exact else float(raw)
    return cn.value


def deficit(cn):
    """Unmet demand ``total_demand - value`` (requires a solved network)."""
    if cn.value is None:
        raise InvalidStateError("network has not been solved")
    return cn.total_demand - cn.value


def min_cut_ball_side(cn):
    """Balls unreachable from the source in the final residual graph.

    This ball set ``I`` has ``sum(demands[I]) - mass(cells adjacent to I)``
    equal to the deficit, the largest Hall deficiency of any ball set.
    """
    d = deficit(cn)
    if d <= cn.net.eps:
        raise InvalidStateError("flow is saturated; there is no deficient ball set")
    reach = cn.net.reachable(cn.source)
    return [b for b in range(cn.n_balls) if not reach[cn.ball_node(b)]]


def hall_deficiency(cn, balls):
    """``sum of demands over balls - mass of cells adjacent to them``."""
    balls = set(balls)
    zero = Fraction(0) if cn.exact else 0.0
    adjacent = sum((m for m, adj in zip(cn.masses, cn.adjacency) if balls.intersection(adj)), zero)
    return sum((cn.demands[b] for b in balls), zero) - adjacent
