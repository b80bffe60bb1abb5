from fractions import Fraction

import networkx as nx
import pytest

from covercheck.errors import InvalidStateError
from covercheck.flow import (FlowNetwork, build_cover_network, deficit, hall_deficiency, max_flow,
                             min_cut_ball_side)
from covercheck.rng import SplitMix64


def test_single_cell_single_ball():
    cn = build_cover_network([Fraction(1)], [[0]], 1)
    assert max_flow(cn) == 1
    assert deficit(cn) == 0


def test_disconnected_ball_leaves_unmet_demand():
    cn = build_cover_network([Fraction(1, 2), Fraction(1, 2)], [[0, 1], [0, 1]], 3)
    assert max_flow(cn) == Fraction(2, 3)
    assert min_cut_ball_side(cn) == [2]


def test_hall_violation_cut():
    cn = build_cover_network([Fraction(1, 2), Fraction(1, 2)], [[0, 1], []], 2)
    assert deficit(cn) if max_flow(cn) is not None else False
    assert min_cut_ball_side(cn) == [0, 1]
    assert hall_deficiency(cn, [0, 1]) == Fraction(1, 2)


def test_saturated_cut_is_invalid_state():
    cn = build_cover_network([Fraction(1, 2), Fraction(1, 2)], [[0], [1]], 2)
    max_flow(cn)
    with pytest.raises(InvalidStateError):
        min_cut_ball_side(cn)
    with pytest.raises(InvalidStateError):
        deficit(build_cover_network([1], [[0]], 1))


def _random_instance(k):
    rng = SplitMix64.keyed(31, k)
    n_cells, n_balls = 1 + rng.integers(8), 1 + rng.integers(6)
    weights = [1 + rng.integers(9) for _ in range(n_cells)]
    masses = [Fraction(w, sum(weights)) for w in weights]
    adj = [[b for b in range(n_balls) if rng.random() < 0.4] for _ in range(n_cells)]
    return masses, adj, n_balls


def _nx_value(masses, adj, n_balls):
    g = nx.DiGraph()
    for c, m in enumerate(masses):
        g.add_edge("s", ("c", c), capacity=m)
        for b in adj[c]:
            g.add_edge(("c", c), ("b", b))
    for b in range(n_balls):
        g.add_edge(("b", b), "t", capacity=Fraction(1, n_balls))
    if "t" not in g or not nx.has_path(g, "s", "t"):
        return Fraction(0)
    return nx.maximum_flow_value(g, "s", "t")


@pytest.mark.parametrize("exact", [True, False])
def test_matches_reference_on_random_networks(exact):
    for k in range(100):
        masses, adj, nb = _random_instance(k)
        cn = build_cover_network(masses, adj, nb, exact=exact)
        value = max_flow(cn)
        ref = _nx_value(masses, adj, nb)
        assert float(value) == pytest.approx(float(ref), abs=1e-12)
        # conservation at every cell and ball
        for c, eid in enumerate(cn.cell_arcs):
            out = sum(cn.arc_flow(e) for cc, b, e in cn.mid_arcs if cc == c)
            assert float(cn.arc_flow(eid) - out) == pytest.approx(0, abs=1e-12)
        for b, eid in enumerate(cn.ball_arcs):
            inflow = sum(cn.arc_flow(e) for c, bb, e in cn.mid_arcs if bb == b)
            assert float(cn.arc_flow(eid) - inflow) == pytest.approx(0, abs=1e-12)
        if exact and deficit(cn) > 0:
            cut = min_cut_ball_side(cn)
            assert hall_deficiency(cn, cut) == deficit(cn)


def test_max_scale_falls_back_to_float():
    cn = build_cover_network([Fraction(1, 3), Fraction(2, 3)], [[0], [1]], 2, max_scale=2)
    assert not cn.exact
    assert max_flow(cn) == pytest.approx(5 / 6)


def test_raw_network():
    net = FlowNetwork(4)
    net.add_edge(0, 1, 3)
    net.add_edge(0, 2, 2)
    e = net.add_edge(1, 3, 2)
    net.add_edge(2, 3, 3)
    net.add_edge(1, 2, 1)
    assert net.max_flow(0, 3) == 5
    assert net.flow_on(e) == 2
    assert net.reachable(0) == [True, False, False, False]
