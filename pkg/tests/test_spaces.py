import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covercheck.rng import SplitMix64
from covercheck.spaces import (CircleSpace, CubeSpace, GraphPoint, GraphSpace, LineSpace, load_space,
                               merge_intervals, space_from_dict, triangle_graph)


def test_triangle_midpoint_distance_is_one_third():
    g = triangle_graph()
    x, y = GraphPoint(1, Fraction(1, 2)), GraphPoint(2, Fraction(1, 2))
    assert g.distance(x, y, exact=True) == Fraction(1, 3)
    assert g.distance(x, y) == pytest.approx(1 / 3, abs=1e-15)


def test_trivial_distances():
    assert LineSpace().distance(0.3, 0.3) == 0
    assert CircleSpace().distance(0.1, 1.9) == pytest.approx(0.2)


def test_line_ball_traces():
    s = LineSpace()
    assert s.ball_trace(0.5, 0.2).pieces == ((0, pytest.approx(0.3), pytest.approx(0.7)),)
    assert s.ball_trace(0.1, 0.2).pieces == ((0, 0.0, pytest.approx(0.3)),)


def test_triangle_vertex_ball():
    g = triangle_graph()
    tr = g.ball_trace(GraphPoint(0, Fraction(0)), Fraction(1, 3), exact=True)
    by_edge = {c: (a, b) for c, a, b in tr.pieces}
    assert set(by_edge) == {0, 1}
    for c in (0, 1):
        assert by_edge[c] == (0, 1)
    assert g.union_measure([GraphPoint(0, 0.0)], 1 / 3) == pytest.approx(2 / 3)


def test_union_measures():
    s = LineSpace()
    assert s.union_measure([0.1, 0.9], 0.2) == pytest.approx(0.6)
    assert s.union_measure([0.4, 0.5], 0.2) == pytest.approx(0.5)
    assert s.union_measure([Fraction(2, 5), Fraction(1, 2)], Fraction(1, 5), exact=True) == Fraction(1, 2)
    assert CircleSpace().union_measure([0.0], 0.25) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        s.union_measure([0.1], 0.2, subset=[])


def test_two_interval_union_skips_gap():
    s = LineSpace("two_interval", q=Fraction(1, 2))
    # X- = [-1, -1/2], X+ = [0, 1/2]
    assert s.union_measure([-0.5], 0.25) == pytest.approx(0.25)
    assert s.union_measure([-0.5, 0.0], 0.25) == pytest.approx(0.5)


def test_merge_intervals():
    assert merge_intervals([(3, 4), (0, 1), (0.5, 2), (2, 2.5)]) == [(0, 2.5), (3, 4)]


def _frac(x, a, b):
    return np.mean((x >= a) & (x <= b))


def test_sampling_masses():
    s = LineSpace("interval", (0, 0.5, 1), (2, 0))
    x = s.sample(SplitMix64.keyed(11), 100_000)
    assert _frac(x, 0, 0.5) > 0.995
    s = LineSpace("two_interval")
    x = s.sample(SplitMix64.keyed(12), 100_000)
    assert abs(np.mean(x < -0.1) - 1 / math.sqrt(2)) < 0.01
    assert s.in_support(x).all()


def test_sampling_is_deterministic():
    s = LineSpace()
    a = s.sample(SplitMix64.keyed(5), None)
    b = s.sample(SplitMix64.keyed(5), None)
    assert a == b and 0 <= a <= 1


def test_nonuniform_circle_and_graph_sampling():
    c = CircleSpace((0, 1, 2), (1.5, 0.5))
    x = c.sample(SplitMix64.keyed(13), 50_000)
    assert abs(np.mean(x < 1) - 0.75) < 0.01
    g = triangle_graph()
    pts = g.sample(SplitMix64.keyed(14), 30_000)
    edges = np.asarray(pts)[:, 0].astype(int)
    assert np.all(np.abs(np.bincount(edges, minlength=3) / 30_000 - 1 / 3) < 0.01)


def test_cube_sampling_and_union():
    cube = CubeSpace(2, "linf", [[0.5, 1.5], [1.0, 1.0]])
    x = cube.sample(SplitMix64.keyed(15), 50_000)
    assert x.shape == (50_000, 2)
    # grid[i, j] is the density on cell i along x0 and j along x1
    assert abs(np.mean((x[:, 0] < 0.5) & (x[:, 1] < 0.5)) - 0.125) < 0.01
    assert abs(np.mean(x[:, 1] < 0.5) - 0.375) < 0.01
    u = CubeSpace(2, "linf")
    assert u.union_measure([[0.5, 0.5]], 0.25) == pytest.approx(0.25)
    assert u.union_measure([[0.5, 0.5]], 0.6) == pytest.approx(1.0)
    inner, outer = CubeSpace(2, "l2").union_measure([[0.5, 0.5]], 0.25, h=1 / 64)
    assert inner <= math.pi / 16 <= outer


def test_invalid_densities_rejected():
    with pytest.raises(ValueError):
        LineSpace("interval", (0, 1), (2,))
    with pytest.raises(ValueError):
        LineSpace("interval", (0, 0.5, 1), (-1, 3))
    with pytest.raises(ValueError):
        LineSpace("two_interval", q=1.5)
    with pytest.raises(ValueError):
        space_from_dict({"kind": "torus"})
    with pytest.raises(ValueError):
        GraphSpace([(0, 0)], [])


def test_dict_roundtrip(tmp_path):
    import json
    for s in (LineSpace("interval", (0, 0.5, 1), (1.5, 0.5)), CircleSpace(), triangle_graph(),
              LineSpace("two_interval"), CubeSpace(2, "l2")):
        d = s.to_dict()
        t = space_from_dict(d)
        assert t.kind == s.kind and t.to_dict() == d
        path = tmp_path / "s.json"
        path.write_text(json.dumps(d))
        assert load_space(path).to_dict() == d


_square = GraphSpace([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
_graph_pt = st.builds(GraphPoint, st.integers(0, 4), st.floats(0, 1))


@settings(max_examples=200, deadline=None)
@given(_graph_pt, _graph_pt, _graph_pt)
def test_graph_metric_axioms(a, b, c):
    d = _square.distance
    assert d(a, a) == pytest.approx(0, abs=1e-12)
    assert d(a, b) == pytest.approx(d(b, a))
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12
    assert 0 <= d(a, b) <= _square.diameter + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.floats(0, 2))
def test_circle_metric_axioms(a, b, c):
    d = CircleSpace().distance
    assert d(a, b) == pytest.approx(d(b, a))
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12
    assert 0 <= d(a, b) <= 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(0.01, 0.6))
def test_exact_and_float_union_agree(centers, r):
    s = LineSpace()
    exact = s.union_measure(centers, Fraction(r), exact=True)
    assert float(exact) == pytest.approx(s.union_measure(centers, r), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=6), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_union_monotone_in_radius(centers, r1, r2):
    s = CircleSpace()
    lo, hi = sorted((r1, r2))
    assert s.union_measure(centers, lo) <= s.union_measure(centers, hi) + 1e-12
