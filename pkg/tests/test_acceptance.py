"""Acceptance criteria, one test per criterion, at the stated tolerances."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from covercheck.bounds import (RateParams, avg_case_gap, constant, random_piecewise_linear, rate_r, spike)
from covercheck.certificates import validate_certificate
from covercheck.experiments import ExperimentConfig, critical_radius, run_mc, trial_critical_radius
from covercheck.feasibility import (BallCover, check_arrangement, check_bruteforce, check_connected,
                                    check_sandwich)
from covercheck.rng import SplitMix64
from covercheck.spaces import (CircleSpace, CubeSpace, GraphPoint, GraphSpace, LineSpace, TAU,
                               triangle_graph)
from covercheck.transport import wasserstein_1d, wasserstein_matching

CP_ZERO_200 = 1 - 0.05 ** (1 / 200)


def _verdicts(cover):
    return (check_connected(cover, certificate=False).status,
            check_arrangement(cover, certificate=False).status,
            check_bruteforce(cover, certificate=False).status)


def test_c01_oracle_equivalence(acceptance):
    t0 = time.perf_counter()
    mismatches = []
    seen = set()
    for family, space, count, rmax in (("interval", LineSpace(), 200, 0.3), ("circle", CircleSpace(), 100, 0.6)):
        for k in range(count):
            rng = SplitMix64.keyed(101, len(family), k)
            n = 1 + rng.integers(12)
            r = 0.01 + rmax * rng.random()
            cover = BallCover(space, space.sample(rng, n), r)
            v = _verdicts(cover)
            seen.add(v[0])
            if len(set(v)) != 1:
                mismatches.append((family, k, v))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 30 and {"disintegrable", "not_disintegrable"} <= seen
    acceptance(ok, f"300 instances, {len(mismatches)} mismatches, {elapsed:.1f}s")
    assert not mismatches
    assert {"disintegrable", "not_disintegrable"} <= seen
    assert elapsed < 30


def _fuzz_space(rng, family):
    if family == "interval":
        cut = 0.2 + 0.6 * rng.random()
        lo = 0.3 + 0.7 * rng.random()
        hi = (1 - lo * cut) / (1 - cut)
        return LineSpace("interval", (0, cut, 1), (lo, hi))
    if family == "circle":
        return CircleSpace((0, 1, 2), (0.5, 1.5)) if rng.random() < 0.5 else CircleSpace()
    if family == "graph":
        if rng.random() < 0.5:
            return triangle_graph()
        return GraphSpace([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1), (1, 2), (2, 3), (0, 2)])
    if family == "two_interval":
        return LineSpace("two_interval")
    if family == "cube_linf":
        return CubeSpace(2, "linf", [[0.5, 1.5], [1.0, 1.0]])
    return CubeSpace(2, "l2")


def _disintegrable_instance(rng, family):
    space = _fuzz_space(rng, family)
    nmax = {"cube_linf": 10, "cube_l2": 6, "graph": 10}.get(family, 16)
    n = 1 + rng.integers(nmax)
    x = space.sample(rng, n)
    r = 0.05 + 0.2 * rng.random()
    if family == "two_interval":
        r = 0.3 + 0.5 * rng.random()
    for _ in range(40):
        cover = BallCover(space, x, r)
        if family in ("interval", "circle", "two_interval"):
            out = check_connected(cover) if rng.random() < 0.5 else check_arrangement(cover)
        elif family == "cube_l2":
            out = check_sandwich(cover, h0=1 / 8, refinements=1)
        else:
            out = check_arrangement(cover)
        if out.is_disintegrable:
            return out.certificate
        r *= 1.5
    raise AssertionError(f"no disintegrable radius found for {family}")


def _mutate_outside(cert, rng):
    """Move one allocation to a group lying outside its ball; None if impossible."""
    space = cert.space
    entries = [k for k, (g, b, m) in enumerate(cert.alloc) if float(m) > 1e-6]
    for k in entries:
        g, b, m = cert.alloc[k]
        for g2 in range(len(cert.groups)):
            if g2 == g:
                continue
            trial = type(cert)(cert.space, cert.centers, cert.r, cert.pieces, cert.groups,
                               cert.alloc[:k] + [(g2, b, m)] + cert.alloc[k + 1:], cert.method)
            rep = validate_certificate(trial, space)
            if rep.support_violation > TAU:
                return trial
    return None


def test_c02_certificate_soundness(acceptance):
    families = ["interval", "circle", "graph", "two_interval", "cube_linf", "cube_l2"]
    certs = []
    for k in range(1000):
        rng = SplitMix64.keyed(202, k)
        certs.append(_disintegrable_instance(rng, families[k % len(families)]))
    valid = sum(validate_certificate(c).ok for c in certs)

    caught = {"mass_deficit": [0, 0], "support_violation": [0, 0]}
    for k, cert in enumerate(certs):
        rng = SplitMix64.keyed(203, k)
        mutant = _mutate_outside(cert, rng) if k % 2 else None
        if mutant is not None:
            flag = "support_violation"
        else:
            flag = "mass_deficit"
            mutant = type(cert)(cert.space, cert.centers, cert.r, cert.pieces, cert.groups,
                                [(g, b, m * 0.99) for g, b, m in cert.alloc], cert.method)
        rep = validate_certificate(mutant)
        caught[flag][1] += 1
        caught[flag][0] += (not rep.ok) and flag in rep.flags
    ok = valid == 1000 and all(c == t for c, t in caught.values()) and caught["support_violation"][1] > 0
    acceptance(ok, f"valid {valid}/1000; mutants caught {caught}")
    assert valid == 1000
    assert caught["support_violation"][1] > 200
    for flag, (c, t) in caught.items():
        assert c == t, flag


def test_c03_counterexample(acceptance):
    t0 = time.perf_counter()
    space = LineSpace("two_interval", q=1 / math.sqrt(2))
    x_minus_hi = float(space.components[0].breaks[1])
    refuted = verified = either = 0
    for k, n in enumerate((5, 50, 500)):
        for t in range(100):
            x = space.sample(SplitMix64.keyed(303, k, t), n)
            cover = BallCover(space, x, 0.25)
            out = check_connected(cover, certificate=False)
            if not out.is_not_disintegrable:
                continue
            refuted += 1
            w = out.witness
            exact_union = cover.union_measure(w.subset, exact=True)
            verified += exact_union < Fraction(len(w.subset), n) - Fraction(TAU)
            J = [i for i in range(n) if x[i] <= x_minus_hi]
            Jc = [i for i in range(n) if x[i] > x_minus_hi]
            viol = [s for s in (J, Jc) if s and cover.union_measure(s, exact=True) < Fraction(len(s), n)]
            either += bool(viol)
    elapsed = time.perf_counter() - t0
    ok = refuted == verified == either == 300 and elapsed < 60
    acceptance(ok, f"refuted {refuted}/300, witnesses verified {verified}, J_n or complement violates "
                   f"{either}, {elapsed:.1f}s")
    assert refuted == 300
    assert verified == 300
    assert either == 300
    assert elapsed < 60


def _interval_rate_config():
    return ExperimentConfig(space={"kind": "interval"}, n_grid=[100, 1000, 10000], trials=200, seed=404)


def test_c04_interval_rate(acceptance):
    t0 = time.perf_counter()
    tallies = run_mc(_interval_rate_config())
    elapsed = time.perf_counter() - t0
    bad = sum(t.failures + t.inconclusive for t in tallies)
    ci_ok = all(abs(t.ci_upper - CP_ZERO_200) < 1e-4 for t in tallies)
    eps_ok = all(t.rate_hat <= t.eps_n for t in tallies)
    ok = bad == 0 and ci_ok and eps_ok and elapsed < 600
    acceptance(ok, "; ".join(f"n={t.n} fail+inc={t.failures + t.inconclusive} ci={t.ci_upper:.5f}"
                             for t in tallies) + f"; {elapsed:.1f}s")
    assert bad == 0
    assert ci_ok
    assert elapsed < 600


def test_c05_circle_rate(acceptance):
    cfg = ExperimentConfig(space={"kind": "circle"}, n_grid=[100, 1000], trials=200, seed=505)
    tallies = run_mc(cfg)
    fails = [t.failures for t in tallies]
    inc = [t.inconclusive for t in tallies]
    acceptance(sum(fails) == 0, f"failures {fails}, inconclusive {inc}")
    assert sum(fails) == 0


def test_c06_cube_linf_rate(acceptance):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(space={"kind": "cube_linf", "D": 2}, n_grid=[256, 1024], trials=100, seed=606,
                           mode="sandwich", refinements=3)
    tallies = run_mc(cfg)
    elapsed = time.perf_counter() - t0
    bad = [t.failures + t.inconclusive for t in tallies]
    ok = max(bad) <= 2 and elapsed < 1200
    acceptance(ok, f"fail+inc per cell {bad}, r = {[round(t.r, 4) for t in tallies]}, {elapsed:.1f}s")
    assert max(bad) <= 2
    assert elapsed < 1200


def test_c07_wasserstein_bound(acceptance):
    cfg = _interval_rate_config()
    space = cfg.space_obj
    worst = -np.inf
    checked = 0

    def on_trial(ci, t, cover, out):
        nonlocal worst, checked
        if not out.is_disintegrable:
            return
        for p in (1, 2, 4):
            w = wasserstein_1d(space, cover.coords, p).value
            worst = max(worst, w - float(cover.r))
            checked += 1

    run_mc(cfg, on_trial=on_trial)
    gaps = []
    for k in range(50):
        rng = SplitMix64.keyed(707, k)
        n = [1, 2, 4, 8, 16, 32, 64][k % 7]
        x = space.sample(rng, n)
        gaps.append(abs(wasserstein_1d(space, x, 1).value - wasserstein_matching(space, x, 256, 1).value))
    ok = checked == 1800 and worst <= 1e-9 and max(gaps) <= 2 / 256
    acceptance(ok, f"{checked} (trial, p) pairs, max W_p - r = {worst:.3g}; max |W1 - matching| = "
                   f"{max(gaps):.2e} (limit {2 / 256:.2e})")
    assert checked == 1800
    assert worst <= 1e-9
    assert max(gaps) <= 2 / 256


def test_c08_average_case(acceptance):
    space = LineSpace()
    violations = 0
    spike_trials = spike_wins = 0
    trials = 0
    for n, count in ((20, 10), (100, 30), (400, 20)):
        for t in range(count):
            x = space.sample(SplitMix64.keyed(808, n, t), n)
            r = trial_critical_radius(space, x, 0.0, 1.0, 1e-4) * 1.01
            out = check_connected(BallCover(space, x, r))
            assert out.is_disintegrable
            trials += 1
            w1 = wasserstein_1d(space, x, 1).value
            rng = SplitMix64.keyed(809, n, t)
            funcs = [constant(), spike(x, L=100.0)] + [random_piecewise_linear(rng) for _ in range(20)]
            for f in funcs:
                g = avg_case_gap(out.certificate, f, w1=w1)
                violations += not (g.lhs <= g.rhs_avg + TAU)
                if f.name == "spike" and n >= 100:
                    spike_trials += 1
                    spike_wins += g.rhs_avg < g.rhs_worst
    frac = spike_wins / spike_trials
    ok = violations == 0 and frac >= 0.95
    acceptance(ok, f"{trials} trials x 22 functions, {violations} violations; spike rhs_avg < rhs_worst in "
                   f"{spike_wins}/{spike_trials}")
    assert violations == 0
    assert frac >= 0.95


def test_c09_scaling_probe(acceptance):
    t0 = time.perf_counter()
    space = LineSpace()
    r50 = {n: critical_radius(space, n, 500, 1e-4, seed=909).estimate for n in (100, 400, 1600)}
    lines, ok = [], True
    for n in (100, 400):
        ratio = r50[4 * n] / r50[n]
        target = math.sqrt(math.log(4 * n) / (4 * n)) / math.sqrt(math.log(n) / n)
        inside = abs(ratio / target - 1) <= 0.25
        ok &= inside
        lines.append(f"n={n}: ratio {ratio:.3f} vs {target:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 900
    acceptance(ok, "; ".join(lines) + f"; {elapsed:.1f}s")
    assert ok


def test_c10_monotonicity(acceptance):
    spaces = [(LineSpace(), check_connected), (CircleSpace(), check_connected),
              (triangle_graph(), check_arrangement), (CubeSpace(2, "linf"), check_arrangement)]
    flips = 0
    both = {"disintegrable": 0, "other": 0}
    for k in range(200):
        space, checker = spaces[k % 4]
        rng = SplitMix64.keyed(1010, k)
        n = 2 + rng.integers(10 if space.kind == "cube_linf" else 30)
        x = space.sample(rng, n)
        r1 = 0.02 + 0.3 * rng.random()
        r2 = r1 * (1 + rng.random())
        a = checker(BallCover(space, x, r1), certificate=False)
        b = checker(BallCover(space, x, r2), certificate=False)
        flips += a.is_disintegrable and not b.is_disintegrable
        both["disintegrable" if a.is_disintegrable else "other"] += 1
    acceptance(flips == 0, f"200 pairs, {flips} flips, verdicts at smaller r: {both}")
    assert flips == 0


def test_c11_graph_metric(acceptance):
    g = triangle_graph()
    x = GraphPoint(1, Fraction(1, 2))  # midpoint of {v1, v3}
    y = GraphPoint(2, Fraction(1, 2))  # midpoint of {v2, v3}
    d = g.distance(x, y, exact=True)
    mismatches = 0
    for k in range(100):
        rng = SplitMix64.keyed(1111, k)
        n = 1 + rng.integers(10)
        cover = BallCover(g, g.sample(rng, n), 0.02 + 0.4 * rng.random())
        a = check_arrangement(cover, certificate=False).status
        b = check_bruteforce(cover, certificate=False).status
        mismatches += a != b
    ok = d == Fraction(1, 3) and mismatches == 0
    acceptance(ok, f"d = {d}; arrangement vs brute mismatches {mismatches}/100")
    assert d == Fraction(1, 3)
    assert mismatches == 0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
