"""Command-line interface.

Exit status: 0 on success, 2 on invalid input or configuration, 3 when an
``--assert`` check fails.
"""

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .bounds import (RateParams, avg_case_gap, ball_lipschitz, component_indicator, constant, empirical_gap,
                     random_piecewise_linear, rate_best_known, rate_eps, rate_r, spike)
from .certificates import validate_certificate
from .errors import CovercheckError
from .experiments import ExperimentConfig, run_mc, summarize, tallies_csv, trial_critical_radius, trial_sample
from .feasibility import CHECKERS, BallCover, check
from .rng import SplitMix64
from .spaces import DEFAULT_Q, LineSpace, load_space, space_from_dict
from .transport import wasserstein_1d

EXIT_OK, EXIT_INVALID, EXIT_ASSERT = 0, 2, 3


class AssertionFailed(Exception):
    pass


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(float(v)) for v in text.split(",") if v.strip()]


def _space_arg(value):
    """A space JSON file path or an inline JSON object."""
    if value.lstrip().startswith("{"):
        return space_from_dict(json.loads(value))
    return load_space(value)


def _writer(path):
    return open(path, "w", newline="") if path else sys.stdout


def _emit_rows(rows, fields, path):
    fh = _writer(path)
    try:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    finally:
        if fh is not sys.stdout:
            fh.close()


# --- subcommands ---------------------------------------------------------------------

def cmd_check(args):
    space = _space_arg(args.space)
    if args.centers:
        centers = np.asarray(json.loads(args.centers), dtype=float)
    else:
        if args.n is None or args.seed is None:
            raise ValueError("--n and --seed are required unless --centers is given")
        centers = trial_sample(space, args.seed, 0, 0, args.n)
    cover = BallCover(space, centers, args.r)
    kw = {}
    if args.mode == "sandwich":
        kw.update(h0=args.h0, refinements=args.refinements)
    out = check(cover, args.mode, **kw)
    result = out.to_dict()
    if out.certificate is not None:
        rep = validate_certificate(out.certificate)
        result["certificate_valid"] = rep.ok
        if args.emit_cert:
            with open(args.emit_cert, "w") as fh:
                fh.write(out.certificate.to_json(indent=1))
        if args.assert_ and not rep.ok:
            raise AssertionFailed(f"certificate failed validation: {rep.flags}")
    if not args.timings:
        result.pop("timings", None)
    print(json.dumps(result, indent=2, sort_keys=True, default=float))
    return EXIT_OK


def cmd_mc(args):
    with open(args.config) as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["seed"] = args.seed
    if "seed" not in raw:
        raise ValueError("a seed is required (config key 'seed' or --seed)")
    if args.out:
        raw["out_csv"] = args.out
    if args.out_json:
        raw["out_json"] = args.out_json
    if args.timing:
        raw["record_timing"] = True
    if args.r_mult:
        raw["r_mult"] = args.r_mult
    cfg = ExperimentConfig.from_dict(raw)
    tallies = run_mc(cfg)
    if not cfg.out_csv:
        sys.stdout.write(tallies_csv(tallies, cfg.record_timing))
    else:
        print(summarize(tallies), file=sys.stderr)
    if args.assert_:
        bad = [t for t in tallies if t.failures + t.inconclusive > args.max_failures]
        if bad:
            raise AssertionFailed(f"{len(bad)} cell(s) exceed {args.max_failures} failures")
    return EXIT_OK


def cmd_rate(args):
    params = RateParams(args.family, args.alpha, args.c, None, args.D, args.edges, args.p)
    rows = []
    for n in args.n_grid:
        row = {"family": args.family, "n": n, "r_formula": repr(rate_r(params, n)),
               "eps_n": repr(rate_eps(params, n)),
               "best_known_shape": repr(rate_best_known(params, n)) if n >= 3 else "NA"}
        rows.append(row)
    _emit_rows(rows, ["family", "n", "r_formula", "eps_n", "best_known_shape"], args.out)
    return EXIT_OK


def cmd_wasserstein(args):
    space = _space_arg(args.space)
    params = RateParams.for_space(space, args.alpha)
    r_n = rate_r(params, args.n)
    rows, violations = [], 0
    for t in range(args.trials):
        x = trial_sample(space, args.seed, 0, t, args.n)
        cover = BallCover(space, x, r_n)
        disint = check(cover, "connected", certificate=False).is_disintegrable
        for p in args.p:
            w = wasserstein_1d(space, x, p)
            ok = w.value <= r_n + 1e-9
            violations += disint and not ok
            rows.append({"trial": t, "p": p, "method": w.method, "value": repr(w.value), "r_n": repr(r_n),
                         "disintegrable": int(disint), "bound_ok": int(ok)})
    _emit_rows(rows, ["trial", "p", "method", "value", "r_n", "disintegrable", "bound_ok"], args.out)
    if args.assert_ and violations:
        raise AssertionFailed(f"{violations} Wasserstein bound violation(s) on disintegrable trials")
    return EXIT_OK


def cmd_lipschitz_demo(args):
    space = _space_arg(args.space) if args.space else LineSpace()
    rows, violations = [], 0
    fields = ["trial", "function", "r", "lhs", "mid", "rhs_avg", "rhs_worst", "holds"]
    for t in range(args.trials):
        x = trial_sample(space, args.seed, 0, t, args.n)
        if space.kind == "two_interval":
            f = component_indicator(space, args.n)
            lips = ball_lipschitz(space, x, args.r, f)
            rows.append({"trial": t, "function": f.name, "r": repr(args.r), "lhs": repr(empirical_gap(space, x, f)),
                         "mid": "NA", "rhs_avg": repr(args.r * float(lips.mean())), "rhs_worst": "NA",
                         "holds": "NA"})
            continue
        if space.kind != "interval":
            raise ValueError("lipschitz-demo supports interval and two_interval spaces")
        r = trial_critical_radius(space, x, 0.0, 1.0, args.tol) * (1 + args.slack)
        out = check(BallCover(space, x, r), "connected")
        rng = SplitMix64.keyed(args.seed, 1, t)
        funcs = [constant(), spike(x, args.L)] + [random_piecewise_linear(rng) for _ in range(args.random)]
        w1 = wasserstein_1d(space, x, 1).value
        for f in funcs:
            g = avg_case_gap(out.certificate, f, w1=w1)
            violations += not g.holds
            rows.append({"trial": t, "function": f.name, "r": repr(r), "lhs": repr(g.lhs), "mid": repr(float(g.mid)),
                         "rhs_avg": repr(g.rhs_avg), "rhs_worst": repr(g.rhs_worst), "holds": int(g.holds)})
    _emit_rows(rows, fields, args.out)
    if args.assert_ and violations:
        raise AssertionFailed(f"{violations} average-case bound violation(s)")
    return EXIT_OK


def cmd_counterexample(args):
    space = LineSpace("two_interval", q=args.q)
    report = {"q": float(space.q), "r": args.r, "cells": []}
    all_fail = True
    for k, n in enumerate(args.n_grid):
        fails = verified = 0
        for t in range(args.trials):
            x = trial_sample(space, args.seed, k, t, n)
            cover = BallCover(space, x, args.r)
            out = check(cover, "connected", certificate=False)
            if out.is_not_disintegrable:
                fails += 1
                w = out.witness
                union = cover.union_measure(w.subset)
                verified += union < len(w.subset) / n - 1e-9
        all_fail &= fails == args.trials == verified
        report["cells"].append({"n": n, "trials": args.trials, "not_disintegrable": fails,
                                "witnesses_verified": verified, "fraction": fails / args.trials})
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.assert_ and not all_fail:
        raise AssertionFailed("some trial was not refuted")
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="covercheck", description="Disintegration of measures along random ball covers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_assert(sp):
        sp.add_argument("--assert", dest="assert_", action="store_true", help="exit 3 if the check fails")

    sp = sub.add_parser("check", help="decide one instance")
    sp.add_argument("--space", required=True, help="space JSON file or inline JSON object")
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--centers", help="JSON list of centers (instead of sampling)")
    sp.add_argument("--mode", choices=sorted(CHECKERS), default="arrangement")
    sp.add_argument("--h0", type=float, default=1 / 8)
    sp.add_argument("--refinements", type=int, default=3)
    sp.add_argument("--emit-cert", help="write the certificate JSON here")
    sp.add_argument("--timings", action="store_true", help="include wall times in the output")
    add_assert(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("mc", help="Monte Carlo sweep from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="CSV report path (stdout if omitted)")
    sp.add_argument("--out-json")
    sp.add_argument("--timing", action="store_true", help="record wall times in the reports")
    sp.add_argument("--r-mult", type=_floats, help="comma-separated multipliers of r(n), overriding the config")
    sp.add_argument("--max-failures", type=int, default=0)
    add_assert(sp)
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("rate", help="tabulate rate formulas")
    sp.add_argument("--family", required=True, choices=["interval", "circle", "graph", "cube_linf", "cube_l2"])
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--D", type=int, default=1)
    sp.add_argument("--edges", type=int)
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--n-grid", type=_ints, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_rate)

    sp = sub.add_parser("wasserstein", help="W_p against the rate radius")
    sp.add_argument("--space", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=_floats, default=[1.0, 2.0, 4.0])
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--out")
    add_assert(sp)
    sp.set_defaults(func=cmd_wasserstein)

    sp = sub.add_parser("lipschitz-demo", help="average-case versus worst-case Lipschitz bounds")
    sp.add_argument("--space")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--L", type=float, default=100.0)
    sp.add_argument("--random", type=int, default=3, help="number of random piecewise-linear functions")
    sp.add_argument("--r", type=float, default=0.25, help="radius for the two-interval demo")
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--slack", type=float, default=0.01, help="relative margin above the critical radius")
    sp.add_argument("--out")
    add_assert(sp)
    sp.set_defaults(func=cmd_lipschitz_demo)

    sp = sub.add_parser("counterexample", help="two-interval space: never disintegrable")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--q", type=float, default=DEFAULT_Q)
    sp.add_argument("--r", type=float, default=0.25)
    sp.add_argument("--n-grid", type=_ints, default=[5, 50, 500])
    sp.add_argument("--trials", type=int, default=100)
    add_assert(sp)
    sp.set_defaults(func=cmd_counterexample)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AssertionFailed as exc:
        print(f"covercheck: assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError, CovercheckError) as exc:
        print(f"covercheck: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

