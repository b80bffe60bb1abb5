"""Monte Carlo harness for disintegrability probabilities.

Each ``(n, r)`` cell runs ``trials`` independent samples.  The sample for
trial ``t`` at the ``k``-th grid size is drawn from the stream keyed by
``(seed, k, t)``, so every radius of a grid size sees the same samples
(common random numbers) and results do not depend on evaluation order.
"""

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

from scipy.stats import beta

from .bounds import RateParams, rate_eps, rate_r
from .errors import ResourceLimitError
from .feasibility import BallCover, check
from .rng import SplitMix64
from .spaces import space_from_dict

CSV_COLUMNS = ("family", "n", "r", "trials", "failures", "inconclusive", "rate_hat", "ci_upper",
               "eps_n", "r_formula", "seconds")


def clopper_pearson_upper(failures, trials, conf=0.95):
    """Exact one-sided upper confidence bound for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= failures <= trials:
        raise ValueError("failures must lie in [0, trials]")
    if failures == trials:
        return 1.0
    return float(beta.ppf(conf, failures + 1, trials - failures))


@dataclass
class ExperimentConfig:
    """Monte Carlo sweep description.

    Attributes
    ----------
    space : dict
        Space descriptor (see :func:`covercheck.spaces.space_from_dict`).
    n_grid : list of int
        Strictly increasing sample sizes.
    trials : int
    seed : int
    mode : str
        Checker name; ``None`` picks ``connected`` on the line and circle,
        ``arrangement`` on graphs and ``sandwich`` on cubes.
    alpha : float
        Rate exponent for ``r(n)`` and ``eps(n)``.
    r : float, optional
        Fixed radius, overriding the rate formula.
    r_mult : list of float
        Multipliers applied to ``r(n)`` (ignored when ``r`` is set).
    h0, refinements : float, int
        Sandwich checker grid.
    certificates : bool
        Build certificates for disintegrable trials.
    record_timing : bool
        Write wall times (otherwise ``seconds`` is ``NA`` so reruns are byte-identical).
    out_csv, out_json : str, optional
    """

    space: dict
    n_grid: list
    trials: int = 200
    seed: int = 0
    mode: str = None
    alpha: float = 1.0
    r: float = None
    r_mult: list = field(default_factory=lambda: [1.0])
    h0: float = 1 / 8
    refinements: int = 3
    certificates: bool = False
    record_timing: bool = False
    out_csv: str = None
    out_json: str = None

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly increasing")
        if min(self.n_grid) < 1:
            raise ValueError("n_grid entries must be >= 1")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        self.trials = int(self.trials)
        if self.r is not None and not self.r > 0:
            raise ValueError("r must be positive")
        if not self.r_mult or any(m <= 0 for m in self.r_mult):
            raise ValueError("r_mult must be nonempty and positive")
        self._space = space_from_dict(self.space)
        if self.mode is None:
            kind = self._space.kind
            self.mode = ("sandwich" if kind.startswith("cube") else
                         "arrangement" if kind == "graph" else "connected")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def space_obj(self):
        return self._space

    @property
    def rate_params(self):
        if self._space.kind == "two_interval":
            return None
        return RateParams.for_space(self._space, self.alpha)

    def cells(self):
        """``(n_index, n, r)`` for every cell, in output order."""
        params = self.rate_params
        out = []
        for k, n in enumerate(self.n_grid):
            if self.r is not None:
                out.append((k, n, float(self.r)))
                continue
            if params is None:
                raise ValueError("this space has no rate formula; set a fixed r")
            base = rate_r(params, max(n, 2))
            out.extend((k, n, m * base) for m in self.r_mult)
        return out

    def check_kwargs(self):
        kw = {"certificate": self.certificates}
        if self.mode == "sandwich":
            kw.update(h0=self.h0, refinements=self.refinements)
        return kw

    def to_dict(self):
        d = asdict(self)
        d.pop("_space", None)
        return d


@dataclass
class TrialTally:
    """Outcome counts of one ``(n, r)`` cell."""

    family: str
    n: int
    r: float
    trials: int
    failures: int
    inconclusive: int
    ci_upper: float
    eps_n: float = None
    r_formula: float = None
    seconds: float = None

    @property
    def rate_hat(self):
        """Conservative failure estimate (inconclusive trials count as failures)."""
        return (self.failures + self.inconclusive) / self.trials

    def row(self, record_timing=False):
        def fmt(x):
            return "NA" if x is None else repr(float(x))
        return {"family": self.family, "n": str(self.n), "r": fmt(self.r), "trials": str(self.trials),
                "failures": str(self.failures), "inconclusive": str(self.inconclusive),
                "rate_hat": fmt(self.rate_hat), "ci_upper": fmt(self.ci_upper), "eps_n": fmt(self.eps_n),
                "r_formula": fmt(self.r_formula),
                "seconds": fmt(self.seconds) if record_timing else "NA"}

    def to_dict(self):
        d = asdict(self)
        d["rate_hat"] = self.rate_hat
        return d


def trial_sample(space, seed, n_index, trial, n):
    return space.sample(SplitMix64.keyed(seed, n_index, trial), n)


def run_trial(space, x, r, mode, **kw):
    """Check one sample; resource-limit errors become inconclusive outcomes."""
    from .feasibility import INCONCLUSIVE, CheckOutcome

    cover = BallCover(space, x, r)
    try:
        return cover, check(cover, mode, **kw)
    except ResourceLimitError as exc:
        return cover, CheckOutcome(INCONCLUSIVE, method=mode, details={"error": str(exc)})


def iter_trials(config):
    """Yield ``(cell_index, trial, cover, outcome)`` for every trial of the sweep."""
    space = config.space_obj
    kw = config.check_kwargs()
    for ci, (k, n, r) in enumerate(config.cells()):
        for t in range(config.trials):
            x = trial_sample(space, config.seed, k, t, n)
            cover, out = run_trial(space, x, r, config.mode, **kw)
            yield ci, t, cover, out


def run_mc(config, on_trial=None):
    """Run the sweep and return one :class:`TrialTally` per cell.

    Parameters
    ----------
    config : ExperimentConfig
    on_trial : callable, optional
        Called as ``on_trial(cell_index, trial, cover, outcome)``.
    """
    space = config.space_obj
    params = config.rate_params
    family = space.kind
    cells = config.cells()
    counts = [[0, 0] for _ in cells]
    elapsed = [0.0] * len(cells)
    last = time.perf_counter()
    for ci, t, cover, out in iter_trials(config):
        now = time.perf_counter()
        elapsed[ci] += now - last
        if out.is_not_disintegrable:
            counts[ci][0] += 1
        elif out.is_inconclusive:
            counts[ci][1] += 1
        if on_trial is not None:
            on_trial(ci, t, cover, out)
        last = time.perf_counter()
    tallies = []
    for ci, (k, n, r) in enumerate(cells):
        fail, inc = counts[ci]
        tallies.append(TrialTally(
            family=family, n=n, r=r, trials=config.trials, failures=fail, inconclusive=inc,
            ci_upper=clopper_pearson_upper(fail + inc, config.trials),
            eps_n=rate_eps(params, n) if params else None,
            r_formula=rate_r(params, max(n, 2)) if params else None,
            seconds=elapsed[ci]))
    if config.out_csv:
        with open(config.out_csv, "w", newline="") as fh:
            fh.write(tallies_csv(tallies, config.record_timing))
    if config.out_json:
        with open(config.out_json, "w") as fh:
            json.dump(report_dict(config, tallies), fh, indent=2, sort_keys=True)
    return tallies


def tallies_csv(tallies, record_timing=False):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for t in tallies:
        w.writerow(t.row(record_timing))
    return buf.getvalue()


def report_dict(config, tallies):
    rows = []
    for t in tallies:
        d = t.to_dict()
        if not config.record_timing:
            d["seconds"] = None
        rows.append(d)
    return {"config": config.to_dict(), "cells": rows}


# --- critical radius ---------------------------------------------------------------

@dataclass
class CriticalRadius:
    """Bracket ``[lo, hi]`` around the 50% disintegrability radius."""

    n: int
    lo: float
    hi: float
    frac_lo: float
    frac_hi: float
    probes: int

    @property
    def estimate(self):
        return (self.lo + self.hi) / 2


def disintegrable_fraction(space, samples, r, mode="connected", **kw):
    ok = 0
    for x in samples:
        _, out = run_trial(space, x, r, mode, certificate=False, **kw)
        ok += out.is_disintegrable
    return ok / len(samples)


def critical_radius(space, n, trials, tol, seed=0, lo=None, hi=None, mode="connected", n_index=None, **kw):
    """Bisection for ``r_50(n)`` with common random numbers.

    The same ``trials`` samples are checked at every probed radius, so the
    disintegrable fraction is monotone in ``r``.

    Raises
    ------
    ValueError
        If ``[lo, hi]`` does not bracket the 50% level.
    """
    if trials < 1 or not tol > 0:
        raise ValueError("need trials >= 1 and tol > 0")
    lo = 1e-6 if lo is None else float(lo)
    hi = float(space.diameter) if hi is None else float(hi)
    key = n if n_index is None else n_index
    samples = [trial_sample(space, seed, key, t, n) for t in range(trials)]
    f_lo = disintegrable_fraction(space, samples, lo, mode, **kw)
    f_hi = disintegrable_fraction(space, samples, hi, mode, **kw)
    probes = 2
    if not (f_lo < 0.5 <= f_hi):
        raise ValueError(f"[{lo}, {hi}] does not bracket the 50% level (fractions {f_lo}, {f_hi})")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        f = disintegrable_fraction(space, samples, mid, mode, **kw)
        probes += 1
        if f >= 0.5:
            hi, f_hi = mid, f
        else:
            lo, f_lo = mid, f
    return CriticalRadius(n, lo, hi, f_lo, f_hi, probes)


def trial_critical_radius(space, x, lo, hi, tol, mode="connected", **kw):
    """Smallest disintegrable radius of one fixed sample, to within ``tol``.

    Returns the upper end of the final bracket, where the sample is
    disintegrable.
    """
    _, out = run_trial(space, x, hi, mode, certificate=False, **kw)
    if not out.is_disintegrable:
        raise ValueError(f"sample is not disintegrable at r = {hi}")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        _, out = run_trial(space, x, mid, mode, certificate=False, **kw)
        if out.is_disintegrable:
            hi = mid
        else:
            lo = mid
    return hi


def monotone_pairs(space, n, trials, r_pairs, seed=0, mode="connected", **kw):
    """Count verdict flips Disintegrable -> not Disintegrable between ``r < r2`` on shared samples."""
    flips = []
    for t in range(trials):
        x = trial_sample(space, seed, n, t, n)
        r1, r2 = r_pairs[t % len(r_pairs)]
        _, a = run_trial(space, x, r1, mode, certificate=False, **kw)
        _, b = run_trial(space, x, r2, mode, certificate=False, **kw)
        if a.is_disintegrable and not b.is_disintegrable:
            flips.append(t)
    return flips


def summarize(tallies):
    """Plain-text table of tallies."""
    lines = [f"{'n':>7} {'r':>10} {'trials':>6} {'fail':>5} {'inc':>4} {'ci_upper':>9} {'eps_n':>9}"]
    for t in tallies:
        eps = "" if t.eps_n is None else f"{t.eps_n:9.3g}"
        lines.append(f"{t.n:>7} {t.r:>10.5g} {t.trials:>6} {t.failures:>5} {t.inconclusive:>4} "
                     f"{t.ci_upper:>9.5f} {eps}")
    return "\n".join(lines)


def below_n0_note(tally):
    """Annotation for small-n rows, where the asymptotic bound need not hold yet."""
    if tally.eps_n is not None and tally.failures + tally.inconclusive > 0 and tally.ci_upper > tally.eps_n:
        return "below unknown n0 or bound not met"
    return ""

