"""Fast invariant suites run by ``exoforest selftest``."""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from . import cart_process as cp
from .ensemble_core import DiscretePartition, DiscreteSpace, covariance_report
from .model import ModelSpec, named_config
from .moments import exact_binomial_functional, gap_sign_ok, lemma_grid
from .theory import perf_measures, sample_pair_terms


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _process_invariants():
    rng = np.random.default_rng(1)
    for kind in ("binary", "uniform"):
        spec = named_config("I", kind)
        for gamma, l in ((0.3, 7), (1.0, 9)):
            states = cp.sample_process_batch(spec, gamma, l, 500, rng)
            if not np.all(states.sum(axis=1) == l) or np.any(states < 0):
                return False, f"{kind} gamma={gamma} l={l}: split count != l"
    return True, "sum of splits equals depth"


def _sampler_vs_enumerator():
    spec = ModelSpec(8, 3, (1.0, 1.0, 0.7), 1.0)
    rng = np.random.default_rng(2)
    worst = 0.0
    for kind, gamma, l in (("binary", 0.5, 3), ("uniform", 0.4, 4)):
        sp = spec.with_kind(kind)
        states, probs = cp.process_distribution(sp, gamma, l)
        draws = cp.sample_process_batch(sp, gamma, l, 40000, rng)
        lookup = {tuple(s): i for i, s in enumerate(states.tolist())}
        freq = np.zeros(len(probs))
        for row in draws.tolist():
            freq[lookup[tuple(row)]] += 1
        freq /= draws.shape[0]
        # states too rare for a normal approximation are pooled into one bin
        common = probs * draws.shape[0] >= 50
        p = np.append(probs[common], probs[~common].sum())
        f = np.append(freq[common], freq[~common].sum())
        se = np.sqrt(p * (1 - p) / draws.shape[0]) + 1e-12
        worst = max(worst, float(np.max(np.abs(f - p) / se)))
    return worst < 5.0, f"max |freq - exact| / se = {worst:.2f}"


def _w_matches_q():
    for d, gamma in ((4, 0.5), (20, 0.3), (100, 0.1)):
        k = cp.subsample_size(d, gamma)
        for i in range(0, d - k + 2):
            if cp.w_function(d, gamma, i) != cp.subsample_avoid_prob(d, gamma, i):
                return False, f"d={d} gamma={gamma} i={i}"
    return True, "W equals q at all integers"


def _forest_dominance():
    for kind, name in itertools.product(("binary", "uniform"), ("I", "II")):
        spec = named_config(name, kind)
        for gamma, l in ((0.2, 4), (0.6, 7), (1.0, 9)):
            t = sample_pair_terms(spec, gamma, l, 1000, 200, 3)
            if np.any(t.ensemble_sq_bias > t.single_sq_bias) or \
                    np.any(t.cross_tree_cov > t.single_tree_var):
                return False, f"{kind} {name} gamma={gamma} l={l}"
    return True, "per-realization dominance"


def _fixed_points():
    m = perf_measures("binary", named_config("I"), 1.0, 5, 100, 1000, 200, 0)
    ok = (m.unsplit_or_diag_tree == 0 and m.unsplit_or_diag_forest == 0
          and m.sq_bias_tree == 0 and m.sq_bias_forest == 0 and m.corr_forest == 1.0)
    return ok, "config I binary gamma=1 l=5"


def _cauchy_schwarz():
    rng = np.random.default_rng(4)
    for _ in range(50):
        sizes = rng.integers(2, 4, size=2)
        probs = []
        for k in sizes:
            w = rng.integers(1, 5, size=k)
            probs.append([Fraction(int(v), int(w.sum())) for v in w])
        m = int(np.prod(sizes))
        space = DiscreteSpace([list(range(k)) for k in sizes], probs,
                              mu=[Fraction(int(v)) for v in rng.integers(-3, 4, size=m)],
                              sigma_sq=[Fraction(int(v), 2) for v in rng.integers(1, 5, size=m)])
        p = DiscretePartition(space, rng.integers(0, 3, size=m))
        p2 = DiscretePartition(space, rng.integers(0, 3, size=m))
        rep = covariance_report(p, p2)
        if not rep.cauchy_schwarz_holds() or rep.var_left != p.n_cells:
            return False, "violation on a random instance"
    return True, "50 exact random instances"


def _lemma_signs():
    bad = [r for r in lemma_grid(ns=(5, 10), ps=(0.1, 0.3, 0.5, 0.7, 0.9))
           if not gap_sign_ok(r) or r.ratio > 50 or r.gap_ratio > 50]
    return not bad, f"{len(bad)} grid points outside the envelope"


def _binomial_oracle():
    worst = max(abs(exact_binomial_functional(n, p, lambda k: 1.0) - 1.0)
                for n in (5, 20, 60) for p in (0.0, 0.05, 0.5, 0.95, 1.0))
    return worst <= 1e-12, f"max |sum pmf - 1| = {worst:.1e}"


SUITES: list[tuple[str, Callable]] = [
    ("process_invariants", _process_invariants),
    ("sampler_vs_enumerator", _sampler_vs_enumerator),
    ("w_equals_q", _w_matches_q),
    ("forest_dominance", _forest_dominance),
    ("fixed_points", _fixed_points),
    ("cauchy_schwarz", _cauchy_schwarz),
    ("lemma_envelopes", _lemma_signs),
    ("binomial_oracle", _binomial_oracle),
]


def run_selftest() -> list[CheckResult]:
    out = []
    for name, fn in SUITES:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
