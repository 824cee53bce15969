"""Leading-order MSE expansions for trees and forests on the sparse linear model.

Every expectation over CART processes is a Monte-Carlo mean over i.i.d. pairs
of processes. All terms are computed from the same pairs, so per-realization
inequalities (ensemble bias <= single bias, shared splits <= splits) also hold
for the reported means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cart_process import sample_process_batch, subsample_avoid_prob, subsample_size
from .model import FeatureKind, ModelSpec
from .seeding import make_rng


@dataclass(frozen=True)
class MseBreakdown:
    """Leading terms of the tree/forest MSE expansion.

    `total_leading` is the B-weighted combination
    ((B-1)/B)(ensemble_sq_bias + cross_tree_cov) + (1/B)(single_sq_bias + single_tree_var);
    B = 1 gives the single-tree MSE.
    """

    ensemble_sq_bias: float
    single_sq_bias: float
    cross_tree_cov: float
    single_tree_var: float
    remainder_bound: float
    total_leading: float
    mc_se: dict
    reps: int
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PerfMeasures:
    """Tree and forest values of the six performance measures (a)-(f).

    Measure (b) is the number of unsplit signals in the binary case and the
    squared diagonal signal length in the uniform case.
    """

    sq_bias_tree: float
    sq_bias_forest: float
    unsplit_or_diag_tree: float
    unsplit_or_diag_forest: float
    var_tree: float
    cov_forest: float
    corr_tree: float
    corr_forest: float
    shared_splits_tree: float
    shared_splits_forest: float
    mse_tree: float
    mse_forest: float
    mc_se: dict

    # (measure label, tree field, forest field) in CSV order
    ROWS = (
        ("a_sq_bias", "sq_bias_tree", "sq_bias_forest"),
        ("b_unsplit_or_diag", "unsplit_or_diag_tree", "unsplit_or_diag_forest"),
        ("c_variance", "var_tree", "cov_forest"),
        ("d_correlation", "corr_tree", "corr_forest"),
        ("e_shared_splits", "shared_splits_tree", "shared_splits_forest"),
        ("f_mse", "mse_tree", "mse_forest"),
    )


@dataclass(frozen=True)
class PairTerms:
    """Per-realization terms for `reps` independent process pairs.

    Single-tree quantities use the first process of each pair.
    """

    ensemble_sq_bias: np.ndarray
    single_sq_bias: np.ndarray
    cross_tree_cov: np.ndarray
    single_tree_var: np.ndarray
    splits: np.ndarray  # sum_j I_lj, or l in the uniform case
    shared_splits: np.ndarray  # sum_j min(I_lj, I'_lj)
    unsplit_tree: np.ndarray  # s - sum I, or sum 2^{-2J} over signals
    unsplit_forest: np.ndarray  # s - sum max, or sum 2^{-2 max} over signals
    depth: int

    @property
    def reps(self) -> int:
        return self.ensemble_sq_bias.shape[0]

    @property
    def correlation(self) -> np.ndarray:
        return np.ldexp(1.0, (self.shared_splits - self.depth).astype(np.int64))


def _check_common(l, B, n, reps):
    if int(l) != l or l < 0:
        raise ValueError(f"depth must be a nonnegative integer, got {l}")
    if int(B) != B or B < 1:
        raise ValueError(f"B must be a positive integer, got {B}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if int(reps) != reps or reps < 1:
        raise ValueError(f"reps must be a positive integer, got {reps}")


def sample_pair_terms(spec: ModelSpec, gamma: float, l: int, n: int, reps: int,
                      seed=0) -> PairTerms:
    """Draw `reps` i.i.d. process pairs and evaluate every MSE term on each."""
    _check_common(l, 1, n, reps)
    l = int(l)
    rng = make_rng(seed)
    states = sample_process_batch(spec, gamma, l, 2 * reps, rng).astype(np.int64)
    a, b = states[:reps], states[reps:]
    bsq = spec.beta_sq
    s = spec.s
    sig = spec.sigma0_sq
    shared = np.minimum(a, b).sum(axis=1)
    hi = np.maximum(a, b)
    if spec.feature_kind is FeatureKind.BINARY:
        ens = 0.25 * ((1 - hi) @ bsq)
        sgl = 0.25 * ((1 - a) @ bsq)
        splits = a.sum(axis=1)
        un_tree = (s - a[:, :s].sum(axis=1)).astype(float)
        un_forest = (s - hi[:, :s].sum(axis=1)).astype(float)
    else:
        # a = 1: the support length of U(0, 1)
        shrink_tree = np.ldexp(1.0, -2 * a[:, :s])
        shrink_forest = np.ldexp(1.0, -2 * hi[:, :s])
        ens = (shrink_forest @ bsq[:s]) / 12.0
        sgl = (shrink_tree @ bsq[:s]) / 12.0
        splits = np.full(reps, l, dtype=np.int64)
        un_tree = shrink_tree.sum(axis=1)
        un_forest = shrink_forest.sum(axis=1)
    cov = (sig + ens) * np.ldexp(1.0, shared) / n
    var = (sig + sgl) * np.ldexp(1.0, splits) / n
    return PairTerms(ensemble_sq_bias=ens, single_sq_bias=sgl, cross_tree_cov=cov,
                     single_tree_var=var, splits=splits, shared_splits=shared,
                     unsplit_tree=un_tree, unsplit_forest=un_forest, depth=l)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2 or np.all(x == x[0]):
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.shape[0]))


def _b_weighted(forest_part, tree_part, B):
    # written so that equal inputs give a bit-identical output for every B
    return forest_part + (tree_part - forest_part) / B


def remainder_bound(l: int, n: int) -> float:
    """2^l / (n (1 + (n-1) 2^-l)^{1/2}) + (1 - 2^-l)^n, implicit constant 1."""
    p = 2.0 ** -l
    return 2.0 ** l / (n * np.sqrt(1.0 + (n - 1) * p)) + (1.0 - p) ** n


def breakdown_from_pairs(terms: PairTerms, B: int, n: int) -> MseBreakdown:
    ens, ens_se = _mean_se(terms.ensemble_sq_bias)
    sgl, sgl_se = _mean_se(terms.single_sq_bias)
    cov, cov_se = _mean_se(terms.cross_tree_cov)
    var, var_se = _mean_se(terms.single_tree_var)
    total_r = _b_weighted(terms.ensemble_sq_bias + terms.cross_tree_cov,
                          terms.single_sq_bias + terms.single_tree_var, B)
    total, total_se = _mean_se(total_r)
    return MseBreakdown(
        ensemble_sq_bias=ens, single_sq_bias=sgl, cross_tree_cov=cov, single_tree_var=var,
        remainder_bound=float(remainder_bound(terms.depth, n)), total_leading=total,
        mc_se={"ensemble_sq_bias": ens_se, "single_sq_bias": sgl_se,
               "cross_tree_cov": cov_se, "single_tree_var": var_se,
               "total_leading": total_se},
        reps=terms.reps,
    )


def binary_mse_terms(spec: ModelSpec, gamma: float, l: int, B: int, n: int,
                     reps: int = 1000, seed=0) -> MseBreakdown:
    """Leading MSE terms for binary features (B = 1 gives the tree MSE).

    Args:
        spec: Binary model specification.
        gamma: Feature subsample rate in (0, 1].
        l: Tree depth, required to satisfy l < ceil(gamma d).
        B: Number of trees.
        n: Training sample size.
        reps: Number of Monte-Carlo process pairs.
        seed: Integer seed or a numpy Generator.

    Returns:
        MseBreakdown with Monte-Carlo standard errors.
    """
    if spec.feature_kind is not FeatureKind.BINARY:
        raise ValueError("binary_mse_terms requires a binary model spec")
    _check_common(l, B, n, reps)
    k = subsample_size(spec.d, gamma)
    if l >= k:
        raise ValueError(f"binary expansion needs l < ceil(gamma d) = {k}, got l={l}")
    return breakdown_from_pairs(sample_pair_terms(spec, gamma, l, n, reps, seed), int(B), int(n))


def uniform_mse_terms(spec: ModelSpec, gamma: float, l: int, B: int, n: int,
                      reps: int = 1000, seed=0) -> MseBreakdown:
    """Leading MSE terms for uniform features; see `binary_mse_terms`."""
    if spec.feature_kind is not FeatureKind.UNIFORM:
        raise ValueError("uniform_mse_terms requires a uniform model spec")
    _check_common(l, B, n, reps)
    subsample_size(spec.d, gamma)
    return breakdown_from_pairs(sample_pair_terms(spec, gamma, l, n, reps, seed), int(B), int(n))


def mse_terms(spec: ModelSpec, gamma, l, B, n, reps=1000, seed=0) -> MseBreakdown:
    if spec.feature_kind is FeatureKind.BINARY:
        return binary_mse_terms(spec, gamma, l, B, n, reps, seed)
    return uniform_mse_terms(spec, gamma, l, B, n, reps, seed)


def convergence_bound(spec: ModelSpec, gamma: float, l: int, n: int) -> float:
    """Explicit-constant rate bound on the tree MSE.

    (max_j beta_j^2 / c) s (1 - (3/4) gamma W(s))^l + (sigma0^2 + sum beta^2 / c) 2^l / n
    with c = 4 (binary) or c = 12 (uniform). W(s) is the probability that a
    subsample misses all s signals, which is 0 once ceil(gamma d) > d - s.
    """
    if int(l) != l or l < 0:
        raise ValueError(f"depth must be a nonnegative integer, got {l}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    c = 4.0 if spec.feature_kind is FeatureKind.BINARY else 12.0
    bsq = spec.beta_sq
    s = spec.s
    variance = (spec.sigma0_sq + bsq.sum() / c) * 2.0 ** l / n
    if s == 0:
        return float(variance)
    w = subsample_avoid_prob(spec.d, gamma, s)
    # each step contracts the expected unsplit-signal count by this factor
    rate = 1.0 - 0.75 * gamma * w
    return float(bsq.max() / c * s * rate ** l + variance)


def cross_tree_correlation(kind, spec: ModelSpec, gamma: float, l: int,
                           reps: int = 1000, seed=0) -> float:
    """Monte-Carlo mean of 2^{shared splits - l} over independent process pairs."""
    spec = spec.with_kind(kind)
    if l == 0:
        return 1.0
    return float(sample_pair_terms(spec, gamma, l, 1, reps, seed).correlation.mean())


def perf_measures(kind, spec: ModelSpec, gamma: float, l: int, B: int, n: int,
                  reps: int = 1000, seed=0) -> PerfMeasures:
    """All six tree/forest performance measures from one set of process pairs.

    Forest values of measures (a) and (c) carry the same B-weighting as the
    forest MSE, so that (a) + (c) = (f) for both estimators.
    """
    spec = spec.with_kind(kind)
    _check_common(l, B, n, reps)
    if spec.feature_kind is FeatureKind.BINARY and l >= subsample_size(spec.d, gamma):
        raise ValueError("binary measures need l < ceil(gamma d)")
    t = sample_pair_terms(spec, gamma, l, n, reps, seed)
    B = int(B)
    cols = {
        "sq_bias_tree": t.single_sq_bias,
        "sq_bias_forest": _b_weighted(t.ensemble_sq_bias, t.single_sq_bias, B),
        "unsplit_or_diag_tree": t.unsplit_tree,
        "unsplit_or_diag_forest": t.unsplit_forest,
        "var_tree": t.single_tree_var,
        "cov_forest": _b_weighted(t.cross_tree_cov, t.single_tree_var, B),
        "corr_tree": np.ones(t.reps),
        "corr_forest": t.correlation,
        "shared_splits_tree": t.splits.astype(float),
        "shared_splits_forest": t.shared_splits.astype(float),
        "mse_tree": t.single_sq_bias + t.single_tree_var,
        "mse_forest": _b_weighted(t.ensemble_sq_bias + t.cross_tree_cov,
                                  t.single_sq_bias + t.single_tree_var, B),
    }
    vals, ses = {}, {}
    for name, arr in cols.items():
        vals[name], ses[name] = _mean_se(arr)
    return PerfMeasures(**vals, mc_se=ses)
