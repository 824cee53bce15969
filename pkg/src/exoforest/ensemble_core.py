"""Partitioning and ensemble estimators on finite discrete feature spaces.

Every conditional moment is an exact sum over atoms. Probabilities may be
given as `fractions.Fraction`, in which case all covariance functions are
evaluated in exact rational arithmetic.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from .cart_process import sample_binary_batch, subsample_size
from .model import Dataset, FeatureKind, ModelSpec
from .seeding import make_rng
from .theory import MseBreakdown


def _is_exact(values) -> bool:
    return any(isinstance(v, Fraction) for v in values)


def _as_array(values, exact):
    if exact:
        return np.array([Fraction(v) for v in values], dtype=object)
    return np.asarray(values, dtype=float)


def _group_sum(values, labels, size):
    """Sum `values` within groups given by integer `labels`."""
    if values.dtype != object:
        return np.bincount(labels, weights=values, minlength=size)
    out = np.array([Fraction(0)] * size, dtype=object)
    for lab, v in zip(labels.tolist(), values.tolist()):
        out[lab] += v
    return out


class DiscreteSpace:
    """Product measure on a finite grid with regression mean and noise variance.

    Args:
        supports: Per-coordinate support values.
        probs: Per-coordinate probabilities, strictly positive and summing to
            one. Fractions switch on exact arithmetic.
        mu: Regression mean, as a scalar, a sequence over atoms, or a callable
            mapping the (m, d) atom matrix to m values.
        sigma_sq: Noise variance in the same forms as `mu`; must be >= 0.
    """

    def __init__(self, supports, probs, mu=0.0, sigma_sq=0.0):
        if len(supports) != len(probs) or not supports:
            raise ValueError("need one probability vector per coordinate")
        flat = [v for ps in probs for v in ps]
        self.exact = _is_exact(flat)
        self.supports = [np.asarray(s, dtype=float) for s in supports]
        self.coord_probs = [_as_array(ps, self.exact) for ps in probs]
        for j, (s, ps) in enumerate(zip(self.supports, self.coord_probs)):
            if s.shape[0] != ps.shape[0] or s.shape[0] == 0:
                raise ValueError(f"coordinate {j}: support and probabilities differ in length")
            if len(set(s.tolist())) != s.shape[0]:
                raise ValueError(f"coordinate {j}: repeated support value")
            if any(v <= 0 for v in ps):
                raise ValueError(f"coordinate {j}: probabilities must be positive")
            total = sum(ps.tolist())
            if (total != 1) if self.exact else abs(total - 1.0) > 1e-12:
                raise ValueError(f"coordinate {j}: probabilities sum to {total}, not 1")
        self.atoms = np.array(list(itertools.product(*[s.tolist() for s in self.supports])),
                              dtype=float)
        idx = np.array(list(itertools.product(*[range(s.shape[0]) for s in self.supports])))
        p = self.coord_probs[0][idx[:, 0]]
        for j in range(1, self.d):
            p = p * self.coord_probs[j][idx[:, j]]
        self.p = p
        self.p_float = np.asarray(p, dtype=float)
        self.mu = self._evaluate(mu, "mu")
        self.sigma_sq = self._evaluate(sigma_sq, "sigma_sq")
        if any(v < 0 for v in self.sigma_sq):
            raise ValueError("sigma_sq must be nonnegative")
        self._index = {tuple(a): i for i, a in enumerate(self.atoms.tolist())}

    def _evaluate(self, f, name):
        if callable(f):
            vals = f(self.atoms)
        elif np.ndim(f) == 0:
            vals = [f] * self.m
        else:
            vals = f
        vals = list(np.asarray(vals, dtype=object).ravel()) if np.ndim(vals) else [vals] * self.m
        if len(vals) != self.m:
            raise ValueError(f"{name} has {len(vals)} values for {self.m} atoms")
        return _as_array(vals, self.exact) if self.exact else np.asarray(vals, dtype=float)

    @property
    def d(self) -> int:
        return len(self.supports)

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def mu_float(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    @property
    def sigma_sq_float(self) -> np.ndarray:
        return np.asarray(self.sigma_sq, dtype=float)

    def index_of(self, x) -> int:
        key = tuple(np.asarray(x, dtype=float).tolist())
        try:
            return self._index[key]
        except KeyError:
            raise ValueError(f"point {key} is not an atom of the space") from None

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Atom indices and responses of an i.i.d. sample of size n."""
        idx = rng.choice(self.m, size=n, p=self.p_float)
        y = self.mu_float[idx] + np.sqrt(self.sigma_sq_float[idx]) * rng.standard_normal(n)
        return idx, y

    def dataset(self, n: int, rng) -> Dataset:
        idx, y = self.sample(n, rng)
        return Dataset(x=self.atoms[idx], y=y)


class DiscretePartition:
    """Partition of the atoms of a DiscreteSpace, stored as an atom-to-cell label array."""

    def __init__(self, space: DiscreteSpace, labels):
        labels = np.asarray(labels)
        if labels.shape != (space.m,):
            raise ValueError(f"expected {space.m} labels, got shape {labels.shape}")
        _, inv = np.unique(labels, return_inverse=True)
        self.space = space
        self.labels = inv.astype(np.int64)
        self.n_cells = int(self.labels.max()) + 1
        self.cell_probs = _group_sum(space.p, self.labels, self.n_cells)

    @classmethod
    def from_cells(cls, space: DiscreteSpace, cells) -> "DiscretePartition":
        """Build from explicit lists of atom indices; cells must be disjoint and cover."""
        labels = np.full(space.m, -1, dtype=np.int64)
        for c, atoms in enumerate(cells):
            atoms = list(atoms)
            if not atoms:
                raise ValueError(f"cell {c} is empty")
            if np.any(labels[atoms] >= 0):
                raise ValueError(f"cell {c} overlaps an earlier cell")
            labels[atoms] = c
        if np.any(labels < 0):
            raise ValueError("cells do not cover the space")
        return cls(space, labels)

    def __len__(self) -> int:
        return self.n_cells

    def cell_of(self, x) -> int:
        return int(self.labels[self.space.index_of(x)])

    def cells(self):
        return [np.flatnonzero(self.labels == c) for c in range(self.n_cells)]

    def conditional_mean(self, values) -> np.ndarray:
        """E(values | cell), one entry per cell."""
        return _group_sum(self.space.p * values, self.labels, self.n_cells) / self.cell_probs

    def projection(self) -> np.ndarray:
        """mu_P at every atom: the mean of mu over the atom's cell."""
        return self.conditional_mean(self.space.mu)[self.labels]


def _check_same_space(p, p2, space=None):
    if p.space is not p2.space or (space is not None and space is not p.space):
        raise ValueError("partitions live on different spaces")


def _joint(p, p2):
    """Nonempty cell pairs (i, j) with P(P_i & P'_j), and each atom's pair index."""
    key = p.labels * p2.n_cells + p2.labels
    uniq, inv = np.unique(key, return_inverse=True)
    joint = _group_sum(p.space.p, inv, uniq.shape[0])
    return uniq // p2.n_cells, uniq % p2.n_cells, joint, inv


def _pair_weight(p, p2):
    i, j, joint, inv = _joint(p, p2)
    return joint / (p.cell_probs[i] * p2.cell_probs[j]), joint, inv


def cross_partition_cov(p: DiscretePartition, p2: DiscretePartition):
    """sum_ij P(P_i & P'_j)^2 / (P(P_i) P(P'_j)); equals |P| when p2 is p."""
    _check_same_space(p, p2)
    w, joint, _ = _pair_weight(p, p2)
    return (w * joint).sum()


def signal_cov(p: DiscretePartition, p2: DiscretePartition, space: DiscreteSpace = None):
    """Signal-induced cross-partition covariance Cov_mu(P, P')."""
    _check_same_space(p, p2, space)
    space = p.space
    w, _, inv = _pair_weight(p, p2)
    dev = (space.mu - p.conditional_mean(space.mu)[p.labels]) \
        * (space.mu - p2.conditional_mean(space.mu)[p2.labels])
    inner = _group_sum(space.p * dev, inv, w.shape[0])
    return (inner * w).sum()


def error_cov(p: DiscretePartition, p2: DiscretePartition, space: DiscreteSpace = None):
    """Noise-induced cross-partition covariance Cov_sigma2(P, P')."""
    _check_same_space(p, p2, space)
    space = p.space
    w, _, inv = _pair_weight(p, p2)
    inner = _group_sum(space.p * space.sigma_sq, inv, w.shape[0])
    return (inner * w).sum()


def signal_var(p: DiscretePartition, space: DiscreteSpace = None):
    """sum_i Var(mu | P_i)."""
    return signal_cov(p, p, space)


def error_var(p: DiscretePartition, space: DiscreteSpace = None):
    """sum_i E(sigma^2 | P_i)."""
    return error_cov(p, p, space)


@dataclass(frozen=True)
class CovarianceReport:
    cov_plain: object
    cov_mu: object
    cov_sigma: object
    var_left: object
    var_right: object
    var_mu_left: object
    var_mu_right: object
    var_sigma_left: object
    var_sigma_right: object
    corr: float

    @staticmethod
    def _below_geometric_mean(c, v1, v2) -> bool:
        # c <= sqrt(v1 v2) without taking a square root
        return c <= 0 or c * c <= v1 * v2

    def cauchy_schwarz_holds(self) -> bool:
        return (0 <= self.cov_plain
                and self._below_geometric_mean(self.cov_plain, self.var_left, self.var_right)
                and self._below_geometric_mean(self.cov_mu, self.var_mu_left, self.var_mu_right)
                and self._below_geometric_mean(self.cov_sigma, self.var_sigma_left,
                                               self.var_sigma_right))


def covariance_report(p: DiscretePartition, p2: DiscretePartition) -> CovarianceReport:
    cov = cross_partition_cov(p, p2)
    v1, v2 = cross_partition_cov(p, p), cross_partition_cov(p2, p2)
    return CovarianceReport(
        cov_plain=cov, cov_mu=signal_cov(p, p2), cov_sigma=error_cov(p, p2),
        var_left=v1, var_right=v2,
        var_mu_left=signal_var(p), var_mu_right=signal_var(p2),
        var_sigma_left=error_var(p), var_sigma_right=error_var(p2),
        corr=float(cov) / float(np.sqrt(float(v1) * float(v2))),
    )


class LocalKind(str, enum.Enum):
    MU = "mu"
    SIGMA = "sigma"
    PLAIN = "plain"


def local_cov(p: DiscretePartition, p2: DiscretePartition, x0, space: DiscreteSpace = None,
              kind=LocalKind.PLAIN):
    """Local cross-partition covariance at x0.

    With A and A' the cells containing x0, the value is
    E(h | A & A') P(A & A') / (P(A) P(A')) where h is
    (mu - E(mu|A))(mu - E(mu|A')), sigma^2, or 1.
    """
    _check_same_space(p, p2, space)
    space = p.space
    kind = LocalKind(kind)
    a0 = space.index_of(x0)
    i0, j0 = p.labels[a0], p2.labels[a0]
    in_a, in_b = p.labels == i0, p2.labels == j0
    both = in_a & in_b
    pa, pb = space.p[in_a].sum(), space.p[in_b].sum()
    if kind is LocalKind.PLAIN:
        h = np.ones(int(both.sum()), dtype=space.p.dtype)
        if space.exact:
            h = np.array([Fraction(1)] * int(both.sum()), dtype=object)
    elif kind is LocalKind.SIGMA:
        h = space.sigma_sq[both]
    else:
        mu = space.mu
        ma = (space.p[in_a] * mu[in_a]).sum() / pa
        mb = (space.p[in_b] * mu[in_b]).sum() / pb
        h = (mu[both] - ma) * (mu[both] - mb)
    # E(h | A & A') P(A & A') = sum over the intersection of p_a h_a
    return (space.p[both] * h).sum() / (pa * pb)


# ---------------------------------------------------------------------------
# estimators


def _cell_means(labels_of_sample, y, n_cells):
    sums = np.bincount(labels_of_sample, weights=y, minlength=n_cells)
    counts = np.bincount(labels_of_sample, minlength=n_cells)
    # 0/0 = 0 for cells without training points
    return np.divide(sums, counts, out=np.zeros(n_cells), where=counts > 0)


def _sample_indices(space, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.array([space.index_of(row) for row in x], dtype=np.int64)


def partition_estimate(dataset: Dataset, partition: DiscretePartition, x) -> float:
    """Mean response over training points sharing x's cell; 0 for an empty cell."""
    space = partition.space
    idx = _sample_indices(space, dataset.x)
    means = _cell_means(partition.labels[idx], np.asarray(dataset.y, dtype=float),
                        partition.n_cells)
    return float(means[partition.cell_of(x)])


def ensemble_estimate(dataset: Dataset, partitions, x) -> float:
    """Average of the partitioning estimates over the B partitions."""
    partitions = list(partitions)
    if not partitions:
        raise ValueError("ensemble needs at least one partition")
    return float(np.mean([partition_estimate(dataset, q, x) for q in partitions]))


def _predict_all(parts, idx, y):
    pred = np.zeros(parts[0].space.m)
    for q in parts:
        pred += _cell_means(q.labels[idx], y, q.n_cells)[q.labels]
    return pred / len(parts)


# ---------------------------------------------------------------------------
# partitioning rules

PartitionRule = Callable[[DiscreteSpace, np.random.Generator], DiscretePartition]


def binary_linear_space(spec: ModelSpec) -> DiscreteSpace:
    """The binary sparse linear model as a discrete space on {0,1}^d."""
    if spec.feature_kind is not FeatureKind.BINARY:
        raise ValueError("binary_linear_space requires a binary model spec")
    if spec.d > 16:
        raise ValueError("binary embedding enumerates 2^d atoms; d must be <= 16")
    beta = spec.beta_full
    return DiscreteSpace([[0.0, 1.0]] * spec.d, [[0.5, 0.5]] * spec.d,
                         mu=lambda a: a @ beta, sigma_sq=spec.sigma0_sq)


def binary_cart_rule(spec: ModelSpec, gamma: float, l: int) -> PartitionRule:
    """Population binary-CART partitions of depth l, one process draw per partition."""
    k = subsample_size(spec.d, gamma)
    if l >= k:
        raise ValueError(f"binary process needs depth l < {k}")
    bsq = spec.beta_sq

    def rule(space: DiscreteSpace, rng) -> DiscretePartition:
        ind = sample_binary_batch(bsq, k, l, 1, rng)[0]
        cols = np.flatnonzero(ind)
        labels = space.atoms[:, cols].astype(np.int64) @ (1 << np.arange(cols.shape[0]))
        return DiscretePartition(space, labels)

    return rule


def single_cell_rule(space: DiscreteSpace, rng=None) -> DiscretePartition:
    return DiscretePartition(space, np.zeros(space.m, dtype=np.int64))


# ---------------------------------------------------------------------------
# GMSE and leading terms


class GmseResult(NamedTuple):
    bias_sq: float
    variance: float
    total: float
    se: float


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2 or np.all(x == x[0]):
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.shape[0]))


def gmse_decompose(space: DiscreteSpace, rule: PartitionRule, n: int, B: int,
                   mc_reps: int, seed=0, inner_reps: int = 64) -> GmseResult:
    """Bias-variance split of the ensemble GMSE with the training sample integrated first.

    Each outer replication draws B partitions. The inner loop draws
    `inner_reps` training samples to estimate the data-averaged prediction and
    its variance at every atom; the test point is integrated exactly over the
    atoms. The squared-bias term subtracts inner-variance / inner_reps, so that
    bias_sq + variance equals the direct GMSE estimate on the same draws.
    """
    if B < 1 or n < 1 or mc_reps < 1 or inner_reps < 2:
        raise ValueError("need B, n, mc_reps >= 1 and inner_reps >= 2")
    rng = make_rng(seed)
    mu = space.mu_float
    w = space.p_float
    bias_r, var_r = np.empty(mc_reps), np.empty(mc_reps)
    for r in range(mc_reps):
        parts = [rule(space, rng) for _ in range(B)]
        preds = np.empty((inner_reps, space.m))
        for t in range(inner_reps):
            idx, y = space.sample(n, rng)
            preds[t] = _predict_all(parts, idx, y)
        mean = preds.mean(axis=0)
        s2 = preds.var(axis=0, ddof=1)
        bias_r[r] = w @ ((mean - mu) ** 2 - s2 / inner_reps)
        var_r[r] = w @ s2
    bias, _ = _mean_se(bias_r)
    var, _ = _mean_se(var_r)
    total, se = _mean_se(bias_r + var_r)
    return GmseResult(bias, var, total, se)


def direct_gmse(space: DiscreteSpace, rule: PartitionRule, n: int, B: int, mc_reps: int,
                seed=0) -> GmseResult:
    """Plain Monte-Carlo GMSE: one sample and B partitions per replication."""
    rng = make_rng(seed)
    mu, w = space.mu_float, space.p_float
    err = np.empty(mc_reps)
    for r in range(mc_reps):
        parts = [rule(space, rng) for _ in range(B)]
        idx, y = space.sample(n, rng)
        err[r] = w @ (_predict_all(parts, idx, y) - mu) ** 2
    total, se = _mean_se(err)
    return GmseResult(float("nan"), float("nan"), total, se)


def _remainder_terms(q: DiscretePartition, n: int, B: int) -> float:
    pc = np.asarray(q.cell_probs, dtype=float)
    return float(((1 - pc) ** n * pc).sum()
                 + (B - 1) / B * (1.0 / np.sqrt(1 + (n - 1) * pc)).sum() / n
                 + (1.0 / (1 + (n - 1) * pc)).sum() / n)


def theorem42_leading_terms(space: DiscreteSpace, rule: PartitionRule, n: int, B: int,
                            mc_reps: int, seed=0) -> MseBreakdown:
    """Leading terms of the ensemble GMSE expansion over i.i.d. partition pairs.

    The ensemble squared bias E_X[(mu - E_Theta mu_P)^2] is estimated without
    bias by sum_a p_a (mu - mu_P)(mu - mu_P') on each independent pair. The
    remainder reporter uses constant 1. `diagnostics` carries E|P|/n.
    """
    if B < 1 or n < 1 or mc_reps < 1:
        raise ValueError("need B, n, mc_reps >= 1")
    rng = make_rng(seed)
    mu, w = space.mu_float, space.p_float
    ens = np.empty(mc_reps)
    sgl = np.empty(mc_reps)
    cov = np.empty(mc_reps)
    var = np.empty(mc_reps)
    rem = np.empty(mc_reps)
    cells = np.empty(mc_reps)
    for r in range(mc_reps):
        p, p2 = rule(space, rng), rule(space, rng)
        d1, d2 = mu - np.asarray(p.projection(), float), mu - np.asarray(p2.projection(), float)
        ens[r] = w @ (d1 * d2)
        sgl[r] = w @ (d1 * d1)
        cov[r] = float(signal_cov(p, p2) + error_cov(p, p2)) / n
        var[r] = float(signal_var(p) + error_var(p)) / n
        rem[r] = _remainder_terms(p, n, B)
        cells[r] = p.n_cells
    scale = (np.abs(mu).max() + space.sigma_sq_float.max()) ** 2
    total_r = (ens + cov) + ((sgl + var) - (ens + cov)) / B
    vals, ses = {}, {}
    for name, arr in (("ensemble_sq_bias", ens), ("single_sq_bias", sgl),
                      ("cross_tree_cov", cov), ("single_tree_var", var),
                      ("total_leading", total_r)):
        vals[name], ses[name] = _mean_se(arr)
    return MseBreakdown(remainder_bound=float(scale * rem.mean()), mc_se=ses, reps=mc_reps,
                        diagnostics={"mean_cells_over_n": float(cells.mean() / n)}, **vals)


@dataclass(frozen=True)
class ConsistencyRow:
    n: int
    tree_projection_error: float
    tree_cells_over_n: float
    forest_projection_error: float
    forest_cov_over_n: float
    min_expected_cell_count: float
    se: dict = field(default_factory=dict)


def consistency_diagnostic(space_sequence, rule_sequence, n_grid, mc_reps: int = 200,
                           seed=0) -> list[ConsistencyRow]:
    """Finite-n surrogates of the tree and forest consistency conditions.

    For each n: E[(mu - mu_P)^2] and E|P|/n for a single partition, and
    E[(mu - mu_P)(mu - mu_P')] and E[Cov(P, P')]/n for independent pairs. The
    forest bias surrogate estimates E[(mu - E_Theta mu_P)^2] without bias.
    """
    rows = []
    rng = make_rng(seed)
    for space, rule, n in zip(space_sequence, rule_sequence, n_grid):
        mu, w = space.mu_float, space.p_float
        tb, tc, fb, fc, mc = (np.empty(mc_reps) for _ in range(5))
        for r in range(mc_reps):
            p, p2 = rule(space, rng), rule(space, rng)
            d1 = mu - np.asarray(p.projection(), float)
            d2 = mu - np.asarray(p2.projection(), float)
            tb[r] = w @ (d1 * d1)
            tc[r] = p.n_cells / n
            fb[r] = w @ (d1 * d2)
            fc[r] = float(cross_partition_cov(p, p2)) / n
            mc[r] = n * float(np.min(np.asarray(p.cell_probs, dtype=float)))
        ses = {}
        means = []
        for name, arr in (("tree_projection_error", tb), ("tree_cells_over_n", tc),
                          ("forest_projection_error", fb), ("forest_cov_over_n", fc)):
            m, s = _mean_se(arr)
            means.append(m)
            ses[name] = s
        rows.append(ConsistencyRow(int(n), *means, float(mc.min()), ses))
    return rows
