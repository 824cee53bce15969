"""Empirical GMSE of population-CART trees and forests on synthetic data.

A tree is one draw of the CART process, which fixes the split coordinates and
their dyadic depths for every root-to-leaf path. Its partition is therefore a
product of per-coordinate dyadic grids, and a cell id is the mixed-radix
number formed by each coordinate's interval index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cart_process import sample_process_batch
from .ensemble_core import DiscretePartition, DiscreteSpace
from .model import FeatureKind, ModelSpec, generate_dataset, regression_mean, sample_features
from .seeding import derive_seed, make_rng
from .theory import mse_terms

REL_ERR_FLOOR = 1e-12
# seed index reserved for the matched theory run
_THEORY_STREAM = 0xFFFFFFFF


@dataclass(frozen=True)
class CartPartition:
    """Partition induced by one CART process draw.

    Attributes:
        kind: Feature kind of the model.
        coords: Coordinates split at least once.
        bits: Number of splits along each entry of `coords`.
    """

    kind: FeatureKind
    coords: np.ndarray
    bits: np.ndarray

    @property
    def depth(self) -> int:
        return int(self.bits.sum())

    @property
    def n_cells(self) -> int:
        return 1 << self.depth

    @property
    def cell_probability(self) -> float:
        return 2.0 ** -self.depth

    def cell_ids(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _codes(self.kind, x, self.coords[None, :], self.bits[None, :])[:, 0]

    def to_discrete(self, space: DiscreteSpace) -> DiscretePartition:
        """Materialize on a discrete space (binary features)."""
        return DiscretePartition(space, self.cell_ids(space.atoms))


def _codes(kind, x, coords, bits):
    """Cell ids of each row of x under each of B trees; shape (n, B).

    coords and bits have shape (B, L); padding entries carry zero bits.
    """
    vals = x[:, coords]  # (n, B, L)
    if kind is FeatureKind.BINARY:
        digit = vals.astype(np.int64) * (bits > 0)
    else:
        digit = np.ceil(np.ldexp(vals, bits)).astype(np.int64) - 1
    shift = np.concatenate([np.zeros((bits.shape[0], 1), dtype=np.int64),
                            np.cumsum(bits, axis=1)[:, :-1]], axis=1)
    return (digit << shift).sum(axis=2)


def _compact(states):
    """Per-tree (coords, bits) arrays padded to the largest number of split coordinates."""
    B = states.shape[0]
    width = max(1, int((states > 0).sum(axis=1).max()))
    coords = np.zeros((B, width), dtype=np.int64)
    bits = np.zeros((B, width), dtype=np.int64)
    for b in range(B):
        nz = np.flatnonzero(states[b])
        coords[b, : nz.shape[0]] = nz
        bits[b, : nz.shape[0]] = states[b, nz]
    return coords, bits


def fit_population_cart_partition(spec: ModelSpec, gamma: float, l: int, rng) -> CartPartition:
    """Draw a CART process and return the partition it induces."""
    state = sample_process_batch(spec, gamma, l, 1, make_rng(rng))[0].astype(np.int64)
    coords, bits = _compact(state[None, :])
    keep = bits[0] > 0
    return CartPartition(spec.feature_kind, coords[0][keep], bits[0][keep])


def forest_predict(kind, coords, bits, x_train, y_train, x_test) -> np.ndarray:
    """Per-tree predictions at the test points; shape (n_test, B)."""
    B = coords.shape[0]
    depth = int(bits.sum(axis=1).max())
    n_cells = 1 << depth
    offset = np.arange(B, dtype=np.int64) * n_cells
    train = (_codes(kind, x_train, coords, bits) + offset).ravel()
    sums = np.bincount(train, weights=np.repeat(y_train, B), minlength=B * n_cells)
    counts = np.bincount(train, minlength=B * n_cells)
    # 0/0 = 0 for cells without training points
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return means[_codes(kind, x_test, coords, bits) + offset]


@dataclass(frozen=True)
class EmpiricalReport:
    mse_tree_empirical: float
    mse_forest_empirical: float
    mse_tree_theory: float
    mse_forest_theory: float
    rel_err_tree: float
    rel_err_forest: float
    se_tree_empirical: float
    se_forest_empirical: float
    se_tree_theory: float
    se_forest_theory: float
    remainder_bound: float
    spec: ModelSpec
    gamma: float
    l: int
    B: int
    n: int
    reps: int
    seed: int


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2 or np.all(x == x[0]):
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.shape[0]))


def empirical_mse(spec: ModelSpec, gamma: float, l: int, B: int, n: int, n_test: int = 256,
                  mc_reps: int = 200, seed: int = 0, theory_reps: int | None = None
                  ) -> EmpiricalReport:
    """Empirical tree and forest GMSE next to the leading-term theory.

    Each replication draws a fresh training sample, B independent trees that
    share it, and fresh test points. The tree MSE averages the B individual
    tree errors; the forest MSE is the error of their average.

    Args:
        spec: Model specification; its feature kind selects the CART process.
        gamma: Feature subsample rate.
        l: Tree depth.
        B: Number of trees in the forest.
        n: Training sample size.
        n_test: Test points per replication.
        mc_reps: Replications.
        seed: Master seed; replication r uses derive_seed(seed, r).
        theory_reps: Process pairs for the theory columns (default mc_reps).

    Returns:
        EmpiricalReport.
    """
    if B < 1 or n < 1 or n_test < 1 or mc_reps < 1:
        raise ValueError("B, n, n_test and mc_reps must be positive")
    if 2 ** l > n / 8:
        warnings.warn(f"2^l = {2 ** l} is not small compared with n = {n}", stacklevel=2)
    tree_r, forest_r = np.empty(mc_reps), np.empty(mc_reps)
    for r in range(mc_reps):
        rng = np.random.default_rng(derive_seed(seed, r))
        data = generate_dataset(spec, n, rng)
        states = sample_process_batch(spec, gamma, l, B, rng).astype(np.int64)
        coords, bits = _compact(states)
        x_test = sample_features(spec, n_test, rng)
        mu = regression_mean(spec, x_test)
        pred = forest_predict(spec.feature_kind, coords, bits, data.x, data.y, x_test)
        tree_r[r] = ((pred - mu[:, None]) ** 2).mean()
        forest_r[r] = ((pred.mean(axis=1) - mu) ** 2).mean()
    tree, tree_se = _mean_se(tree_r)
    forest, forest_se = _mean_se(forest_r)
    t_reps = theory_reps or mc_reps
    t_seed = derive_seed(seed, _THEORY_STREAM)
    th_tree = mse_terms(spec, gamma, l, 1, n, t_reps, t_seed)
    th_forest = mse_terms(spec, gamma, l, B, n, t_reps, t_seed)
    rel = lambda emp, th: abs(emp - th) / max(th, REL_ERR_FLOOR)  # noqa: E731
    return EmpiricalReport(
        mse_tree_empirical=tree, mse_forest_empirical=forest,
        mse_tree_theory=th_tree.total_leading, mse_forest_theory=th_forest.total_leading,
        rel_err_tree=rel(tree, th_tree.total_leading),
        rel_err_forest=rel(forest, th_forest.total_leading),
        se_tree_empirical=tree_se, se_forest_empirical=forest_se,
        se_tree_theory=th_tree.mc_se["total_leading"],
        se_forest_theory=th_forest.mc_se["total_leading"],
        remainder_bound=th_tree.remainder_bound,
        spec=spec, gamma=gamma, l=int(l), B=int(B), n=int(n), reps=int(mc_reps), seed=int(seed),
    )
