"""Binary and uniform population-CART processes.

Along the root-to-leaf path of a population-CART tree grown on the sparse
linear model, the only information that matters is which coordinates were
split (binary features) or how many times each coordinate was split (uniform
features). These are Markov chains driven by feature subsampling (Type I
randomness) and random tie-breaking (Type II randomness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import FeatureKind, ModelSpec

# relative tolerance under which two split scores count as tied
TIE_RTOL = 2.0 ** -40


def subsample_size(d: int, gamma: float) -> int:
    """ceil(gamma * d), robust to float noise such as 0.3 * 100 = 30.000000000000004."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    x = gamma * d
    r = round(x)
    k = int(r) if abs(x - r) <= 1e-9 * max(1.0, x) else math.ceil(x)
    return min(max(k, 1), d)


@dataclass(frozen=True)
class BinaryState:
    indicator: np.ndarray  # I_l, 1 = coordinate split by depth l
    depth: int

    @property
    def n_splits(self) -> int:
        return int(self.indicator.sum())


@dataclass(frozen=True)
class UniformState:
    counts: np.ndarray  # J_l, number of splits per coordinate
    depth: int


@dataclass(frozen=True)
class BinaryCell:
    """Subcube of {0,1}^d with some coordinates pinned."""

    d: int
    fixed: dict

    @property
    def probability(self) -> float:
        return 2.0 ** -len(self.fixed)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return all(x[j] == v for j, v in self.fixed.items())


@dataclass(frozen=True)
class UniformCell:
    """Product of half-open dyadic intervals (lower_j, upper_j]."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def probability(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((self.lower < x) & (x <= self.upper)))


def _check_kind(spec: ModelSpec, kind: FeatureKind):
    if spec.feature_kind is not kind:
        raise ValueError(f"expected a {kind.value} model spec, got {spec.feature_kind.value}")


def _check_depth(l):
    if int(l) != l or l < 0:
        raise ValueError(f"depth must be a nonnegative integer, got {l}")
    return int(l)


def _subsample_mask(size, d, k, rng):
    if k == d:
        return np.ones((size, d), dtype=bool)
    keys = rng.random((size, d))
    idx = np.argpartition(keys, k - 1, axis=1)[:, :k]
    mask = np.zeros((size, d), dtype=bool)
    np.put_along_axis(mask, idx, True, axis=1)
    return mask


def _pick_argmax(score, eligible, rng):
    """Uniform random choice among the eligible maximizers of each row."""
    masked = np.where(eligible, score, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    ties = eligible & (masked >= top - TIE_RTOL * np.abs(top))
    u = rng.random(score.shape)
    return np.argmax(np.where(ties, u, -1.0), axis=1)


def sample_binary_batch(beta_sq, k: int, l: int, size: int, rng) -> np.ndarray:
    """`size` independent draws of I_l as an int8 array of shape (size, d)."""
    beta_sq = np.asarray(beta_sq, dtype=float)
    d = beta_sq.shape[0]
    if l >= k:
        raise ValueError(f"binary process needs depth l < ceil(gamma d) = {k}, got l={l}")
    ind = np.zeros((size, d), dtype=np.int8)
    rows = np.arange(size)
    for _ in range(l):
        eligible = _subsample_mask(size, d, k, rng) & (ind == 0)
        # l < k guarantees at least one unsplit coordinate in every subsample
        j = _pick_argmax(np.broadcast_to(beta_sq, (size, d)), eligible, rng)
        ind[rows, j] = 1
    return ind


def sample_uniform_batch(beta_sq, k: int, l: int, size: int, rng) -> np.ndarray:
    """`size` independent draws of J_l as an int64 array of shape (size, d)."""
    beta_sq = np.asarray(beta_sq, dtype=float)
    d = beta_sq.shape[0]
    counts = np.zeros((size, d), dtype=np.int64)
    rows = np.arange(size)
    for _ in range(l):
        eligible = _subsample_mask(size, d, k, rng)
        # impurity decrement beta_j^2 |t_j|^2 / 12, common factor dropped
        score = np.ldexp(beta_sq, -2 * counts)
        j = _pick_argmax(score, eligible, rng)
        counts[rows, j] += 1
    return counts


def sample_binary_process(spec: ModelSpec, gamma: float, l: int, rng) -> BinaryState:
    _check_kind(spec, FeatureKind.BINARY)
    l = _check_depth(l)
    k = subsample_size(spec.d, gamma)
    ind = sample_binary_batch(spec.beta_sq, k, l, 1, rng)[0]
    return BinaryState(indicator=ind, depth=l)


def sample_uniform_process(spec: ModelSpec, gamma: float, l: int, rng) -> UniformState:
    _check_kind(spec, FeatureKind.UNIFORM)
    l = _check_depth(l)
    k = subsample_size(spec.d, gamma)
    counts = sample_uniform_batch(spec.beta_sq, k, l, 1, rng)[0]
    return UniformState(counts=counts, depth=l)


def sample_process_batch(spec: ModelSpec, gamma: float, l: int, size: int, rng) -> np.ndarray:
    """Dispatch on the spec's feature kind."""
    l = _check_depth(l)
    k = subsample_size(spec.d, gamma)
    if spec.feature_kind is FeatureKind.BINARY:
        return sample_binary_batch(spec.beta_sq, k, l, size, rng)
    return sample_uniform_batch(spec.beta_sq, k, l, size, rng)


def subsample_avoid_prob(d: int, gamma: float, i: int) -> float:
    """q_i: probability a random ceil(gamma d)-subset misses i given features.

    C(d-i, k) / C(d, k), evaluated as a telescoping product.
    """
    k = subsample_size(d, gamma)
    if int(i) != i or i < 0:
        raise ValueError(f"i must be a nonnegative integer, got {i}")
    if k > d - i:
        return 0.0
    out = 1.0
    for m in range(k):
        out *= 1.0 - i / (d - m)
    return out


def w_function(d: int, gamma: float, x: float) -> float:
    """W_{gamma,d}(x) = (1 - x/d) ... (1 - x/(d - ceil(gamma d) + 1))."""
    k = subsample_size(d, gamma)
    if not 0.0 <= x <= d - k + 1:
        raise ValueError(f"x must lie in [0, {d - k + 1}], got {x}")
    out = 1.0
    for m in range(k):
        out *= 1.0 - x / (d - m)
    return out


def terminal_cell_uniform(x0, state: UniformState) -> UniformCell:
    x0 = np.asarray(x0, dtype=float)
    counts = np.asarray(state.counts)
    if x0.shape != counts.shape:
        raise ValueError("x0 and state have different dimensions")
    if np.any((x0 <= 0.0) | (x0 >= 1.0)):
        raise ValueError("x0 must lie strictly inside (0, 1)^d")
    k = np.ceil(np.ldexp(x0, counts))
    return UniformCell(lower=np.ldexp(k - 1.0, -counts), upper=np.ldexp(k, -counts))


def terminal_cell_binary(x0, state: BinaryState) -> BinaryCell:
    x0 = np.asarray(x0)
    ind = np.asarray(state.indicator)
    if x0.shape != ind.shape:
        raise ValueError("x0 and state have different dimensions")
    fixed = {int(j): int(x0[j]) for j in np.flatnonzero(ind)}
    return BinaryCell(d=ind.shape[0], fixed=fixed)


# ---------------------------------------------------------------------------
# exact distribution of the chain (test oracle for small d)


def _group_ties(values):
    """Partition candidate indices into tie classes, highest score first."""
    order = sorted(values, key=lambda jv: -jv[1])
    groups = []
    for j, v in order:
        if groups and abs(groups[-1][1] - v) <= TIE_RTOL * abs(groups[-1][1]):
            groups[-1][0].append(j)
        else:
            groups.append(([j], v))
    return [g for g, _ in groups]


def _choice_probs(d, k, candidates_by_score):
    """P(next split = j) for a uniformly random k-subset.

    Candidate j is chosen iff it is subsampled, no higher-scoring candidate is
    subsampled, and it wins the uniform tie-break among the `t` other equal
    candidates that were subsampled.
    """
    total = math.comb(d, k)
    probs = {}
    higher = 0
    for group in candidates_by_score:
        e = len(group) - 1
        rest = d - higher - e - 1
        p = 0.0
        for t in range(0, min(e, k - 1) + 1):
            p += math.comb(e, t) * math.comb(rest, k - 1 - t) / (t + 1)
        p /= total
        for j in group:
            probs[j] = p
        higher += len(group)
    return probs


def process_distribution(spec: ModelSpec, gamma: float, l: int, max_d: int = 12):
    """Exact law of I_l (binary) or J_l (uniform).

    Returns ``(states, probs)`` with states of shape (m, d). Intended for small
    d as an oracle for the samplers.
    """
    if spec.d > max_d:
        raise ValueError(f"exact enumeration limited to d <= {max_d}")
    l = _check_depth(l)
    d = spec.d
    k = subsample_size(d, gamma)
    beta_sq = spec.beta_sq
    binary = spec.feature_kind is FeatureKind.BINARY
    if binary and l >= k:
        raise ValueError(f"binary process needs depth l < {k}")
    dist = {tuple([0] * d): 1.0}
    for _ in range(l):
        new = {}
        for state, pr in dist.items():
            if binary:
                cands = [(j, beta_sq[j]) for j in range(d) if state[j] == 0]
            else:
                cands = [(j, math.ldexp(beta_sq[j], -2 * state[j])) for j in range(d)]
            for j, pj in _choice_probs(d, k, _group_ties(cands)).items():
                if pj == 0.0:
                    continue
                nxt = list(state)
                nxt[j] += 1
                nxt = tuple(nxt)
                new[nxt] = new.get(nxt, 0.0) + pr * pj
        dist = new
    states = np.array(list(dist.keys()), dtype=np.int64).reshape(-1, d)
    probs = np.array(list(dist.values()))
    return states, probs
