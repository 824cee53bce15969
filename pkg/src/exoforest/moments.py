"""Inverse-moment expansions for binomial and multinomial cell counts.

Each evaluator returns the leading term, the second-order correction where one
is available, and the envelope shapes of the remaining error (implicit
constant 1). When n is small enough the exact expectation is filled in by full
enumeration of the binomial or multinomial law.
"""

from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import binom

MAX_BINOMIAL_N = 60
MAX_MULTINOMIAL_N = 25


@dataclass(frozen=True)
class MomentExpansion:
    """Expansion of an expected inverse moment.

    Attributes:
        leading: First-order approximation.
        second_order: Correction term; 0 when the expansion stops at first order.
        bound_shape: Envelope of ``exact - leading - second_order``.
        gap_shape: Envelope of ``exact - leading``.
        exact: Exact expectation, or None when n is too large to enumerate.
    """

    leading: float
    second_order: float
    bound_shape: float
    gap_shape: float
    exact: float | None = None

    @property
    def gap(self) -> float | None:
        return None if self.exact is None else self.exact - self.leading

    @property
    def residual(self) -> float | None:
        return None if self.exact is None else self.exact - self.leading - self.second_order


class ProductKind(str, enum.Enum):
    SAME_VAR = "same_var"
    DISJOINT = "disjoint"
    OVERLAPPING = "overlapping"


def _check_n(n, cap=None):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if cap is not None and n > cap:
        raise ValueError(f"exact enumeration limited to n <= {cap}, got {n}")
    return int(n)


def _check_prob(name, p, positive=False):
    if not 0.0 <= p <= 1.0 or (positive and p <= 0.0):
        bound = "(0, 1]" if positive else "[0, 1]"
        raise ValueError(f"{name} must lie in {bound}, got {p}")


def exact_binomial_functional(n: int, p: float, f) -> float:
    """E f(N) for N ~ Binomial(n, p), by summing over all n + 1 outcomes."""
    n = _check_n(n, MAX_BINOMIAL_N)
    _check_prob("p", p)
    k = np.arange(n + 1)
    w = binom.pmf(k, n, p)
    vals = np.array([f(int(i)) for i in k], dtype=float)
    return float(np.dot(w, vals))


@functools.lru_cache(maxsize=64)
def _compositions(n: int, k: int):
    rows = [c + (n - sum(c),) for c in itertools.product(range(n + 1), repeat=k - 1)
            if sum(c) <= n]
    counts = np.array(rows, dtype=np.int64)
    logcoef = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    counts.setflags(write=False)
    return counts, logcoef


def multinomial_outcomes(n: int, probs):
    """All count vectors of Multinomial(n, probs) with their probabilities."""
    n = _check_n(n, MAX_MULTINOMIAL_N)
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("multinomial probabilities must be nonnegative and sum to 1")
    counts, logcoef = _compositions(n, probs.shape[0])
    w = np.exp(logcoef + xlogy(counts, probs).sum(axis=1))
    return counts, w


def _ratio(num, den):
    # 0/0 = 0 convention for empty cells
    return np.divide(num, den, out=np.zeros(np.shape(num), dtype=float), where=den > 0)


def keylem1_approx(n: int, p: float) -> MomentExpansion:
    """E[1{N >= 1}/N] ~ 1/(np) for N ~ Binomial(n, p)."""
    n = _check_n(n)
    _check_prob("p", p, positive=True)
    lead = 1.0 / (n * p)
    shape = (1.0 + 1.0 / (n * p)) / (1.0 + (n - 1) * p) ** 2
    exact = None
    if n <= MAX_BINOMIAL_N:
        exact = exact_binomial_functional(n, p, lambda k: 1.0 / k if k else 0.0)
    return MomentExpansion(lead, 0.0, shape, shape, exact)


def _check_a(name, a):
    if not a >= 1.0:
        raise ValueError(f"{name} must be >= 1, got {a}")


def _check_power(name, r):
    if int(r) != r or r < 1:
        raise ValueError(f"{name} must be a positive integer, got {r}")
    return int(r)


def inverse_power_expansion(n: int, p: float, a: float = 1.0, r: int = 1) -> MomentExpansion:
    """E[(a + N)^-r] for N ~ Binomial(n, p), a >= 1."""
    n = _check_n(n)
    _check_prob("p", p)
    _check_a("a", a)
    r = _check_power("r", r)
    A = a + n * p
    v = n * p * (1.0 - p)
    lead = A ** -r
    second = r * (r + 1) * v / (2.0 * A ** (r + 2))
    exact = None
    if n <= MAX_BINOMIAL_N:
        exact = exact_binomial_functional(n, p, lambda k: (a + k) ** -r)
    return MomentExpansion(lead, second, A ** -(r + 1.5), A ** -(r + 1), exact)


def same_count_product(n: int, p: float, a: float, b: float, r: int, s: int) -> MomentExpansion:
    """E[(a + N)^-r (b + N)^-s] for one binomial count N."""
    n = _check_n(n)
    _check_prob("p", p)
    _check_a("a", a)
    _check_a("b", b)
    r = _check_power("r", r)
    s = _check_power("s", s)
    A, Bv = a + n * p, b + n * p
    v = n * p * (1.0 - p)
    lead = 1.0 / (A ** r * Bv ** s)
    second = (r * (r + 1) * v / (2.0 * A ** (r + 2) * Bv ** s)
              + s * (s + 1) * v / (2.0 * A ** r * Bv ** (s + 2))
              + r * s * v / (A ** (r + 1) * Bv ** (s + 1)))
    shape = (1.0 / (A ** (r + 1.5) * Bv ** s) + 1.0 / (A ** r * Bv ** (s + 1.5))
             + 1.0 / (A ** (r + 1) * Bv ** (s + 0.5)) + 1.0 / (A ** (r + 0.5) * Bv ** (s + 1)))
    gap_shape = 1.0 / (A ** (r + 1) * Bv ** s) + 1.0 / (A ** r * Bv ** (s + 1))
    exact = None
    if n <= MAX_BINOMIAL_N:
        exact = exact_binomial_functional(n, p, lambda k: 1.0 / ((a + k) ** r * (b + k) ** s))
    return MomentExpansion(lead, second, shape, gap_shape, exact)


def _two_count_shape(A, Bv):
    return (1.0 / (A ** 2.5 * Bv) + 1.0 / (A * Bv ** 2.5)
            + 1.0 / (A ** 2 * Bv ** 1.5) + 1.0 / (A ** 1.5 * Bv ** 2))


def disjoint_product(n: int, p1: float, p2: float, a: float = 1.0, b: float = 1.0) -> MomentExpansion:
    """E[1/((a + N1)(b + N2))] for counts of two disjoint cells."""
    n = _check_n(n)
    _check_prob("p1", p1, positive=True)
    _check_prob("p2", p2, positive=True)
    if p1 + p2 > 1.0 + 1e-12:
        raise ValueError(f"disjoint cells need p1 + p2 <= 1, got {p1 + p2}")
    _check_a("a", a)
    _check_a("b", b)
    A, Bv = a + n * p1, b + n * p2
    lead = 1.0 / (A * Bv)
    second = (n * p1 * (1 - p1) / (A ** 3 * Bv) + n * p2 * (1 - p2) / (A * Bv ** 3)
              - n * p1 * p2 / (A ** 2 * Bv ** 2))
    exact = None
    if n <= MAX_MULTINOMIAL_N:
        rest = max(0.0, 1.0 - p1 - p2)
        c, w = multinomial_outcomes(n, [p1, p2, rest])
        exact = float(np.dot(w, 1.0 / ((a + c[:, 0]) * (b + c[:, 1]))))
    return MomentExpansion(lead, second, _two_count_shape(A, Bv), lead * (1 / A + 1 / Bv), exact)


def _check_overlap(p, p2, p0):
    _check_prob("p", p, positive=True)
    _check_prob("p2", p2, positive=True)
    if not 0.0 < p0 <= min(p, p2) + 1e-12:
        raise ValueError(f"need 0 < p0 <= min(p, p2), got p0={p0}")
    if p + p2 - p0 > 1.0 + 1e-12:
        raise ValueError("p + p2 - p0 must not exceed 1")


def _overlap_outcomes(n, p, p2, p0):
    probs = [p0, max(0.0, p - p0), max(0.0, p2 - p0), max(0.0, 1.0 - p - p2 + p0)]
    c, w = multinomial_outcomes(n, probs)
    return c[:, 0], c[:, 1], c[:, 2], w


def overlapping_product(n: int, p: float, p2: float, p0: float, a: float = 1.0) -> MomentExpansion:
    """E[1/((a + N)(a + N'))] for two cells whose intersection has mass p0.

    The second-order term is the one displayed with the lemma, including its
    minus sign on n(p0 - p p2).
    """
    n = _check_n(n)
    _check_overlap(p, p2, p0)
    _check_a("a", a)
    A, Bv = a + n * p, a + n * p2
    lead = 1.0 / (A * Bv)
    displayed = (lead * (1 + (1 - p) / A) * (1 + (1 - p2) / Bv)
                 - n * (p0 - p * p2) / (A ** 2 * Bv ** 2))
    exact = None
    if n <= MAX_MULTINOMIAL_N:
        n0, n1, n2, w = _overlap_outcomes(n, p, p2, p0)
        exact = float(np.dot(w, 1.0 / ((a + n0 + n1) * (a + n0 + n2))))
    return MomentExpansion(lead, displayed - lead, _two_count_shape(A, Bv),
                           lead * (1 / A + 1 / Bv), exact)


def product_inverse_expansions(kind, **params) -> MomentExpansion:
    """Dispatch to the same-count, disjoint or overlapping product expansion."""
    kind = ProductKind(kind)
    if kind is ProductKind.SAME_VAR:
        return same_count_product(**params)
    if kind is ProductKind.DISJOINT:
        return disjoint_product(**params)
    return overlapping_product(**params)


def keylem2_terms(n: int, p: float, p2: float, p0: float,
                  alpha: float, beta: float, gamma_: float):
    """Expansions of E[N0/(N N')] and of the mixed ratio product.

    Cells P and P' have masses p and p2 and intersect in mass p0; N1 and N2
    count P minus P' and P' minus P. The second part expands
    E[(alpha N0/N + beta N1/N)(alpha N0/N' + gamma_ N2/N')].

    Returns:
        Tuple (part1, part2) of MomentExpansion; exact values are filled in by
        enumerating (N0, N1, N2) when n <= 25.
    """
    n = _check_n(n)
    _check_overlap(p, p2, p0)
    p1, q2 = p - p0, p2 - p0
    lead1 = p0 / (n * p * p2)
    inv_p = 1.0 / (1.0 + (n - 1) * p)
    inv_p2 = 1.0 / (1.0 + (n - 1) * p2)
    shape1 = lead1 * (inv_p + inv_p2)
    lead2 = ((alpha * p0 / p + beta * p1 / p) * (alpha * p0 / p2 + gamma_ * q2 / p2)
             + (alpha - beta) * (alpha - gamma_) * (p1 * q2 / (p * p2)) * lead1)
    scale = max(abs(alpha), abs(beta), abs(gamma_)) ** 2
    shape2 = scale * (shape1 + inv_p ** 1.5 + inv_p2 ** 1.5 + (1 - p) ** n + (1 - p2) ** n)
    exact1 = exact2 = None
    if n <= MAX_MULTINOMIAL_N:
        n0, n1, n2, w = _overlap_outcomes(n, p, p2, p0)
        big, big2 = n0 + n1, n0 + n2
        exact1 = float(np.dot(w, _ratio(n0, big * big2)))
        left = _ratio(alpha * n0 + beta * n1, big)
        right = _ratio(alpha * n0 + gamma_ * n2, big2)
        exact2 = float(np.dot(w, left * right))
    return (MomentExpansion(lead1, 0.0, shape1, shape1, exact1),
            MomentExpansion(lead2, 0.0, shape2, shape2, exact2))


# ---------------------------------------------------------------------------
# oracle sweep


DEFAULT_NS = (5, 10, 20, 25)
DEFAULT_PS = tuple(round(0.05 * i, 2) for i in range(1, 20))


@dataclass(frozen=True)
class LemmaRow:
    lemma: str
    n: int
    params: str
    expansion: MomentExpansion

    @property
    def ratio(self) -> float:
        """|exact - leading - second_order| / bound_shape."""
        e = self.expansion
        return abs(e.residual) / e.bound_shape

    @property
    def gap_ratio(self) -> float:
        e = self.expansion
        return abs(e.gap) / e.gap_shape


def _fmt(**kw):
    return ";".join(f"{k}={v:g}" for k, v in kw.items())


def lemma_grid(ns=DEFAULT_NS, ps=DEFAULT_PS):
    """Yield LemmaRow for every lemma and parameter combination on the grid.

    Overlapping and mixed-ratio lemmas take all (p, p2, p0) triples from `ps`
    that describe valid cells.
    """
    eps = 1e-12
    for n in ns:
        for p in ps:
            yield LemmaRow("keylem1", n, _fmt(p=p), keylem1_approx(n, p))
        for p in ps:
            for a in (1, 2, 5):
                for r in (1, 2, 3):
                    yield LemmaRow("inverse_power", n, _fmt(p=p, a=a, r=r),
                                   inverse_power_expansion(n, p, a, r))
        for p in ps:
            for a, b, r, s in itertools.product((1, 2), (1, 3), (1, 2), (1, 2)):
                yield LemmaRow("same_count_product", n, _fmt(p=p, a=a, b=b, r=r, s=s),
                               same_count_product(n, p, a, b, r, s))
        for p1, p2 in itertools.product(ps, ps):
            if p1 + p2 > 1 + eps:
                continue
            for a, b in itertools.product((1, 2), (1, 2)):
                yield LemmaRow("disjoint_product", n, _fmt(p1=p1, p2=p2, a=a, b=b),
                               disjoint_product(n, p1, p2, a, b))
        for p, p2, p0 in itertools.product(ps, ps, ps):
            if p0 > min(p, p2) + eps or p + p2 - p0 > 1 + eps:
                continue
            for a in (1, 2):
                yield LemmaRow("overlapping_product", n, _fmt(p=p, p2=p2, p0=p0, a=a),
                               overlapping_product(n, p, p2, p0, a))


def gap_sign_ok(row: LemmaRow, tol: float = 1e-12) -> bool:
    """True when the exact value is not below the leading term.

    Every swept lemma asserts exact >= leading except the first, which only
    bounds the absolute gap.
    """
    if row.lemma == "keylem1":
        return True
    return row.expansion.exact - row.expansion.leading >= -tol * max(1.0, abs(row.expansion.leading))
