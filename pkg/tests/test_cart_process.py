from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exoforest.cart_process import (
    BinaryState,
    UniformState,
    process_distribution,
    sample_binary_process,
    sample_process_batch,
    sample_uniform_process,
    subsample_avoid_prob,
    subsample_size,
    terminal_cell_binary,
    terminal_cell_uniform,
    w_function,
)
from exoforest.model import ModelSpec, named_config


class TestSubsampleSize:
    @pytest.mark.parametrize("d, gamma, k", [(100, 0.3, 30), (100, 0.1, 10), (4, 0.5, 2),
                                             (7, 0.5, 4), (5, 0.01, 1), (20, 1.0, 20)])
    def test_values(self, d, gamma, k):
        assert subsample_size(d, gamma) == k

    @pytest.mark.parametrize("gamma", [0.0, -0.1, 1.01])
    def test_out_of_range(self, gamma):
        with pytest.raises(ValueError):
            subsample_size(10, gamma)


class TestBinaryProcess:
    def test_distinct_coefficients_greedy(self, rng):
        st_ = sample_binary_process(named_config("II"), 1.0, 2, rng)
        assert set(np.flatnonzero(st_.indicator)) == {0, 1}

    def test_depth_zero(self, rng):
        st_ = sample_binary_process(named_config("I"), 0.4, 0, rng)
        assert st_.n_splits == 0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_equal_coefficients_full_depth(self, seed):
        st_ = sample_binary_process(named_config("I"), 1.0, 5, np.random.default_rng(seed))
        np.testing.assert_array_equal(np.flatnonzero(st_.indicator), np.arange(5))

    def test_depth_must_be_below_subsample(self, rng):
        with pytest.raises(ValueError):
            sample_binary_process(named_config("I"), 0.05, 5, rng)

    def test_wrong_kind(self, rng):
        with pytest.raises(ValueError):
            sample_binary_process(named_config("I", "uniform"), 1.0, 2, rng)

    @settings(max_examples=30, deadline=None)
    @given(gamma=st.sampled_from([0.1, 0.3, 0.7, 1.0]), l=st.integers(0, 9),
           seed=st.integers(0, 2 ** 32 - 1))
    def test_split_count_equals_depth(self, gamma, l, seed):
        states = sample_process_batch(named_config("II"), gamma, l, 64,
                                      np.random.default_rng(seed))
        assert set(np.unique(states)) <= {0, 1}
        np.testing.assert_array_equal(states.sum(axis=1), l)


class TestUniformProcess:
    def test_distinct_coefficients_deterministic(self, rng):
        st_ = sample_uniform_process(named_config("II", "uniform"), 1.0, 5, rng)
        np.testing.assert_array_equal(st_.counts, [1] * 5 + [0] * 95)

    def test_depth_zero(self, rng):
        st_ = sample_uniform_process(named_config("I", "uniform"), 0.5, 0, rng)
        assert not st_.counts.any()

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_second_round(self, seed):
        st_ = sample_uniform_process(named_config("I", "uniform"), 1.0, 10,
                                     np.random.default_rng(seed))
        np.testing.assert_array_equal(st_.counts, [2] * 5 + [0] * 95)

    @settings(max_examples=30, deadline=None)
    @given(gamma=st.sampled_from([0.1, 0.5, 1.0]), l=st.integers(0, 14),
           seed=st.integers(0, 2 ** 32 - 1))
    def test_counts_sum_to_depth(self, gamma, l, seed):
        states = sample_process_batch(named_config("I", "uniform"), gamma, l, 64,
                                      np.random.default_rng(seed))
        assert states.min() >= 0
        np.testing.assert_array_equal(states.sum(axis=1), l)


class TestSamplerMatchesEnumerator:
    @pytest.mark.parametrize("kind, gamma, l", [("binary", 0.5, 3), ("uniform", 0.4, 4),
                                                ("binary", 0.375, 2)])
    def test_frequencies(self, kind, gamma, l, rng):
        spec = ModelSpec(8, 3, (1.0, 1.0, 0.7), 1.0, kind)
        states, probs = process_distribution(spec, gamma, l)
        np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-12)
        draws = sample_process_batch(spec, gamma, l, 40_000, rng)
        lookup = {tuple(s): i for i, s in enumerate(states.tolist())}
        freq = np.zeros(len(probs))
        for row in draws.tolist():
            freq[lookup[tuple(row)]] += 1
        freq /= draws.shape[0]
        se = np.sqrt(probs * (1 - probs) / draws.shape[0])
        np.testing.assert_array_less(np.abs(freq - probs), 5 * se + 5e-4)

    def test_enumerator_size_cap(self):
        with pytest.raises(ValueError):
            process_distribution(named_config("I"), 1.0, 2)


class TestSubsampleAvoid:
    def test_brute_force(self):
        subsets = list(combinations(range(4), 2))
        frac = sum(0 not in s for s in subsets) / len(subsets)
        assert subsample_avoid_prob(4, 0.5, 1) == pytest.approx(frac) == pytest.approx(0.5)

    def test_trivial(self):
        assert subsample_avoid_prob(37, 0.3, 0) == 1.0
        assert subsample_avoid_prob(37, 1.0, 1) == 0.0

    def test_impossible_avoidance(self):
        assert subsample_avoid_prob(10, 0.8, 3) == 0.0

    @given(d=st.integers(2, 60), gamma=st.floats(0.01, 1.0), i=st.integers(0, 10))
    def test_matches_binomial_ratio(self, d, gamma, i):
        from math import comb
        k = subsample_size(d, gamma)
        expected = comb(d - i, k) / comb(d, k) if i <= d else 0.0
        assert subsample_avoid_prob(d, gamma, i) == pytest.approx(expected, abs=1e-12)


class TestWFunction:
    def test_values(self):
        assert w_function(4, 0.5, 1) == pytest.approx(0.5)
        assert w_function(9, 0.4, 0) == 1.0
        assert w_function(100, 1.0, 1) == 0.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            w_function(10, 0.5, 7)
        with pytest.raises(ValueError):
            w_function(10, 0.5, -0.5)

    @given(d=st.integers(2, 40), gamma=st.floats(0.05, 1.0), frac=st.floats(0, 1))
    def test_monotone_decreasing(self, d, gamma, frac):
        top = d - subsample_size(d, gamma) + 1
        x = frac * top
        assert w_function(d, gamma, x) >= w_function(d, gamma, top) - 1e-15
        assert 0.0 <= w_function(d, gamma, x) <= 1.0


class TestTerminalCells:
    def test_uniform_interior(self):
        cell = terminal_cell_uniform([0.3, 0.7], UniformState(np.array([2, 0]), 2))
        np.testing.assert_allclose(cell.lower, [0.25, 0.0])
        np.testing.assert_allclose(cell.upper, [0.5, 1.0])

    def test_uniform_boundary_half_open(self):
        cell = terminal_cell_uniform([0.5], UniformState(np.array([1]), 1))
        np.testing.assert_allclose([cell.lower[0], cell.upper[0]], [0.0, 0.5])
        assert cell.contains([0.5]) and not cell.contains([0.5000001])

    @settings(max_examples=50)
    @given(x=st.lists(st.floats(1e-6, 1 - 1e-6), min_size=3, max_size=3),
           j=st.lists(st.integers(0, 6), min_size=3, max_size=3))
    def test_uniform_contains_and_volume(self, x, j):
        cell = terminal_cell_uniform(x, UniformState(np.array(j), sum(j)))
        assert cell.contains(x)
        assert cell.probability == pytest.approx(2.0 ** -sum(j))

    def test_binary(self):
        d = 6
        full = terminal_cell_binary(np.ones(d), BinaryState(np.zeros(d, int), 0))
        assert full.probability == 1.0
        e1 = np.eye(d, dtype=int)[0]
        cell = terminal_cell_binary(np.ones(d), BinaryState(e1, 1))
        assert cell.fixed == {0: 1} and cell.probability == 0.5
        five = terminal_cell_binary(np.zeros(d), BinaryState(np.array([1] * 5 + [0]), 5))
        assert five.probability == 0.03125
        assert five.contains(np.array([0, 0, 0, 0, 0, 1]))
