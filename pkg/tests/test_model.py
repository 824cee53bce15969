import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exoforest.model import (
    FeatureKind,
    ModelSpec,
    generate_dataset,
    named_config,
    regression_mean,
    sample_features,
)


class TestModelSpec:
    def test_named_configs(self):
        one, two = named_config("I"), named_config("II", "uniform")
        assert (one.d, one.s, one.sigma0_sq) == (100, 5, 1.69)
        assert one.beta == (0.5,) * 5
        assert two.beta == (2.0, 1.8, 1.6, 1.4, 1.2)
        assert two.feature_kind is FeatureKind.UNIFORM

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            named_config("III")

    @pytest.mark.parametrize("kwargs", [
        dict(d=0, s=0, beta=(), sigma0_sq=1.0),
        dict(d=3, s=4, beta=(1, 1, 1, 1), sigma0_sq=1.0),
        dict(d=3, s=2, beta=(1.0,), sigma0_sq=1.0),
        dict(d=3, s=1, beta=(0.0,), sigma0_sq=1.0),
        dict(d=3, s=1, beta=(1.0,), sigma0_sq=-1.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelSpec(**kwargs)

    def test_beta_full_padding(self):
        spec = ModelSpec(6, 2, (3.0, -1.0), 0.0)
        np.testing.assert_array_equal(spec.beta_full, [3, -1, 0, 0, 0, 0])
        np.testing.assert_array_equal(spec.beta_sq, [9, 1, 0, 0, 0, 0])

    def test_with_kind_keeps_fields(self):
        spec = named_config("II").with_kind("uniform")
        assert spec.beta == named_config("II").beta
        assert spec.feature_kind is FeatureKind.UNIFORM


class TestRegressionMean:
    def test_unit_vector(self):
        x = np.zeros(100)
        x[0] = 1.0
        assert regression_mean(named_config("II"), x) == 2.0

    def test_zero_vector(self):
        assert regression_mean(named_config("I"), np.zeros(100)) == 0.0

    def test_all_ones(self):
        assert regression_mean(named_config("I"), np.ones(100)) == pytest.approx(2.5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            regression_mean(named_config("I"), np.ones(99))

    def test_batch(self, rng):
        spec = named_config("II")
        x = rng.integers(0, 2, size=(7, 100)).astype(float)
        np.testing.assert_allclose(regression_mean(spec, x), x @ spec.beta_full)


class TestGenerateDataset:
    def test_rejects_empty(self, rng):
        with pytest.raises(ValueError):
            generate_dataset(named_config("I"), 0, rng)

    def test_noiseless(self, rng):
        spec = ModelSpec(10, 3, (1.0, 2.0, 3.0), 0.0, "uniform")
        data = generate_dataset(spec, 50, rng)
        np.testing.assert_array_equal(data.y, regression_mean(spec, data.x))

    def test_binary_feature_means(self, rng):
        data = generate_dataset(named_config("I"), 100_000, rng)
        np.testing.assert_allclose(data.x.mean(axis=0), 0.5, atol=0.005)

    def test_uniform_open_interval(self, rng):
        x = sample_features(named_config("I", "uniform"), 2000, rng)
        assert np.all((x > 0) & (x < 1))

    def test_noise_variance(self, rng):
        spec = ModelSpec(4, 1, (1.0,), 2.0)
        data = generate_dataset(spec, 200_000, rng)
        resid = data.y - regression_mean(spec, data.x)
        assert resid.var() == pytest.approx(2.0, rel=0.02)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 40))
    def test_seed_reproducible(self, seed, n):
        spec = named_config("II", "uniform")
        a = generate_dataset(spec, n, np.random.default_rng(seed))
        b = generate_dataset(spec, n, np.random.default_rng(seed))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
