"""Sparse linear regression model with binary or uniform features."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class FeatureKind(str, enum.Enum):
    BINARY = "binary"
    UNIFORM = "uniform"


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ModelSpec:
    """y = beta_1 X_1 + ... + beta_s X_s + eps with i.i.d. features.

    Coordinates s+1..d carry zero coefficients (noise features).
    """

    d: int
    s: int
    beta: tuple
    sigma0_sq: float
    feature_kind: FeatureKind = FeatureKind.BINARY

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "feature_kind", FeatureKind(self.feature_kind))
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        if not 0 <= self.s <= self.d:
            raise ValueError(f"need 0 <= s <= d, got s={self.s}, d={self.d}")
        if len(beta) != self.s:
            raise ValueError(f"beta has {len(beta)} entries, expected s={self.s}")
        if any(b == 0.0 or not np.isfinite(b) for b in beta):
            raise ValueError("informative coefficients must be finite and nonzero")
        if not (self.sigma0_sq >= 0.0 and np.isfinite(self.sigma0_sq)):
            raise ValueError(f"sigma0_sq must be finite and >= 0, got {self.sigma0_sq}")

    @property
    def beta_full(self) -> np.ndarray:
        """Length-d coefficient vector, zero-padded."""
        out = np.zeros(self.d)
        out[: self.s] = self.beta
        return out

    @property
    def beta_sq(self) -> np.ndarray:
        return self.beta_full ** 2

    def with_kind(self, kind) -> "ModelSpec":
        return ModelSpec(self.d, self.s, self.beta, self.sigma0_sq, FeatureKind(kind))


CONFIG_I_BETA = (0.5, 0.5, 0.5, 0.5, 0.5)
CONFIG_II_BETA = (2.0, 1.8, 1.6, 1.4, 1.2)

# shared settings of the two named simulation configurations
NAMED_DEFAULTS = {"d": 100, "s": 5, "sigma0_sq": 1.69, "n": 1000, "B": 100}


def named_config(name: str, kind=FeatureKind.BINARY) -> ModelSpec:
    """Equal-coefficient ("I") or unequal-coefficient ("II") configuration."""
    key = str(name).strip().upper()
    if key == "I":
        beta = CONFIG_I_BETA
    elif key == "II":
        beta = CONFIG_II_BETA
    else:
        raise ValueError(f"unknown named configuration {name!r}; expected 'I' or 'II'")
    return ModelSpec(NAMED_DEFAULTS["d"], NAMED_DEFAULTS["s"], beta,
                     NAMED_DEFAULTS["sigma0_sq"], FeatureKind(kind))


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]


def regression_mean(spec: ModelSpec, x) -> float | np.ndarray:
    """mu(x) for a single d-vector or an (m, d) batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"expected last dimension {spec.d}, got shape {x.shape}")
    out = x[..., : spec.s] @ np.asarray(spec.beta, dtype=float)
    if x.ndim == 1:
        return float(out)
    return out


def sample_features(spec: ModelSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.feature_kind is FeatureKind.BINARY:
        return rng.integers(0, 2, size=(n, spec.d)).astype(float)
    x = rng.random((n, spec.d))
    # open interval (0, 1): terminal cells are half-open on the left
    zero = x == 0.0
    while zero.any():
        x[zero] = rng.random(int(zero.sum()))
        zero = x == 0.0
    return x


def generate_dataset(spec: ModelSpec, n: int, rng: np.random.Generator,
                     noise_kind: NoiseKind = NoiseKind.GAUSSIAN) -> Dataset:
    """Draw n i.i.d. rows (X_i, Y_i) from the model."""
    if int(n) != n or n < 1:
        raise ValueError(f"sample size must be a positive integer, got {n}")
    n = int(n)
    if NoiseKind(noise_kind) is not NoiseKind.GAUSSIAN:
        raise ValueError(f"unsupported noise kind {noise_kind!r}")
    x = sample_features(spec, n, rng)
    y = regression_mean(spec, x)
    if spec.sigma0_sq > 0:
        y = y + np.sqrt(spec.sigma0_sq) * rng.standard_normal(n)
    return Dataset(x=x, y=np.asarray(y, dtype=float))
