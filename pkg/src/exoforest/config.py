"""Experiment configuration files.

The format is INI with four sections; every key is optional::

    [model]
    config = I            ; named configuration I or II, or omit for custom
    d = 100
    s = 5
    beta = 0.5, 0.5, 0.5, 0.5, 0.5
    sigma0_sq = 1.69
    feature_kind = both   ; binary, uniform or both

    [grid]
    gamma = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0
    depth = 1-9           ; comma list, ranges a-b allowed
    B = 100
    n = 1000
    n_test = 256

    [run]
    reps = 1000
    master_seed = 0
    workers = 1

    [output]
    csv = results.csv
    precision = 10

Named configurations fill d, s, beta, sigma0_sq, n and B; explicit keys
override them.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .model import NAMED_DEFAULTS, FeatureKind, ModelSpec, named_config

SECTIONS = {
    "model": {"config", "d", "s", "beta", "sigma0_sq", "feature_kind"},
    "grid": {"gamma", "depth", "b", "n", "n_test"},
    "run": {"reps", "master_seed", "workers"},
    "output": {"csv", "precision"},
}

DEFAULT_GAMMAS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_DEPTHS = tuple(range(1, 10))


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    spec: ModelSpec
    kinds: tuple
    gammas: tuple
    depths: tuple
    B: int
    n: int
    n_test: int
    reps: int
    master_seed: int
    workers: int
    csv: str | None
    precision: int

    def specs(self):
        """(kind, spec) pairs in output order."""
        return [(k, self.spec.with_kind(k)) for k in self.kinds]


def _field(section, key):
    return f"[{section}] {key}"


def _int(raw, section, key, lo=None):
    try:
        v = int(raw.strip())
    except ValueError:
        raise ConfigError(f"{_field(section, key)}: expected an integer, got {raw!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(f"{_field(section, key)}: must be >= {lo}, got {v}")
    return v


def _float(raw, section, key):
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigError(f"{_field(section, key)}: expected a number, got {raw!r}") from None


def _float_list(raw, section, key):
    items = [t for t in raw.replace("\n", ",").split(",") if t.strip()]
    if not items:
        raise ConfigError(f"{_field(section, key)}: empty list")
    return tuple(_float(t, section, key) for t in items)


def _int_list(raw, section, key):
    out = []
    for tok in (t.strip() for t in raw.replace("\n", ",").split(",")):
        if not tok:
            continue
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1)
            lo, hi = _int(lo, section, key, 0), _int(hi, section, key, 0)
            if hi < lo:
                raise ConfigError(f"{_field(section, key)}: empty range {tok!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(_int(tok, section, key, 0))
    if not out:
        raise ConfigError(f"{_field(section, key)}: empty list")
    return tuple(out)


def _kinds(raw):
    key = raw.strip().lower()
    if key == "both":
        return (FeatureKind.BINARY, FeatureKind.UNIFORM)
    try:
        return (FeatureKind(key),)
    except ValueError:
        raise ConfigError(f"[model] feature_kind: expected binary, uniform or both, "
                          f"got {raw!r}") from None


def parse_config(text: str | None, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; None gives the all-default configuration."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text or "", source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SECTIONS[sec]:
                raise ConfigError(f"{source}: unknown key {_field(sec, key)}")

    def get(sec, key):
        return cp[sec][key] if cp.has_option(sec, key) else None

    name = (get("model", "config") or "I").strip().upper()
    custom = any(get("model", k) is not None for k in ("d", "s", "beta", "sigma0_sq"))
    if get("model", "config") is None and custom:
        name = "CUSTOM"
    if name in ("I", "II"):
        base = named_config(name)
        d, s, beta, sig = base.d, base.s, base.beta, base.sigma0_sq
        n_default, b_default = NAMED_DEFAULTS["n"], NAMED_DEFAULTS["B"]
    elif name == "CUSTOM":
        name = "custom"
        d = s = None
        beta, sig = None, 0.0
        n_default, b_default = NAMED_DEFAULTS["n"], NAMED_DEFAULTS["B"]
    else:
        raise ConfigError(f"[model] config: expected I or II, got {name!r}")
    if get("model", "d") is not None:
        d = _int(get("model", "d"), "model", "d", 1)
    if get("model", "s") is not None:
        s = _int(get("model", "s"), "model", "s", 0)
    if get("model", "beta") is not None:
        raw = get("model", "beta").strip()
        beta = () if raw == "" else _float_list(raw, "model", "beta")
    if get("model", "sigma0_sq") is not None:
        sig = _float(get("model", "sigma0_sq"), "model", "sigma0_sq")
    if d is None:
        raise ConfigError("[model] d: required for a custom model")
    if beta is None:
        beta = ()
    if s is None:
        s = len(beta)
    kinds = _kinds(get("model", "feature_kind") or "both")
    try:
        spec = ModelSpec(d, s, tuple(beta), sig, kinds[0])
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from None

    gammas = DEFAULT_GAMMAS
    if get("grid", "gamma") is not None:
        gammas = _float_list(get("grid", "gamma"), "grid", "gamma")
    for g in gammas:
        if not 0.0 < g <= 1.0:
            raise ConfigError(f"[grid] gamma: values must lie in (0, 1], got {g}")
    depths = DEFAULT_DEPTHS
    if get("grid", "depth") is not None:
        depths = _int_list(get("grid", "depth"), "grid", "depth")
    B = b_default if get("grid", "b") is None else _int(get("grid", "b"), "grid", "B", 1)
    n = n_default if get("grid", "n") is None else _int(get("grid", "n"), "grid", "n", 1)
    n_test = 256 if get("grid", "n_test") is None else _int(get("grid", "n_test"), "grid",
                                                            "n_test", 1)
    reps = 1000 if get("run", "reps") is None else _int(get("run", "reps"), "run", "reps", 1)
    seed = 0 if get("run", "master_seed") is None else _int(get("run", "master_seed"), "run",
                                                            "master_seed", 0)
    workers = 1 if get("run", "workers") is None else _int(get("run", "workers"), "run",
                                                           "workers", 1)
    precision = 10 if get("output", "precision") is None else _int(
        get("output", "precision"), "output", "precision", 1)
    csv = get("output", "csv")
    return ExperimentConfig(name=name, spec=spec, kinds=kinds, gammas=tuple(gammas),
                            depths=tuple(depths), B=B, n=n, n_test=n_test, reps=reps,
                            master_seed=seed, workers=workers,
                            csv=csv.strip() if csv else None, precision=precision)


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return parse_config(None)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, source=path)


def with_overrides(cfg: ExperimentConfig, seed=None, workers=None, reps=None,
                   out=None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes["master_seed"] = seed
    if workers is not None:
        changes["workers"] = workers
    if reps is not None:
        changes["reps"] = reps
    if out is not None:
        changes["csv"] = out
    return replace(cfg, **changes)
