"""Command-line experiment runner.

Usage::

    exoforest {measures,theory,empirical,bound,lemmas,selftest}
              [--config PATH] [--out PATH] [--seed U64] [--workers K] [--reps K]

Grid cells are evaluated in a process pool and written sorted by
(kind, gamma, depth), so output does not depend on scheduling. Cell (g, l)
draws from the stream seeded by derive_seed(master_seed, g, l); empirical
replication r of that cell uses derive_seed(cell_seed, r).

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
failure or non-finite output, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .cart_process import subsample_size
from .config import ConfigError, ExperimentConfig, load_config, with_overrides
from .mc_harness import empirical_mse
from .model import FeatureKind
from .moments import lemma_grid
from .seeding import derive_seed
from .selftest import run_selftest
from .theory import PerfMeasures, convergence_bound, mse_terms, perf_measures

HEADER = ("kind", "config", "gamma", "depth", "B", "n", "measure", "tree_value",
          "forest_value", "tree_se", "forest_se", "reps", "seed")
LEMMA_HEADER = ("lemma", "n", "params", "exact", "leading", "second_order", "gap",
                "bound_shape", "ratio")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3
GRID_COMMANDS = ("measures", "theory", "empirical", "bound")


def _cell_measures(cfg, spec, gamma, l, seed):
    m = perf_measures(spec.feature_kind, spec, gamma, l, cfg.B, cfg.n, cfg.reps, seed)
    return [(label, getattr(m, t), getattr(m, f), m.mc_se[t], m.mc_se[f])
            for label, t, f in PerfMeasures.ROWS]


def _cell_theory(cfg, spec, gamma, l, seed):
    tree = mse_terms(spec, gamma, l, 1, cfg.n, cfg.reps, seed)
    forest = mse_terms(spec, gamma, l, cfg.B, cfg.n, cfg.reps, seed)
    se = tree.mc_se
    return [
        ("sq_bias", tree.single_sq_bias, tree.ensemble_sq_bias,
         se["single_sq_bias"], se["ensemble_sq_bias"]),
        ("variance", tree.single_tree_var, tree.cross_tree_cov,
         se["single_tree_var"], se["cross_tree_cov"]),
        ("total_leading", tree.total_leading, forest.total_leading,
         se["total_leading"], forest.mc_se["total_leading"]),
        ("remainder_bound", tree.remainder_bound, forest.remainder_bound, 0.0, 0.0),
    ]


def _cell_empirical(cfg, spec, gamma, l, seed):
    r = empirical_mse(spec, gamma, l, cfg.B, cfg.n, cfg.n_test, cfg.reps, seed)
    return [
        ("empirical_mse", r.mse_tree_empirical, r.mse_forest_empirical,
         r.se_tree_empirical, r.se_forest_empirical),
        ("theory_mse", r.mse_tree_theory, r.mse_forest_theory,
         r.se_tree_theory, r.se_forest_theory),
        ("rel_err", r.rel_err_tree, r.rel_err_forest, 0.0, 0.0),
    ]


def _cell_bound(cfg, spec, gamma, l, seed):
    b = convergence_bound(spec, gamma, l, cfg.n)
    return [("convergence_bound", b, b, 0.0, 0.0)]


_CELL = {"measures": _cell_measures, "theory": _cell_theory,
         "empirical": _cell_empirical, "bound": _cell_bound}


def _run_cell(task):
    command, cfg, kind, gi, li = task
    spec = cfg.spec.with_kind(kind)
    gamma, l = cfg.gammas[gi], cfg.depths[li]
    seed = derive_seed(cfg.master_seed, gi, li)
    rows = _CELL[command](cfg, spec, gamma, l, seed)
    return [(kind.value, cfg.name, gamma, l, cfg.B, cfg.n, label, tv, fv, tse, fse,
             cfg.reps, cfg.master_seed) for label, tv, fv, tse, fse in rows]


def _check_grid(cfg: ExperimentConfig):
    for kind in cfg.kinds:
        if kind is not FeatureKind.BINARY:
            continue
        for g in cfg.gammas:
            k = subsample_size(cfg.spec.d, g)
            bad = [l for l in cfg.depths if l >= k]
            if bad:
                raise ConfigError(f"[grid] depth: binary model needs depth < ceil(gamma d) = {k} "
                                  f"at gamma={g}; offending depths {bad}")


def run_grid(command: str, cfg: ExperimentConfig) -> list[tuple]:
    """Evaluate every (kind, gamma, depth) cell; rows sorted by (kind, gamma, depth)."""
    _check_grid(cfg)
    tasks = [(command, cfg, kind, gi, li) for kind in cfg.kinds
             for gi in range(len(cfg.gammas)) for li in range(len(cfg.depths))]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    kind_order = {k.value: i for i, k in enumerate(FeatureKind)}
    # rows of one cell keep their measure order; cells sort by (kind, gamma, depth)
    keyed = [((kind_order[t[2].value], cfg.gammas[t[3]], cfg.depths[t[4]]), rows)
             for t, rows in zip(tasks, results)]
    keyed.sort(key=lambda kr: kr[0])
    return [row for _, rows in keyed for row in rows]


def lemma_rows() -> list[tuple]:
    out = []
    for r in lemma_grid():
        e = r.expansion
        out.append((r.lemma, r.n, r.params, e.exact, e.leading, e.second_order, e.gap,
                    e.bound_shape, r.ratio))
    return out


def _fmt(v, precision):
    if isinstance(v, float):
        return f"{v:.{precision}g}"
    return str(v)


def format_csv(header, rows, precision: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v, precision) for v in row])
    return buf.getvalue()


def _nonfinite(rows):
    return any(isinstance(v, float) and not math.isfinite(v) for row in rows for v in row)


def _emit(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exoforest",
                                 description="Tree and forest MSE theory and simulation.")
    ap.add_argument("command", choices=GRID_COMMANDS + ("lemmas", "selftest"))
    ap.add_argument("--config", help="INI experiment configuration")
    ap.add_argument("--out", help="CSV output path (default: config value or stdout)")
    ap.add_argument("--seed", type=int, help="master seed override (unsigned 64-bit)")
    ap.add_argument("--workers", type=int, help="worker processes")
    ap.add_argument("--reps", type=int, help="Monte-Carlo replications override")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    if args.command == "selftest":
        results = run_selftest()
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST

    workers = args.workers
    if workers is None and os.environ.get("EXOFOREST_WORKERS"):
        try:
            workers = int(os.environ["EXOFOREST_WORKERS"])
        except ValueError:
            print("error: EXOFOREST_WORKERS must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        if workers is not None and workers < 1:
            raise ConfigError("--workers: must be >= 1")
        if args.reps is not None and args.reps < 1:
            raise ConfigError("--reps: must be >= 1")
        cfg = with_overrides(load_config(args.config), seed=args.seed, workers=workers,
                             reps=args.reps, out=args.out)
        if args.command in GRID_COMMANDS:
            _check_grid(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "lemmas":
            header, rows = LEMMA_HEADER, lemma_rows()
        else:
            header, rows = HEADER, run_grid(args.command, cfg)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = format_csv(header, rows, cfg.precision)
    try:
        _emit(text, cfg.csv)
    except BrokenPipeError:
        return EXIT_OK
    except OSError as exc:
        print(f"error: cannot write {cfg.csv}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    if _nonfinite(rows):
        print("error: non-finite value in output", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
