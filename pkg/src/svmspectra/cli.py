"""Command-line experiment runner.

Subcommands: ``generate`` (write one dataset), ``sweep`` (performance
surface over one axis), ``independence`` (all three sweeps plus the
separable-effects prediction), ``covert`` (single-dataset reduction study),
``reduce`` (save a rank-reduced model), ``report`` (summarize earlier runs).

All randomness derives from ``--seed`` through per-cell hashing, so outputs
are byte-stable across repeated runs and across worker counts.  Worker
threads are taken from ``--threads`` or the ``SVMSPECTRA_THREADS``
environment variable, defaulting to 1.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    SWEEP_ANNEAL,
    DEFAULT_DELTA,
    PerformanceSurface,
    axis_params,
    detect_breakpoint,
    evaluate,
    fit_independence,
    label_changes,
    localization,
    predict_performance,
    sufficiency,
    sweep,
)
from .backbone import MAJORITY, MINORITY, BackboneSpec, LabeledDataset, generate
from .errors import (
    ConfigurationError,
    DegenerateModelError,
    NumericalError,
    ParameterError,
    ParseError,
    RangeError,
    TrainingError,
)
from .seeding import derive_seed
from .selection import AnnealConfig, anneal_select
from .spectral import build_series, reduce, save_reduced_model, series_cosines
from .svm import RbfKernel, TrainConfig, load_model, save_model, train

DATASET_HEADER = ["x1", "x2", "label"]


def _fmt(value, sig: int = 9) -> str:
    """Locale-independent CSV field: floats at ``sig`` significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{sig}g")
    return str(value)


def write_csv(path, header, rows, sig: int = 9) -> None:
    """Write a CSV with deterministic bytes (LF newlines, fixed formatting)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v, sig) for v in row) + "\n")


def write_dataset(data: LabeledDataset, path) -> None:
    """Dataset CSV at full (17 significant digit) precision."""
    rows = (
        (x1, x2, int(label))
        for (x1, x2), label in zip(data.points, data.labels)
    )
    write_csv(path, DATASET_HEADER, rows, sig=17)


def read_dataset(path) -> LabeledDataset:
    """Read a dataset CSV; exact inverse of :func:`write_dataset`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty dataset file", row=0) from None
        if header != DATASET_HEADER:
            raise ParseError(f"{path}: expected header {DATASET_HEADER}, got {header}", row=1)
        points, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}: row {lineno}: expected 3 fields", row=lineno)
            try:
                x1, x2 = float(row[0]), float(row[1])
                label = int(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}: row {lineno}: {exc}", row=lineno) from exc
            if label not in (MINORITY, MAJORITY):
                raise ParseError(f"{path}: row {lineno}: label must be 0 or 1", row=lineno)
            points.append((x1, x2))
            labels.append(label)
    if not points:
        raise ParseError(f"{path}: dataset has no rows", row=1)
    return LabeledDataset(np.array(points), np.array(labels))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class _Manifest:
    """Collects config, seeds, and output digests for one run."""

    def __init__(self, pipeline: str, config: dict):
        hashable = {k: v for k, v in sorted(config.items()) if k not in ("out", "threads")}
        self.doc = {
            "tool": "svmspectra",
            "version": __version__,
            "pipeline": pipeline,
            "config": config,
            "config_hash": hashlib.sha256(
                json.dumps(hashable, sort_keys=True).encode()
            ).hexdigest(),
            "started_utc": _utcnow(),
            "seeds": [],
            "outputs": [],
        }

    def add_seed(self, **fields) -> None:
        self.doc["seeds"].append(fields)

    def add_output(self, path: Path) -> None:
        self.doc["outputs"].append({"path": path.name, "sha256": _sha256(path)})

    def write(self, out_dir: Path) -> Path:
        self.doc["finished_utc"] = _utcnow()
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.doc, indent=2, sort_keys=False) + "\n")
        return path


def _surface_rows(surface: PerformanceSurface):
    for c in surface.cells:
        yield (c.axis, c.t, c.mu, c.alpha, c.n, c.trial, c.f1, c.complexity)


def _write_surface(surface: PerformanceSurface, out_dir: Path, manifest: _Manifest) -> None:
    path = out_dir / "surface.csv"
    write_csv(path, ["axis", "t", "mu", "alpha", "n", "trial", "f1", "complexity"],
              _surface_rows(surface))
    manifest.add_output(path)
    for c in surface.cells:
        manifest.add_seed(axis=c.axis, t=c.t, n=c.n, trial=c.trial, seed=c.seed)


def _pool_map(threads: int):
    if threads <= 1:
        return None, map
    pool = ThreadPoolExecutor(max_workers=threads)
    return pool, pool.map


def _anneal_from(cfg: dict, steps_key: str, default: AnnealConfig) -> AnnealConfig:
    steps = cfg.get(steps_key)
    folds = cfg.get("folds")
    return AnnealConfig(
        steps=default.steps if steps is None else int(steps),
        folds=default.folds if folds is None else int(folds),
    )


def _cmd_generate(cfg: dict, out_dir: Path, manifest: _Manifest) -> None:
    seed = derive_seed(cfg["seed"], "generate", cfg["mu"], cfg["alpha"], cfg["n"])
    data = generate(BackboneSpec(cfg["mu"], cfg["alpha"], cfg["n"], seed))
    path = out_dir / "dataset.csv"
    write_dataset(data, path)
    manifest.add_seed(stage="generate", seed=seed)
    manifest.add_output(path)


def _cmd_sweep(cfg: dict, out_dir: Path, manifest: _Manifest) -> None:
    pool, map_fn = _pool_map(cfg["threads"])
    try:
        grid = np.linspace(0.0, 1.0, cfg["grid_points"])
        surface = sweep(cfg["axis"], cfg["sizes"], cfg["trials"], cfg["seed"],
                        grid=grid, anneal=_anneal_from(cfg, "anneal_steps", SWEEP_ANNEAL),
                        map_fn=map_fn)
    finally:
        if pool is not None:
            pool.shutdown()
    _write_surface(surface, out_dir, manifest)


def _cmd_independence(cfg: dict, out_dir: Path, manifest: _Manifest) -> None:
    pool, map_fn = _pool_map(cfg["threads"])
    anneal = _anneal_from(cfg, "anneal_steps", SWEEP_ANNEAL)
    grid = np.linspace(0.0, 1.0, cfg["grid_points"])
    try:
        surfaces = [
            sweep(axis, cfg["sizes"], cfg["trials"], cfg["seed"],
                  grid=grid, anneal=anneal, map_fn=map_fn)
            for axis in ("overlap", "imbalance", "combined")
        ]
    finally:
        if pool is not None:
            pool.shutdown()
    surface = PerformanceSurface.combine(surfaces)
    _write_surface(surface, out_dir, manifest)
    rows = []
    for n in cfg["sizes"]:
        model = fit_independence(surface, n=int(n))
        ts, means, stds = surface.slice_means("combined", int(n))
        for t, mean, std in zip(ts, means, stds):
            mu, alpha = axis_params("combined", t)
            rows.append((t, mu, alpha, mean, std, predict_performance(model, mu, alpha)))
    path = out_dir / "independence.csv"
    write_csv(path, ["t", "mu", "alpha", "observed_mean", "observed_std", "predicted"], rows)
    manifest.add_output(path)


def _train_for(cfg: dict, manifest: _Manifest):
    """Generate train/test sets, select hyperparameters, train the model."""
    mu, alpha, n = cfg["mu"], cfg["alpha"], cfg["n"]
    seed_train = derive_seed(cfg["seed"], "covert", mu, alpha, n, "train")
    seed_test = derive_seed(cfg["seed"], "covert", mu, alpha, n, "test")
    seed_select = derive_seed(cfg["seed"], "covert", mu, alpha, n, "select")
    manifest.add_seed(stage="train", seed=seed_train)
    manifest.add_seed(stage="test", seed=seed_test)
    manifest.add_seed(stage="select", seed=seed_select)
    train_set = generate(BackboneSpec(mu, alpha, n, seed_train))
    test_set = generate(BackboneSpec(mu, alpha, n, seed_test))
    anneal = _anneal_from(cfg, "anneal_steps", AnnealConfig())
    point = anneal_select(train_set, AnnealConfig(
        steps=anneal.steps, folds=anneal.folds, seed=seed_select))
    model = train(train_set, TrainConfig(c=point.c, seed=derive_seed(seed_select, "final")),
                  RbfKernel(point.gamma))
    return model, train_set, test_set


def _cmd_covert(cfg: dict, out_dir: Path, manifest: _Manifest) -> None:
    model, _, test_set = _train_for(cfg, manifest)
    model_path = out_dir / "model.json"
    model_path.write_bytes(save_model(model))
    manifest.add_output(model_path)

    series = build_series(model)
    cosines = series_cosines(series)
    matrix = label_changes(series, test_set)
    report = sufficiency(series, test_set, cfg["delta"])
    loc = localization(matrix, report, test_set, cfg["mu"])

    counts = dict(zip(matrix.ranks.tolist(), matrix.rank_counts.tolist()))
    series_rows = []
    for m, cos in zip(series.models, cosines):
        f1 = evaluate(m.as_model(), test_set).f1
        series_rows.append((m.rank, f1, cos, counts.get(m.rank, 0)))
    path = out_dir / "series.csv"
    write_csv(path, ["rank", "f1", "cosine", "n_changes"], series_rows)
    manifest.add_output(path)

    path = out_dir / "changes.csv"
    write_csv(path, ["point_id", "rank", "changed"],
              ((int(matrix.point_ids[i]), int(r), int(matrix.flags[i, j]))
               for i in range(matrix.flags.shape[0])
               for j, r in enumerate(matrix.ranks)))
    manifest.add_output(path)

    path = out_dir / "sufficiency.csv"
    write_csv(path, ["p", "delta", "sufficiency_point", "essential_rank", "overlap_score"],
              [(report.base_f1, report.delta, report.sufficiency_point,
                report.essential_rank, report.overlap_score)])
    manifest.add_output(path)

    path = out_dir / "localization.csv"
    n_changed = [int(matrix.flags[:, j:].any(axis=1).sum()) for j in range(matrix.ranks.size)]
    write_csv(path, ["rank", "n_changed", "prop_ambiguous"],
              ((int(r), n_changed[j],
                loc.proportion_curve[j] if np.isfinite(loc.proportion_curve[j]) else "")
               for j, r in enumerate(loc.ranks)))
    manifest.add_output(path)

    path = out_dir / "histogram.csv"
    write_csv(path, ["bin_left", "bin_right", "count"],
              ((loc.bin_edges[i], loc.bin_edges[i + 1], int(loc.histogram[i]))
               for i in range(loc.histogram.size)))
    manifest.add_output(path)


def _cmd_reduce(cfg: dict, out_dir: Path, manifest: _Manifest) -> None:
    if cfg.get("model"):
        model = load_model(Path(cfg["model"]).read_bytes())
    else:
        if cfg.get("mu") is None or cfg.get("alpha") is None or cfg.get("n") is None:
            raise ConfigurationError("reduce needs either --model or --mu/--alpha/--n")
        model, _, _ = _train_for(cfg, manifest)
        path = out_dir / "model.json"
        path.write_bytes(save_model(model))
        manifest.add_output(path)
    reduced = reduce(model, cfg["rank"])
    path = out_dir / "reduced.json"
    path.write_bytes(save_reduced_model(reduced))
    manifest.add_output(path)


def _cmd_report(cfg: dict, out_dir: Path, manifest: _Manifest) -> None:
    src = Path(cfg["dir"]) if cfg.get("dir") else out_dir
    summary: dict = {"source": str(src)}
    ind = src / "independence.csv"
    if ind.exists():
        with open(ind, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pairs = [(float(r["t"]), float(r["observed_mean"])) for r in rows]
        gaps = [abs(float(r["predicted"]) - float(r["observed_mean"])) for r in rows]
        summary["combined_breakpoint"] = detect_breakpoint(pairs)
        summary["max_prediction_gap"] = max(gaps)
    suf = src / "sufficiency.csv"
    if suf.exists():
        with open(suf, newline="") as fh:
            row = next(csv.DictReader(fh))
        summary["sufficiency"] = {k: float(v) for k, v in row.items()}
    if len(summary) == 1:
        raise ConfigurationError(f"nothing to report on in {src}")
    path = out_dir / "report.json"
    path.write_text(json.dumps(summary, indent=2) + "\n")
    manifest.add_output(path)


_PIPELINES = {
    "generate": _cmd_generate,
    "sweep": _cmd_sweep,
    "independence": _cmd_independence,
    "covert": _cmd_covert,
    "reduce": _cmd_reduce,
    "report": _cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svmspectra", description=__doc__)
    sub = parser.add_subparsers(dest="pipeline", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None,
                       help="JSON file with option defaults (flags override)")
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default $SVMSPECTRA_THREADS or 1)")
        p.add_argument("--out", type=str, default=None, help="output directory (default .)")

    p = sub.add_parser("generate", help="write one dataset as CSV")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    common(p)

    for name, desc in (("sweep", "performance surface over one axis"),
                       ("independence", "sweeps plus separable-effects prediction")):
        p = sub.add_parser(name, help=desc)
        if name == "sweep":
            p.add_argument("--axis", choices=("imbalance", "overlap", "combined"), default=None)
        p.add_argument("--sizes", type=int, nargs="+", default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--grid-points", dest="grid_points", type=int, default=None)
        p.add_argument("--anneal-steps", dest="anneal_steps", type=int, default=None)
        p.add_argument("--folds", type=int, default=None)
        common(p)

    p = sub.add_parser("covert", help="single-dataset reduction study")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--anneal-steps", dest="anneal_steps", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    common(p)

    p = sub.add_parser("reduce", help="save a rank-reduced model")
    p.add_argument("--model", type=str, default=None, help="path to a saved model")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--anneal-steps", dest="anneal_steps", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    common(p)

    p = sub.add_parser("report", help="summarize a previous run directory")
    p.add_argument("--dir", type=str, default=None, help="directory with earlier outputs")
    common(p)

    return parser


_DEFAULTS = {
    "generate": {"mu": 0.0, "alpha": 0.5, "n": 800},
    "sweep": {"axis": "overlap", "sizes": [800], "trials": 10, "grid_points": 11},
    "independence": {"sizes": [800], "trials": 10, "grid_points": 11},
    "covert": {"mu": 0.4, "alpha": 0.6, "n": 800, "delta": DEFAULT_DELTA},
    "reduce": {"rank": 1},
    "report": {},
}


def load_config(args: argparse.Namespace) -> dict:
    """Resolve the effective config: defaults, then file, then explicit flags."""
    cfg = dict(_DEFAULTS[args.pipeline])
    cfg.update({"seed": 0, "threads": None, "out": "."})
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = set(loaded) - set(cfg) - {
            "axis", "model", "rank", "dir", "anneal_steps", "folds", "mu", "alpha", "n", "delta",
        }
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("pipeline", "config") or value is None:
            continue
        cfg[key] = value
    if cfg.get("threads") is None:
        env = os.environ.get("SVMSPECTRA_THREADS", "").strip()
        if env:
            try:
                cfg["threads"] = int(env)
            except ValueError:
                raise ConfigurationError(
                    f"SVMSPECTRA_THREADS must be an integer, got {env!r}"
                ) from None
        else:
            cfg["threads"] = 1
    if cfg["threads"] < 1:
        raise ConfigurationError("thread count must be at least 1")
    cfg["seed"] = int(cfg["seed"])
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigurationError("seed must fit in an unsigned 64-bit integer")
    return cfg


def run(pipeline: str, cfg: dict) -> Path:
    """Execute a pipeline; returns the manifest path."""
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(pipeline, {k: v for k, v in cfg.items() if v is not None})
    _PIPELINES[pipeline](cfg, out_dir, manifest)
    return manifest.write(out_dir)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        manifest = run(args.pipeline, cfg)
    except (ConfigurationError, ParameterError, ParseError, RangeError) as exc:
        print(f"svmspectra: configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, TrainingError, DegenerateModelError) as exc:
        print(f"svmspectra: numeric failure: {exc}", file=sys.stderr)
        return 3
    print(manifest)
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
