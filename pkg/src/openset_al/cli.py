"""Batch command-line frontend.

Three subcommands:

* ``run --config cfg.json [--jobs N]``  executes the cross product of
  strategies x openness ratios x seeds, writing one metrics CSV and one
  JSON manifest per run into the configured output directory.
* ``report --dir results/``  aggregates run CSVs into a final-accuracy
  summary table and a per-cycle query-precision series, both plot-ready.
* ``check [--config cfg.json]``  runs the fast invariant suite and prints
  one pass/fail line per property.

Exit codes: 0 success, 1 runtime or property failure, 2 usage/config
error.  Every omitted config field takes its reference default, and the
fully resolved config is echoed into each run manifest.  The environment
variable OPENSET_AL_SEED, when set, overrides the configured seed list.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

from .checks import run_checks
from .datasets import BlobSpec, load_idx, make_blobs
from .harness import (
    METRICS_COLUMNS,
    STRATEGIES,
    run_experiment,
    write_manifest,
    write_metrics_csv,
)
from .model import TrainConfig

__all__ = ["main", "resolve_config", "ConfigError"]

SEED_ENV_VAR = "OPENSET_AL_SEED"

DATA_DEFAULTS = {
    "num_known": 4,
    "num_unknown": 4,
    "dim": 16,
    "per_class": 250,
    "radius": 6.0,
    "cluster_std": 1.0,
    "init_labeled_fraction": 0.05,
    "test_fraction": 0.2,
    "idx": None,
}

TRAIN_FIELDS = (
    "lr",
    "momentum",
    "weight_decay",
    "batch_size",
    "epochs",
    "lr_milestones",
    "tau1",
    "tau2",
    "coarse_threshold",
    "alpha_coef",
    "beta_coef",
    "discrepancy_epochs",
    "hidden_widths",
    "head_init_scale",
    "train_loss",
    "use_discrepancy",
)

REQUIRED_FIELDS = ("strategies", "openness_ratios", "seeds", "output_dir")


class ConfigError(ValueError):
    """Configuration problem; the message names the offending field."""


def resolve_config(raw: dict) -> dict:
    """Fill defaults, validate field by field, honor the seed override."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for field in REQUIRED_FIELDS:
        if field not in raw:
            raise ConfigError(f"missing required field '{field}'")

    known_top = set(REQUIRED_FIELDS) | {"data", "train", "query_size", "num_cycles"}
    for key in raw:
        if key not in known_top:
            raise ConfigError(f"unknown field '{key}'")

    strategies = list(raw["strategies"])
    if not strategies:
        raise ConfigError("field 'strategies' must list at least one strategy")
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(
                f"field 'strategies' contains unknown strategy '{s}'; "
                f"expected one of {list(STRATEGIES)}"
            )
    ratios = [float(r) for r in raw["openness_ratios"]]
    if not ratios:
        raise ConfigError("field 'openness_ratios' must list at least one ratio")
    for r in ratios:
        if not 0 <= r < 1:
            raise ConfigError(f"field 'openness_ratios' value {r} outside [0, 1)")
    seeds = [int(s) for s in raw["seeds"]]
    if not seeds:
        raise ConfigError("field 'seeds' must list at least one seed")
    if os.environ.get(SEED_ENV_VAR):
        try:
            seeds = [int(os.environ[SEED_ENV_VAR])]
        except ValueError as exc:
            raise ConfigError(f"environment variable {SEED_ENV_VAR} is not an integer") from exc

    data = dict(DATA_DEFAULTS)
    for key, value in raw.get("data", {}).items():
        if key not in DATA_DEFAULTS:
            raise ConfigError(f"unknown field 'data.{key}'")
        data[key] = value

    train_defaults = dataclasses.asdict(TrainConfig())
    train = {k: train_defaults[k] for k in TRAIN_FIELDS}
    for key, value in raw.get("train", {}).items():
        if key not in TRAIN_FIELDS:
            raise ConfigError(f"unknown field 'train.{key}'")
        train[key] = value
    train["lr_milestones"] = tuple(train["lr_milestones"])
    train["hidden_widths"] = tuple(train["hidden_widths"])

    resolved = {
        "strategies": strategies,
        "openness_ratios": ratios,
        "seeds": seeds,
        "output_dir": str(raw["output_dir"]),
        "query_size": int(raw.get("query_size", 60)),
        "num_cycles": int(raw.get("num_cycles", 5)),
        "data": data,
        "train": train,
    }
    try:
        _train_config(resolved, seed=seeds[0]).validate()
    except ValueError as exc:
        raise ConfigError(f"invalid train settings: {exc}") from exc
    return resolved


def _train_config(resolved: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        seed=seed,
        query_size=resolved["query_size"],
        num_cycles=resolved["num_cycles"],
        **resolved["train"],
    )


def _build_split(resolved: dict, r: float, seed: int):
    data = resolved["data"]
    if data.get("idx"):
        idx = data["idx"]
        for field in ("images", "labels", "known_classes"):
            if field not in idx:
                raise ConfigError(f"missing required field 'data.idx.{field}'")
        return load_idx(
            idx["images"],
            idx["labels"],
            known_classes=idx["known_classes"],
            r=r,
            seed=seed,
            init_labeled_fraction=data["init_labeled_fraction"],
            test_fraction=data["test_fraction"],
        )
    spec = BlobSpec(
        num_known=data["num_known"],
        num_unknown=data["num_unknown"],
        dim=data["dim"],
        per_class=data["per_class"],
        radius=data["radius"],
        cluster_std=data["cluster_std"],
        seed=seed,
    )
    return make_blobs(
        spec,
        r,
        init_labeled_fraction=data["init_labeled_fraction"],
        test_fraction=data["test_fraction"],
    )


def run_tag(strategy: str, r: float, seed: int) -> str:
    return f"{strategy}_r{r:g}_s{seed}"


def _execute_run(resolved: dict, strategy: str, r: float, seed: int) -> str:
    """One (strategy, ratio, seed) cell: runs the experiment and writes
    its CSV + manifest.  Top-level so process pools can pickle it."""
    split = _build_split(resolved, r, seed)
    cfg = _train_config(resolved, seed)
    metrics = run_experiment(split, cfg, strategy)
    outdir = Path(resolved["output_dir"])
    tag = run_tag(strategy, r, seed)
    write_metrics_csv(outdir / f"metrics_{tag}.csv", metrics, strategy, seed, r)
    write_manifest(outdir / f"manifest_{tag}.json", resolved, metrics, strategy, seed, r)
    return tag


def cmd_run(config_path: str, jobs: int = 1) -> int:
    try:
        raw = json.loads(Path(config_path).read_text())
    except FileNotFoundError:
        print(f"config error: file not found: {config_path}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        resolved = resolve_config(raw)
        outdir = Path(resolved["output_dir"])
        outdir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    cells = list(
        product(resolved["strategies"], resolved["openness_ratios"], resolved["seeds"])
    )
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(_execute_run, resolved, s, r, seed)
                    for s, r, seed in cells
                ]
                for f in futures:
                    print(f"completed {f.result()}")
        else:
            for s, r, seed in cells:
                print(f"completed {_execute_run(resolved, s, r, seed)}")
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(cells)} runs to {resolved['output_dir']}")
    return 0


def _population_std(values) -> float:
    n = len(values)
    mean = sum(values) / n
    return (sum((v - mean) ** 2 for v in values) / n) ** 0.5


def _read_run_csv(path: Path):
    """Parse one metrics CSV; malformed rows are skipped with a warning."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(METRICS_COLUMNS) - set(reader.fieldnames):
            print(f"warning: {path} lacks the metrics header, skipped", file=sys.stderr)
            return []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    {
                        "cycle": int(row["cycle"]),
                        "strategy": row["strategy"],
                        "seed": int(row["seed"]),
                        "r": float(row["r"]),
                        "query_precision": (
                            float(row["query_precision"])
                            if row["query_precision"]
                            else None
                        ),
                        "test_accuracy": float(row["test_accuracy"]),
                    }
                )
            except (ValueError, KeyError, TypeError):
                print(
                    f"warning: {path}:{lineno}: malformed row skipped", file=sys.stderr
                )
    return rows


def cmd_report(results_dir: str) -> int:
    dirpath = Path(results_dir)
    csv_files = sorted(dirpath.glob("*.csv"))
    csv_files = [p for p in csv_files if not p.name.startswith(("summary_", "query_precision_"))]
    runs = {}
    for path in csv_files:
        rows = _read_run_csv(path)
        if rows:
            key = (rows[0]["strategy"], rows[0]["r"], rows[0]["seed"])
            runs[key] = rows
    if not runs:
        print(f"no valid run CSVs found in {results_dir}", file=sys.stderr)
        return 1

    # final-accuracy table, one row per (strategy, ratio)
    final = {}
    for (strategy, r, _seed), rows in runs.items():
        last = max(rows, key=lambda row: row["cycle"])
        final.setdefault((strategy, r), []).append(last["test_accuracy"])
    with open(dirpath / "summary_accuracy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "openness_ratio", "n_runs", "mean_final_accuracy", "std_final_accuracy"]
        )
        for (strategy, r), accs in sorted(final.items()):
            writer.writerow(
                [strategy, repr(r), len(accs), repr(sum(accs) / len(accs)), repr(_population_std(accs))]
            )

    # per-cycle query-precision series
    series = {}
    for (strategy, r, _seed), rows in runs.items():
        for row in rows:
            if row["query_precision"] is not None:
                series.setdefault((strategy, r, row["cycle"]), []).append(
                    row["query_precision"]
                )
    with open(dirpath / "query_precision_series.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "openness_ratio", "cycle", "n_runs", "mean_query_precision", "std_query_precision"]
        )
        for (strategy, r, cycle), vals in sorted(series.items()):
            writer.writerow(
                [strategy, repr(r), cycle, len(vals), repr(sum(vals) / len(vals)), repr(_population_std(vals))]
            )
    print(f"aggregated {len(runs)} runs into summary_accuracy.csv and query_precision_series.csv")
    return 0


def cmd_check(config_path: str | None = None) -> int:
    seed = 0
    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text())
            seeds = raw.get("seeds")
            if seeds:
                seed = int(seeds[0])
        except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    results = run_checks(seed=seed)
    failures = []
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        if not passed:
            failures.append(name)
    if failures:
        print(f"{len(failures)} property check(s) failed: {', '.join(failures)}")
        return 1
    print(f"all {len(results)} property checks passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="openset-al",
        description="Open-set active-learning experiments with evidential selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the configured experiment grid")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel runs")

    p_report = sub.add_parser("report", help="aggregate run CSVs")
    p_report.add_argument("--dir", required=True, help="directory with run CSVs")

    p_check = sub.add_parser("check", help="run the fast invariant suite")
    p_check.add_argument("--config", default=None, help="optional JSON config")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, jobs=args.jobs)
    if args.command == "report":
        return cmd_report(args.dir)
    return cmd_check(args.config)


if __name__ == "__main__":
    sys.exit(main())
