"""Command-line surface: JSON run configs, run/compare/grid subcommands, and
CSV/JSON result emission.

Exit codes: 0 on a normal stop, 2 when a run ends on the iteration safety
valve, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .driver import (
    STOP_MAX_ITERATIONS,
    RunConfig,
    compare,
    config_from_dict,
    grid_dump,
    run,
)
from .learning import StrategyKind

SCHEMA_VERSION = 1
_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)} | {"schema_version", "workers"}

COMPARISON_HEADER = ["strategy", "mean_n_call", "cov_n_call", "mean_eps", "cov_eps"]
GRID_HEADER = ["x1", "x2", "mu", "sigma", "sigma_b2"]
HISTORY_HEADER = [
    "iteration",
    "n_call",
    "pf_hat",
    "variance",
    "cov_estimator",
    "cov_mcs",
    "selected_indices",
    "selected_points",
    "selected_scores",
]


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    """Round-trip decimal formatting: 17 significant digits."""
    return format(float(x), ".17g")


def load_config(path: str) -> tuple[RunConfig, int]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config document must be a JSON object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version}")
    workers = int(data.pop("workers", 1))
    try:
        return config_from_dict(data), workers
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.strategy is not None:
        updates["strategy"] = StrategyKind.parse(args.strategy).value
    if getattr(args, "policy", None) is not None:
        updates["policy"] = args.policy
    if getattr(args, "n_para", None) is not None:
        updates["n_para"] = args.n_para
    if getattr(args, "max_iter", None) is not None:
        updates["max_iterations"] = args.max_iter
    return dataclasses.replace(config, **updates) if updates else config


def _write_history(path: Path, records) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.iteration,
                    rec.n_call,
                    _fmt(rec.pf_hat),
                    _fmt(rec.variance),
                    _fmt(rec.cov_estimator),
                    _fmt(rec.cov_mcs),
                    ";".join(str(i) for i in rec.selected_indices),
                    ";".join("|".join(_fmt(c) for c in p) for p in rec.selected_points),
                    ";".join(_fmt(s) for s in rec.selected_scores),
                ]
            )


def _write_summary(path: Path, report) -> None:
    with path.open("w") as fh:
        json.dump(report.to_summary_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    config, _ = load_config(args.config)
    config = _apply_overrides(config, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run(config)
    _write_history(out / "history.csv", report.records)
    _write_summary(out / "summary.json", report)
    return 2 if report.stop_cause == STOP_MAX_ITERATIONS else 0


def cmd_compare(args) -> int:
    config, workers = load_config(args.config)
    config = _apply_overrides(config, args)
    if args.workers is not None:
        workers = args.workers
    strategies = (
        [s.strip() for s in args.strategies.split(",") if s.strip()]
        if args.strategies
        else [config.strategy]
    )
    configs = [
        dataclasses.replace(config, strategy=StrategyKind.parse(s).value) for s in strategies
    ]
    rows = compare(configs, args.replications, workers=workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "comparison.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for row in rows:
            writer.writerow(
                [row.strategy, _fmt(row.mean_n_call), _fmt(row.cov_n_call),
                 _fmt(row.mean_eps), _fmt(row.cov_eps)]
            )
    if any(row.failures for row in rows):
        return 1
    return 2 if any(row.max_iteration_stops for row in rows) else 0


def cmd_grid(args) -> int:
    config, _ = load_config(args.config)
    config = _apply_overrides(config, args)
    report = run(config)
    grid = grid_dump(report.final_model, config.grid_bounds, args.resolution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "grid.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_HEADER)
        for row in grid:
            writer.writerow([_fmt(v) for v in row])
    return 2 if report.stop_cause == STOP_MAX_ITERATIONS else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="akmcs", description="Active-learning Kriging failure-probability estimation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--strategy", default=None)

    p_run = sub.add_parser("run", help="one adaptive run; writes history.csv and summary.json")
    common(p_run)
    p_run.add_argument("--policy", default=None, choices=["mmse", "mmae", "mape"])
    p_run.add_argument("--n-para", dest="n_para", type=int, default=None)
    p_run.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="replicated strategy comparison; writes comparison.csv")
    common(p_cmp)
    p_cmp.add_argument("--strategies", default=None, help="comma-separated strategy list")
    p_cmp.add_argument("--replications", type=int, default=1)
    p_cmp.add_argument("--policy", default=None, choices=["mmse", "mmae", "mape"])
    p_cmp.add_argument("--n-para", dest="n_para", type=int, default=None)
    p_cmp.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_cmp.add_argument("--workers", type=int, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_grid = sub.add_parser("grid", help="run, then dump the surrogate on a grid; writes grid.csv")
    common(p_grid)
    p_grid.add_argument("--resolution", type=int, default=100)
    p_grid.add_argument("--n-para", dest="n_para", type=int, default=None)
    p_grid.add_argument("--policy", default=None, choices=["mmse", "mmae", "mape"])
    p_grid.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_grid.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
