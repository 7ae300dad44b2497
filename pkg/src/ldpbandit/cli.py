"""Command-line entry point: run, sweep, validate and ingest subcommands.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
All outputs land in the directory given by --out; nothing else is written.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, validation
from .environments import ingest_classification_csv, write_scaled_dataset

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldpbandit",
        description="Locally private nonparametric contextual bandit simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("--config", required=True, help="path to a JSON config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--quiet", action="store_true")

    sweep_p = sub.add_parser("sweep", help="run a grid of configs")
    sweep_p.add_argument("--config", required=True,
                         help="JSON with 'base' config and 'axes' grid")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default="out")
    sweep_p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    sweep_p.add_argument("--quiet", action="store_true")

    val_p = sub.add_parser("validate", help="fast internal consistency checks")
    val_p.add_argument("--seed", type=int, default=0)
    val_p.add_argument("--quiet", action="store_true")

    ing_p = sub.add_parser("ingest", help="scale a classification CSV into [0,1]^d")
    ing_p.add_argument("--csv", required=True, help="input CSV with a header row")
    ing_p.add_argument("--d", type=int, required=True, help="number of feature columns")
    ing_p.add_argument("--label-column", default="label")
    ing_p.add_argument("--out", default="out")
    ing_p.add_argument("--quiet", action="store_true")
    return parser


def _cmd_run(args) -> int:
    try:
        config = harness.load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        results = harness.run_experiment(config)
        paths = harness.export_results(results, args.out, record_every=config.record_every)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        finals = [r.metrics.cum_regret[-1] for r in results]
        rewards = [r.metrics.cum_reward[-1] for r in results]
        bins = [int(r.metrics.n_bins[-1]) for r in results]
        elims = sum(
            1 for r in results for e in r.record.events if e.kind == "elimination"
        )
        mean_final = sum(finals) / len(finals)
        print(f"runs: {len(results)}")
        print(f"final cumulative regret (mean): {mean_final:.4f}")
        print(f"final cumulative reward (mean): {sum(rewards) / len(rewards):.4f}")
        print(f"active bins at end: {bins}")
        print(f"eliminations: {elims}")
        print(f"results: {paths['results']}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        print(f"config error: file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        raw = json.loads(path.read_text())
        base = raw["base"]
        axes = raw.get("axes", {})
        if not isinstance(base, dict) or not isinstance(axes, dict):
            raise harness.ConfigError("'base' must be an object and 'axes' a mapping")
        if args.seed is not None:
            base = dict(base, seed=args.seed)
        cells = harness.expand_sweep(base, axes)  # validates every cell
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cells, res_rows, ev_rows, summary = harness.run_sweep(base, axes, jobs=args.jobs)
        out = Path(args.out)
        n_arms = len(res_rows[0]) - 10 if res_rows else 0
        harness.write_csv(out / "results.csv", harness.results_columns(n_arms), res_rows)
        harness.write_csv(out / "events.csv", harness.EVENT_COLUMNS, ev_rows)
        harness.write_csv(out / "summary.csv", harness.summary_columns(axes), summary)
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"cells: {len(cells)}, runs: {sum(c.config.replications for c in cells)}")
        for row in summary:
            print("  " + ", ".join(str(v) for v in row))
        print(f"summary: {Path(args.out) / 'summary.csv'}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    ok = validation.run_all(seed=args.seed, quiet=args.quiet)
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_ingest(args) -> int:
    try:
        rows, meta = ingest_classification_csv(args.csv, args.d, args.label_column)
    except (OSError, ValueError) as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.csv).stem
        csv_path = out / f"{stem}_scaled.csv"
        meta_path = out / f"{stem}_scaled.meta.json"
        write_scaled_dataset(rows, meta, csv_path, meta_path)
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"rows: {len(rows)}, arms: {meta['n_arms']}")
        print(f"scaled data: {csv_path}")
        print(f"metadata: {meta_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "validate": _cmd_validate,
        "ingest": _cmd_ingest,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
