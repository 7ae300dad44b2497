"""Regret curves with 95% confidence bands from a harness results CSV.

Two figure kinds:

* ``regret-vs-n``: the chosen value column (cumulative regret by default)
  against the number of target samples consumed (the ``t`` column), one line
  per group with a band across seeds.
* ``regret-vs-sweep-axis``: a sweep summary CSV plotted against one of its
  axis columns, using the precomputed mean and CI columns.

Standalone script: ``--input results.csv --out figure.png``.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bands import SchemaError, confidence_bands, load_csv, save_figure


def plot_regret_vs_n(ax, df, value_col: str, group_by: list[str]):
    """One line per group over t, with a seed-wise CI band; returns the band table."""
    bands = confidence_bands(df, "t", value_col, group_by)
    for key, block in bands.groupby(group_by, sort=True):
        key = key if isinstance(key, tuple) else (key,)
        label = ", ".join(f"{c}={v}" for c, v in zip(group_by, key))
        ax.plot(block["t"], block["mean"], label=label)
        ax.fill_between(block["t"], block["lo"], block["hi"], alpha=0.25)
    ax.set_xlabel("target samples")
    ax.set_ylabel(value_col)
    ax.legend()
    return bands


def plot_regret_vs_sweep_axis(ax, df, axis: str, value_col: str):
    """Summary-CSV means against one sweep axis, band from the CI columns."""
    for col in (axis, value_col, "ci95_lo", "ci95_hi"):
        if col not in df.columns:
            raise SchemaError(f"summary CSV missing column {col!r}")
    block = df.sort_values(axis)
    ax.plot(block[axis], block[value_col], marker="o")
    ax.fill_between(block[axis], block["ci95_lo"], block["ci95_hi"], alpha=0.25)
    ax.set_xlabel(axis)
    ax.set_ylabel(value_col)
    return block


def build_figure(args) -> tuple:
    fig, ax = plt.subplots(figsize=(6, 4))
    if args.kind == "regret-vs-n":
        df = load_csv(args.input, ["config_id", "seed", "t", args.value])
        table = plot_regret_vs_n(ax, df, args.value, args.group_by)
    else:
        df = load_csv(args.input, ["config_id"])
        table = plot_regret_vs_sweep_axis(ax, df, args.axis, args.value)
    fig.tight_layout()
    return fig, table


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", required=True, help="results or summary CSV")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--kind",
        choices=["regret-vs-n", "regret-vs-sweep-axis"],
        default="regret-vs-n",
    )
    parser.add_argument("--value", default="cum_regret", help="value column")
    parser.add_argument(
        "--group-by", nargs="+", default=["config_id"], help="grouping columns"
    )
    parser.add_argument("--axis", default=None, help="sweep axis column")
    args = parser.parse_args(argv)
    if args.kind == "regret-vs-sweep-axis" and not args.axis:
        print("--axis is required for regret-vs-sweep-axis", file=sys.stderr)
        return 2
    try:
        fig, table = build_figure(args)
        if args.kind == "regret-vs-n" and table.empty:
            print("no rows matched the grouping", file=sys.stderr)
            return 1
        save_figure(fig, args.out)
        plt.close(fig)
    except (SchemaError, FileNotFoundError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
