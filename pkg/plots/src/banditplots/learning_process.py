"""Learning-process figure: local regret and arm ratios with event markers.

Three stacked panels for one run (one seed of one config): the running
global average regret, the local average regret at the probe point, and a
stacked area chart of the arm-selection ratios.  Elimination events from the
events CSV appear as vertical dashed markers on the lower panels.

Standalone script: ``--input results.csv --events events.csv --out fig.png``.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bands import SchemaError, load_csv, save_figure


def arm_ratio_columns(df) -> list[str]:
    cols = sorted(
        (c for c in df.columns if c.startswith("arm_ratio_")),
        key=lambda c: int(c.rsplit("_", 1)[1]),
    )
    if not cols:
        raise SchemaError("results CSV has no arm_ratio_* columns")
    return cols


def select_run(df, config_id, seed):
    if config_id is None:
        config_id = df["config_id"].iloc[0]
    block = df[df["config_id"] == config_id]
    if block.empty:
        raise SchemaError(f"no rows for config_id {config_id!r}")
    if seed is None:
        seed = block["seed"].min()
    block = block[block["seed"] == seed]
    if block.empty:
        raise SchemaError(f"no rows for seed {seed!r}")
    return block.sort_values("t"), config_id, seed


def build_figure(results_path, events_path, config_id=None, seed=None):
    df = load_csv(
        results_path,
        ["config_id", "seed", "t", "global_avg_regret", "local_avg_regret"],
    )
    ratio_cols = arm_ratio_columns(df)
    block, config_id, seed = select_run(df, config_id, seed)

    marker_ts: list[int] = []
    if events_path is not None:
        events = load_csv(events_path, ["config_id", "seed", "t", "kind"])
        hits = events[
            (events["config_id"] == config_id)
            & (events["seed"] == seed)
            & (events["kind"] == "elimination")
        ]
        marker_ts = [int(v) for v in hits["t"]]

    fig, axes = plt.subplots(3, 1, figsize=(6, 8), sharex=True)
    axes[0].plot(block["t"], block["global_avg_regret"])
    axes[0].set_ylabel("global avg regret")
    axes[1].plot(block["t"], block["local_avg_regret"])
    axes[1].set_ylabel("local avg regret")
    ratios = [block[c].to_numpy() for c in ratio_cols]
    axes[2].stackplot(
        block["t"], ratios, labels=[c.replace("arm_ratio_", "arm ") for c in ratio_cols]
    )
    axes[2].set_ylabel("arm ratio")
    axes[2].set_xlabel("target step")
    axes[2].set_ylim(0.0, 1.0)
    axes[2].legend(loc="upper right", fontsize="small")
    for ax in axes[1:]:
        for t in marker_ts:
            ax.axvline(t, color="black", linestyle="--", linewidth=1.0)
    fig.tight_layout()
    return fig, marker_ts, len(ratio_cols)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", required=True, help="results CSV")
    parser.add_argument("--events", default=None, help="events CSV (optional)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--config-id", default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        fig, _, _ = build_figure(args.input, args.events, args.config_id, args.seed)
        save_figure(fig, args.out)
        plt.close(fig)
    except (SchemaError, FileNotFoundError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
