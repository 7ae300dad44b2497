"""Shared CSV loading and confidence-band computation."""

from __future__ import annotations

import math
from pathlib import Path

import pandas as pd

Z95 = 1.96


class SchemaError(ValueError):
    """An input CSV is missing columns the plot needs."""


def load_csv(path: str | Path, required: list[str]) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [col for col in required if col not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    return df


def confidence_bands(
    df: pd.DataFrame,
    x_col: str,
    value_col: str,
    group_cols: list[str],
    z: float = Z95,
) -> pd.DataFrame:
    """Mean and normal-approximation CI of value_col across seeds.

    Rows sharing (group columns, x) are treated as independent replications;
    with a single replication the band collapses onto the mean.  Returns a
    frame with columns group_cols + [x_col, mean, lo, hi, n].
    """
    grouped = df.groupby(group_cols + [x_col])[value_col]
    out = grouped.agg(["mean", "std", "count"]).reset_index()
    half = z * out["std"].fillna(0.0) / out["count"].pow(0.5)
    out["lo"] = out["mean"] - half.fillna(0.0)
    out["hi"] = out["mean"] + half.fillna(0.0)
    out.loc[out["count"] < 2, ["lo", "hi"]] = out.loc[
        out["count"] < 2, ["mean", "mean"]
    ].to_numpy()
    return out.drop(columns="std").sort_values(group_cols + [x_col]).reset_index(drop=True)


def save_figure(fig, out_path: str | Path) -> None:
    """Write the figure without embedded timestamps so output is replayable."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120, metadata={"Software": "banditplots"})
