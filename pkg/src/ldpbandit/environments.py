"""Synthetic bandit environments, behavior policies and the classification adapter.

The synthetic family places one logistic bump per arm along the first
coordinate: arm k (1-based) peaks at x^1 = k/K with value exactly 1.  Target
contexts are uniform on [0,1]^d; source contexts follow the density
proportional to ||x - 1/2||_inf^gamma, sampled by inverse transform on the
L_inf radius (CDF (2r)^(d+gamma)) followed by a uniform point on the cube
surface at that radius.  Rewards are Bernoulli with mean f_k(x) by default.

Classification datasets are converted to bandit instances by treating the K
classes as arms with indicator rewards 1(label = pulled arm).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class SyntheticEnvSpec:
    """Synthetic target environment: dimension, arms, reward family and noise."""

    d: int
    n_arms: int
    reward_family: str = "logistic_bump"
    noise: str = "bernoulli"
    noise_sd: float = 0.25

    def __post_init__(self):
        if self.d < 1 or self.n_arms < 2:
            raise ValueError("need d >= 1 and n_arms >= 2")
        if self.reward_family != "logistic_bump":
            raise ValueError(f"unknown reward family {self.reward_family!r}")
        if self.noise not in ("bernoulli", "truncated_gaussian"):
            raise ValueError(f"unknown noise model {self.noise!r}")


@dataclass(frozen=True)
class SourceSpec:
    """One auxiliary dataset: covariate-shift severity, exploration, budget, size.

    data points at an ingested classification CSV when the source is backed
    by real data instead of the synthetic shifted marginal (gamma is then
    whatever the file happens to contain and the field is ignored).
    """

    gamma: float
    kappa: float
    epsilon: float
    n_samples: int
    data: Optional[str] = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_samples < 0:
            raise ValueError("n_samples must be nonnegative")


@dataclass(frozen=True)
class BanditSample:
    """One logged interaction: context, behavior arm (1-based), reward in [0,1]."""

    x: tuple[float, ...]
    arm: int
    reward: float


@dataclass(frozen=True)
class ClassificationRow:
    """One classification example with features pre-scaled into the unit cube."""

    features: tuple[float, ...]
    label: int


def reward_mean(k: int, x: Sequence[float], n_arms: int) -> float:
    """Mean reward of arm k (1-based) at context x: a logistic bump at x^1 = k/K."""
    u = math.exp(-2.0 * n_arms**2 * (x[0] - k / n_arms) ** 2)
    return 2.0 * u / (1.0 + u)


def sample_target_context(d: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from the uniform target marginal on [0,1]^d."""
    return rng.random(d)


def sample_source_context(gamma: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from the density proportional to ||x - 1/2||_inf^gamma on [0,1]^d.

    Radial decomposition: the L_inf radius R around the cube center has CDF
    (2r)^(d+gamma) on [0, 1/2] (shell integration of s^gamma times the surface
    d 2^d s^(d-1)), so R = U^(1/(d+gamma)) / 2; given R the point is uniform
    on the cube surface of radius R: pick one of the 2d faces uniformly, pin
    that coordinate, and draw the rest uniformly in [-R, R] around 1/2.
    gamma = 0 recovers the uniform distribution.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    r = 0.5 * rng.random() ** (1.0 / (d + gamma))
    x = 0.5 + r * (2.0 * rng.random(d) - 1.0)
    face = int(rng.integers(2 * d))
    x[face % d] = 0.5 + r if face < d else 0.5 - r
    return x


def behavior_policy_vector(kappa: float, n_arms: int) -> np.ndarray:
    """Arm probabilities kappa/K + (2-2kappa)/(K(K-1)) * (0, ..., K-1).

    Entry i is the probability of arm i+1; the minimum entry is kappa/K, so
    K times the minimum recovers the exploration coefficient.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    if n_arms < 2:
        raise ValueError("need at least 2 arms")
    ramp = np.arange(n_arms, dtype=float)
    return kappa / n_arms + (2.0 - 2.0 * kappa) / (n_arms * (n_arms - 1)) * ramp


def draw_reward(
    k: int, x: Sequence[float], spec: SyntheticEnvSpec, rng: np.random.Generator
) -> float:
    """One reward draw for arm k at x, supported in [0, 1] with mean f_k(x)."""
    mean = reward_mean(k, x, spec.n_arms)
    if spec.noise == "bernoulli":
        return 1.0 if rng.random() < mean else 0.0
    # Truncated Gaussian on [0,1] via rejection; acceptance is ~0.5 at worst
    # for sd <= 0.25, so this terminates quickly.
    while True:
        val = rng.normal(mean, spec.noise_sd)
        if 0.0 <= val <= 1.0:
            return float(val)


def gen_aux_dataset(
    source: SourceSpec, env: SyntheticEnvSpec, rng: np.random.Generator
) -> list[BanditSample]:
    """Historical dataset from a fixed behavior policy under the source marginal."""
    probs = behavior_policy_vector(source.kappa, env.n_arms)
    samples = []
    for _ in range(source.n_samples):
        x = sample_source_context(source.gamma, env.d, rng)
        arm = int(rng.choice(env.n_arms, p=probs)) + 1
        samples.append(BanditSample(tuple(x), arm, draw_reward(arm, x, env, rng)))
    return samples


def classification_to_bandit(
    rows: Sequence[ClassificationRow],
    role: str,
    rng: np.random.Generator,
    behavior: Optional[Sequence[float]] = None,
) -> list[ClassificationRow] | list[BanditSample]:
    """Convert classification rows into bandit data.

    role "target": returns the rows in a fresh random order; contexts are
    served sequentially and the reward of pulling arm k is 1(label = k).
    role "source": additionally draws a behavior arm per row and materializes
    the indicator reward, yielding a logged auxiliary dataset.
    """
    n_arms = max(row.label for row in rows) if rows else 0
    for row in rows:
        if not 1 <= row.label <= n_arms:
            raise ValueError(f"label {row.label} outside [1, {n_arms}]")
        if any(not 0.0 <= f <= 1.0 for f in row.features):
            raise ValueError("features must be scaled into the unit cube")
    order = rng.permutation(len(rows))
    permuted = [rows[i] for i in order]
    if role == "target":
        return permuted
    if role == "source":
        if behavior is None:
            raise ValueError("source role requires a behavior probability vector")
        probs = np.asarray(behavior, dtype=float)
        if probs.shape != (n_arms,) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("behavior vector must be a distribution over the arms")
        out = []
        for row in permuted:
            arm = int(rng.choice(n_arms, p=probs)) + 1
            out.append(
                BanditSample(row.features, arm, 1.0 if row.label == arm else 0.0)
            )
        return out
    raise ValueError(f"unknown role {role!r}")


def min_max_scale(
    matrix: np.ndarray, mins: Optional[np.ndarray] = None, maxs: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column min-max scaling to [0,1]; constant columns map to 0."""
    matrix = np.asarray(matrix, dtype=float)
    if mins is None:
        mins = matrix.min(axis=0)
    if maxs is None:
        maxs = matrix.max(axis=0)
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    scaled = np.clip((matrix - mins) / safe, 0.0, 1.0)
    scaled[:, span == 0] = 0.0
    return scaled, mins, maxs


def ingest_classification_csv(
    path: str | Path, d: int, label_column: str
) -> tuple[list[ClassificationRow], dict]:
    """Read a header+rows CSV, min-max scale the d feature columns, validate labels.

    Labels must be integers >= 1; the number of arms is the maximum label.
    Returns the scaled rows and a sidecar metadata dict holding the frozen
    scaling constants so ingestion is reproducible.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        feature_cols = [c for i, c in enumerate(header) if i != label_idx]
        if len(feature_cols) != d:
            raise ValueError(
                f"{path}: expected {d} feature columns, found {len(feature_cols)}"
            )
        features = []
        labels = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ValueError(f"{path}:{lineno}: wrong field count")
            raw_label = float(rec[label_idx])
            if raw_label != int(raw_label) or int(raw_label) < 1:
                raise ValueError(f"{path}:{lineno}: label must be an integer >= 1")
            labels.append(int(raw_label))
            features.append([float(v) for i, v in enumerate(rec) if i != label_idx])
    if not labels:
        raise ValueError(f"{path}: no data rows")
    scaled, mins, maxs = min_max_scale(np.array(features))
    rows = [
        ClassificationRow(tuple(float(v) for v in scaled[i]), labels[i])
        for i in range(len(labels))
    ]
    meta = {
        "source": path.name,
        "feature_columns": feature_cols,
        "label_column": label_column,
        "mins": [float(v) for v in mins],
        "maxs": [float(v) for v in maxs],
        "n_rows": len(rows),
        "n_arms": max(labels),
    }
    return rows, meta


def write_scaled_dataset(
    rows: Sequence[ClassificationRow], meta: dict, out_csv: str | Path, out_meta: str | Path
) -> None:
    """Write the scaled dataset plus its sidecar metadata file."""
    out_csv, out_meta = Path(out_csv), Path(out_meta)
    with out_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(meta["feature_columns"] + [meta["label_column"]])
        for row in rows:
            writer.writerow([repr(v) for v in row.features] + [row.label])
    out_meta.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


class SyntheticEnvironment:
    """Target environment with known reward functions (regret is computable)."""

    has_regret = True

    def __init__(self, spec: SyntheticEnvSpec):
        self.spec = spec
        self.d = spec.d
        self.n_arms = spec.n_arms

    def sample_context(self, rng: np.random.Generator) -> np.ndarray:
        return sample_target_context(self.d, rng)

    def reward_mean(self, k: int, x: Sequence[float]) -> float:
        return reward_mean(k, x, self.n_arms)

    def draw_reward(self, k: int, x: Sequence[float], rng: np.random.Generator) -> float:
        return draw_reward(k, x, self.spec, rng)

    def best_arm(self, x: Sequence[float]) -> int:
        """Pointwise argmax of the reward functions, ties toward the lowest arm."""
        values = [self.reward_mean(k, x) for k in range(1, self.n_arms + 1)]
        return int(np.argmax(values)) + 1

    def instant_regret(self, x: Sequence[float], k: int) -> float:
        return self.reward_mean(self.best_arm(x), x) - self.reward_mean(k, x)


class ClassificationEnvironment:
    """Target environment backed by a (permuted) classification dataset.

    Contexts are served in order; the reward of the pulled arm is the label
    indicator for the row that produced the current context.  The true class
    probabilities are unknown, so instantaneous regret is not available and
    runs are scored by cumulative reward instead.
    """

    has_regret = False

    def __init__(self, rows: Sequence[ClassificationRow], n_arms: Optional[int] = None):
        if not rows:
            raise ValueError("need at least one row")
        self.rows = list(rows)
        self.d = len(rows[0].features)
        self.n_arms = n_arms or max(row.label for row in rows)
        self._cursor = -1

    def sample_context(self, rng: np.random.Generator) -> np.ndarray:
        self._cursor += 1
        if self._cursor >= len(self.rows):
            raise RuntimeError("classification dataset exhausted")
        return np.asarray(self.rows[self._cursor].features)

    def draw_reward(self, k: int, x: Sequence[float], rng: np.random.Generator) -> float:
        return 1.0 if self.rows[self._cursor].label == k else 0.0

    def best_arm(self, x: Sequence[float]) -> int:
        raise NotImplementedError("true class probabilities are unknown")

    def instant_regret(self, x: Sequence[float], k: int) -> float:
        return math.nan
