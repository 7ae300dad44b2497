"""Per-user Laplace privatization of bin/arm statistics.

Each interaction produces, for every active bin and every active arm of that
bin, a raw pair (v, u): v is the reward if this (bin, arm) was hit and 0
otherwise, u the hit indicator.  Both coordinates are released with additive
Laplace noise of scale 4/epsilon.  The factor 4 encodes an even
epsilon/2-epsilon/2 budget split between the v-family and the u-family,
each of which has L1 sensitivity 2: changing one user's record moves at most
two (bin, arm) keys per family, each by at most 1.

Every key in scope receives an update even when the raw values are zero;
skipping a key would reveal that the user's covariate fell elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .partition import BinGeometry, BinId


@dataclass(frozen=True)
class PrivacyBudget:
    """Per-dataset privacy level; epsilon = inf encodes the non-private limit."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def noise_scale(self) -> float:
        """Laplace scale 4/epsilon applied to each released coordinate (0 when non-private)."""
        return 0.0 if math.isinf(self.epsilon) else 4.0 / self.epsilon


@dataclass(frozen=True)
class RawCellUpdate:
    """Unreleased per-key statistic: v = reward * hit indicator, u = hit indicator."""

    v: float
    u: float

    def __post_init__(self):
        if self.u not in (0.0, 1.0):
            raise ValueError("u must be 0 or 1")
        if not 0.0 <= self.v <= 1.0:
            raise ValueError("v must lie in [0, 1]")
        if self.u == 0.0 and self.v != 0.0:
            raise ValueError("v must be 0 when the key was not hit")


@dataclass(frozen=True)
class PrivatizedCellUpdate:
    """Released per-key statistic; unbounded because the noise is."""

    v_tilde: float
    u_tilde: float


#: Message sent by one user: (bin, arm) -> privatized update, covering every
#: active bin and every active arm of that bin.
UserMessage = dict[tuple[BinId, int], PrivatizedCellUpdate]


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    """One draw of scale * standard Laplace; scale 0 returns exactly 0."""
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    if scale == 0.0:
        return 0.0
    return float(rng.laplace(0.0, scale))


def privatize(
    raw: RawCellUpdate, budget: PrivacyBudget, rng: np.random.Generator
) -> PrivatizedCellUpdate:
    """Release one raw pair with independent Laplace(4/epsilon) noise per coordinate."""
    scale = budget.noise_scale
    return PrivatizedCellUpdate(
        v_tilde=raw.v + laplace_sample(scale, rng),
        u_tilde=raw.u + laplace_sample(scale, rng),
    )


def raw_user_values(
    x: Sequence[float],
    arm: int,
    reward: float,
    bins: Mapping[BinId, BinGeometry],
    arm_sets: Mapping[BinId, Sequence[int]],
) -> dict[tuple[BinId, int], RawCellUpdate]:
    """Raw (v, u) values for every in-scope (bin, arm) key of one interaction.

    At most one key carries nonzero values: the (bin containing x, arm) key,
    and only if that arm is still in the bin's active set.
    """
    values: dict[tuple[BinId, int], RawCellUpdate] = {}
    for bid in sorted(bins):
        hit_bin = bins[bid].contains(x)
        for k in arm_sets[bid]:
            if hit_bin and k == arm:
                values[(bid, k)] = RawCellUpdate(v=float(reward), u=1.0)
            else:
                values[(bid, k)] = RawCellUpdate(v=0.0, u=0.0)
    return values


def build_user_message(
    x: Sequence[float],
    arm: int,
    reward: float,
    bins: Mapping[BinId, BinGeometry],
    arm_sets: Mapping[BinId, Sequence[int]],
    budget: PrivacyBudget,
    rng: np.random.Generator,
    strict: bool = True,
) -> UserMessage:
    """Privatize one interaction into a full user message.

    Keys are processed in sorted order so noise draws are replayable.  With
    ``strict`` (the on-policy case) the pulled arm must be active in the bin
    containing x; behavior-policy records may reference an already-eliminated
    arm, in which case the hit key is simply out of scope and the message
    carries no signal (pass ``strict=False``).
    """
    if strict:
        home = next(bid for bid in bins if bins[bid].contains(x))
        if arm not in arm_sets[home]:
            raise ValueError(f"arm {arm} not active in bin {home}")
    raw = raw_user_values(x, arm, reward, bins, arm_sets)
    return {key: privatize(val, budget, rng) for key, val in sorted(raw.items())}


def ldp_log_ratio(
    z: tuple[Sequence[float], int, float],
    z_prime: tuple[Sequence[float], int, float],
    bins: Mapping[BinId, BinGeometry],
    arm_sets: Mapping[BinId, Sequence[int]],
    budget: PrivacyBudget,
) -> float:
    """Supremum over outputs of the log density ratio of two raw records.

    For a product of Laplace noises with common scale b, the supremum equals
    the L1 distance between the raw vectors divided by b.  Test utility: the
    mechanism is epsilon-LDP iff this never exceeds epsilon.
    """
    raw_a = raw_user_values(*z, bins=bins, arm_sets=arm_sets)
    raw_b = raw_user_values(*z_prime, bins=bins, arm_sets=arm_sets)
    l1 = sum(
        abs(raw_a[key].v - raw_b[key].v) + abs(raw_a[key].u - raw_b[key].u)
        for key in raw_a
    )
    scale = budget.noise_scale
    if scale == 0.0:
        return 0.0 if l1 == 0.0 else math.inf
    return l1 / scale
