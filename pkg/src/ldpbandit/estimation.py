"""Privatized accumulators, reward estimators and confidence radii.

For every (bin, arm) pair the learner keeps, per data source m (0 is the
target stream, 1..M the auxiliary datasets), the running sums of the released
noisy statistics and the number of time steps the bin has been active.  The
reward estimate is a ratio of source-weighted sums and the confidence radius
scales the same weighted denominator against the dominant noise term,

    lambda_m = |eps_m^2 * sum_u_m / count_m| ^ 1{count_m >= log^2 n}   (0 if gated)
    estimate = sum_m lambda_m sum_v_m / sum_m lambda_m sum_u_m          (0/0 := 0)
    radius   = sqrt(C_n * sum_m lambda_m^2 * max(eps_m^-2 count_m, sum_u_m))
               / (sum_m lambda_m sum_u_m),   C_n = c_conf * log n.

Because Laplace noise is signed, a weighted denominator can come out zero or
negative before enough data accrues; the radius is then the +inf sentinel and
the estimate 0, which disables both elimination and refinement for the arm.
Natural logarithms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .partition import BinGeometry
from .privacy import PrivatizedCellUpdate

#: Default confidence-radius constant, calibrated so that the Monte Carlo
#: coverage of |estimate - population counterpart| <= radius exceeds 0.99 in
#: the reference d=1, K=2, eps=2 setting.
DEFAULT_C_CONF = 48.0


@dataclass(frozen=True)
class EstimatorConfig:
    """Constants shared by all estimator evaluations of one run.

    n is the maximum sample size across the target and auxiliary datasets;
    epsilons lists the budgets (target first, then sources in order).
    """

    c_conf: float
    n: int
    epsilons: tuple[float, ...]

    def __post_init__(self):
        if not self.c_conf > 0:
            raise ValueError("c_conf must be positive")
        if self.n < 3:
            raise ValueError("n must be at least 3 so that log^2 n > 1")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("all budgets must be positive")

    @property
    def n_sources(self) -> int:
        return len(self.epsilons)

    @property
    def gate(self) -> float:
        """Minimum active-step count log^2(n) before a source carries weight."""
        return math.log(self.n) ** 2

    @property
    def c_n(self) -> float:
        return self.c_conf * math.log(self.n)


class ArmCell:
    """Per-(bin, arm) accumulators, one slot per source.

    count records how many time steps the owning bin has been active for each
    source; it is bumped once per step by the policy, not per arm.  The cell
    is frozen when its bin is refined: past privatized information cannot be
    re-queried at the finer scale, so child bins start from scratch.
    """

    __slots__ = ("sum_v", "sum_u", "count", "frozen")

    def __init__(self, n_sources: int):
        self.sum_v = np.zeros(n_sources)
        self.sum_u = np.zeros(n_sources)
        self.count = np.zeros(n_sources)
        self.frozen = False

    def accumulate(self, m: int, update: PrivatizedCellUpdate) -> None:
        if self.frozen:
            raise RuntimeError("cannot accumulate into a frozen cell")
        self.sum_v[m] += update.v_tilde
        self.sum_u[m] += update.u_tilde

    def bump_count(self, m: int) -> None:
        if self.frozen:
            raise RuntimeError("cannot bump the count of a frozen cell")
        self.count[m] += 1

    def freeze(self) -> None:
        self.frozen = True


def weight_array(
    sum_u: np.ndarray,
    count: np.ndarray,
    epsilons: np.ndarray,
    gate: float,
) -> np.ndarray:
    """Source weights for stacked accumulators.

    Shapes: sum_u (..., M+1, K), count (..., M+1), epsilons (M+1,).
    A non-private source (eps = inf) past the gate gets weight exactly 1.
    """
    eps = np.asarray(epsilons, dtype=float)
    finite = np.where(np.isinf(eps), 1.0, eps)[..., :, None]
    passed = (count >= gate)[..., :, None]
    safe_count = np.maximum(count, 1.0)[..., :, None]
    base = np.minimum(np.abs(finite**2 * sum_u / safe_count), 1.0)
    base = np.where(np.isinf(eps)[..., :, None], 1.0, base)
    return np.where(passed, base, 0.0)


def moments_array(
    sum_v: np.ndarray,
    sum_u: np.ndarray,
    count: np.ndarray,
    weights: np.ndarray,
    epsilons: np.ndarray,
    c_n: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimates and radii for stacked accumulators; radii use inf as sentinel.

    Shapes as in :func:`weight_array`; returns two (..., K) arrays.
    """
    eps = np.asarray(epsilons, dtype=float)
    den = np.sum(weights * sum_u, axis=-2)
    usable = den > 0
    safe_den = np.where(usable, den, 1.0)
    est = np.where(usable, np.sum(weights * sum_v, axis=-2) / safe_den, 0.0)
    inv_eps2 = np.where(np.isinf(eps), 0.0, eps**-2.0)[..., :, None]
    per_source = np.maximum(inv_eps2 * count[..., :, None], sum_u)
    rad_num = c_n * np.sum(weights**2 * per_source, axis=-2)
    rad = np.where(usable, np.sqrt(np.maximum(rad_num, 0.0)) / safe_den, np.inf)
    return est, rad


def lambda_weight(cell: ArmCell, m: int, config: EstimatorConfig) -> float:
    """Weight of source m for one cell; always in [0, 1]."""
    eps = np.asarray(config.epsilons)
    lam = weight_array(cell.sum_u[:, None], cell.count, eps, config.gate)
    return float(lam[m, 0])


def all_weights(cell: ArmCell, config: EstimatorConfig) -> np.ndarray:
    """Vector of lambda_weight over all sources of one cell."""
    eps = np.asarray(config.epsilons)
    return weight_array(cell.sum_u[:, None], cell.count, eps, config.gate)[:, 0]


def estimate(cell: ArmCell, weights: Sequence[float]) -> float:
    """Weighted ratio estimate of the arm's reward in the owning bin."""
    w = np.asarray(weights, dtype=float)
    den = float(np.sum(w * cell.sum_u))
    if den <= 0.0:
        return 0.0
    return float(np.sum(w * cell.sum_v)) / den


def radius(cell: ArmCell, weights: Sequence[float], config: EstimatorConfig) -> float:
    """Confidence radius of :func:`estimate`; math.inf when no usable data."""
    w = np.asarray(weights, dtype=float)[:, None]
    eps = np.asarray(config.epsilons)
    _, rad = moments_array(
        cell.sum_v[:, None], cell.sum_u[:, None], cell.count, w, eps, config.c_n
    )
    return float(rad[0])


def population_oracle(
    history: Iterable[tuple[int, Sequence[float], int]],
    geometry: BinGeometry,
    window: tuple[int, int],
    arm: int,
    reward_fn: Callable[[int, Sequence[float]], float],
) -> float:
    """Population counterpart of the private estimate, from the raw history.

    history holds (step, context, played arm) rows; window is the half-open
    [start, end) range of steps during which the bin was active.  Returns the
    average of f_arm over the raw hits, with the 0/0 := 0 convention.
    Test-only: requires the synthetic reward functions and unprivatized logs.
    """
    lo, hi = window
    num = 0.0
    den = 0.0
    for step, x, played in history:
        if lo <= step < hi and played == arm and geometry.contains(x):
            num += reward_fn(arm, x)
            den += 1.0
    return num / den if den > 0 else 0.0
