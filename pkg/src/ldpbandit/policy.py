"""Learner state machine: arm selection, elimination, refinement, jump-start.

The policy maintains the active dyadic partition, per-bin active arm sets and
per-(bin, arm, source) privatized accumulators.  Each incoming interaction
(auxiliary during the jump-start, then target) updates every active bin's
accumulators for its source, after which each bin is checked for arm
elimination and then for refinement, in deterministic bin-id order.  Bins
created during a step are not processed until the next step.

Accumulators live in flat numpy arrays indexed by bin row so the per-step
work is a handful of vectorized operations; :meth:`Policy.cells` materializes
the per-(bin, arm) view when object-level access is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import estimation
from .environments import BanditSample
from .estimation import DEFAULT_C_CONF, EstimatorConfig
from .partition import ROOT, BinId, PartitionTree, tau


@dataclass(frozen=True)
class PolicyConfig:
    """Static parameters of one learner instance."""

    n_arms: int
    dim: int
    epsilon: float
    n_target: int
    source_epsilons: tuple[float, ...] = ()
    source_sizes: tuple[int, ...] = ()
    c_conf: float = DEFAULT_C_CONF
    max_depth: Optional[int] = None

    def __post_init__(self):
        if self.n_arms < 1:
            raise ValueError("need at least one arm")
        if self.n_target < 1:
            raise ValueError("n_target must be positive")
        if len(self.source_epsilons) != len(self.source_sizes):
            raise ValueError("one budget per auxiliary dataset required")

    @property
    def n_aux(self) -> int:
        return len(self.source_epsilons)

    @property
    def max_sample_size(self) -> int:
        return max(self.n_target, *self.source_sizes) if self.source_sizes else self.n_target

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            c_conf=self.c_conf,
            n=self.max_sample_size,
            epsilons=(self.epsilon, *self.source_epsilons),
        )


@dataclass(frozen=True)
class StructuralEvent:
    """One elimination or refinement, with the quantities that fired it."""

    kind: str  # "elimination" | "refinement"
    step: int  # global interaction index (jump-start phases included), 1-based
    bin: BinId
    arm: Optional[int] = None
    children: Optional[tuple[BinId, BinId]] = None
    removed_upper: float = math.nan  # eliminations: estimate + 2 radius of the loser
    winner_lower: float = math.nan  # eliminations: best estimate - 2 radius
    fired_radius: float = math.nan  # refinements: the radius that undercut tau
    threshold: float = math.nan  # refinements: tau(depth, d)
    target_count: float = math.nan  # source-0 count of the bin when fired

    @property
    def detail(self) -> str:
        if self.kind == "elimination":
            return f"arm={self.arm}"
        c1, c2 = self.children
        return f"children={c1.depth}:{c1.index}|{c2.depth}:{c2.index}"


@dataclass
class StepRow:
    """Per-step log entry; regret is filled by the caller when computable."""

    step: int
    source: int
    x: tuple[float, ...]
    arm: int
    reward: float
    regret: float = math.nan


@dataclass
class RunRecord:
    """Full log of one run: per-step rows plus structural events."""

    steps: list[StepRow] = field(default_factory=list)
    events: list[StructuralEvent] = field(default_factory=list)
    aux_total: int = 0
    n_target: int = 0

    def to_bytes(self) -> bytes:
        """Deterministic serialization, for replay comparisons."""
        lines = []
        for s in self.steps:
            xs = ",".join(repr(v) for v in s.x)
            lines.append(f"{s.step};{s.source};{xs};{s.arm};{s.reward!r};{s.regret!r}")
        for e in self.events:
            lines.append(f"{e.kind};{e.step};{e.bin.depth};{e.bin.index};{e.detail}")
        return "\n".join(lines).encode()


class Policy:
    """Successive-elimination learner over an adaptive dyadic partition."""

    def __init__(
        self,
        config: PolicyConfig,
        rng_arm: Optional[np.random.Generator] = None,
        rng_noise: Optional[np.random.Generator] = None,
        rng_tie: Optional[np.random.Generator] = None,
    ):
        self.config = config
        self.est_config = config.estimator_config()
        self.n_arms = config.n_arms
        self._rng_arm = rng_arm if rng_arm is not None else np.random.default_rng()
        self._rng_noise = rng_noise if rng_noise is not None else np.random.default_rng()
        self.tree = PartitionTree(config.dim, rng_tie, config.max_depth)
        self.events: list[StructuralEvent] = []
        self.t = 0  # global steps completed
        self.progress = [0] * (config.n_aux + 1)  # T_m per source (target first)

        m1, k = self.est_config.n_sources, self.n_arms
        cap = 16
        self._sum_v = np.zeros((cap, m1, k))
        self._sum_u = np.zeros((cap, m1, k))
        self._count = np.zeros((cap, m1))
        self._arm_active = np.zeros((cap, k), dtype=bool)
        self._depth = np.zeros(cap, dtype=np.int64)
        self._born_step = np.zeros(cap, dtype=np.int64)
        self._dead_step = np.full(cap, np.iinfo(np.int64).max, dtype=np.int64)
        self._n_rows = 0
        self._row_of: dict[BinId, int] = {}
        self._id_of: list[BinId] = []

        self._eps = np.asarray(self.est_config.epsilons)
        self._use_weights = config.n_aux > 0
        self._gate_target = math.log(config.n_target) ** 2
        self._tau = np.array(
            [tau(s, config.dim) for s in range(self.tree.max_depth + 2)]
        )

        root_row = self._new_row(ROOT, np.ones(k, dtype=bool))
        self._active_rows = np.array([root_row])

    # ------------------------------------------------------------------ state

    def _new_row(self, bid: BinId, arm_mask: np.ndarray) -> int:
        if self._n_rows == self._sum_v.shape[0]:
            grow = self._sum_v.shape[0]
            self._sum_v = np.concatenate([self._sum_v, np.zeros_like(self._sum_v)])
            self._sum_u = np.concatenate([self._sum_u, np.zeros_like(self._sum_u)])
            self._count = np.concatenate([self._count, np.zeros_like(self._count)])
            self._arm_active = np.concatenate(
                [self._arm_active, np.zeros_like(self._arm_active)]
            )
            self._depth = np.concatenate([self._depth, np.zeros(grow, dtype=np.int64)])
            self._born_step = np.concatenate(
                [self._born_step, np.zeros(grow, dtype=np.int64)]
            )
            self._dead_step = np.concatenate(
                [self._dead_step, np.full(grow, np.iinfo(np.int64).max, dtype=np.int64)]
            )
        row = self._n_rows
        self._n_rows += 1
        self._arm_active[row] = arm_mask
        self._depth[row] = bid.depth
        self._born_step[row] = self.t + 1  # first step the bin participates in
        self._row_of[bid] = row
        self._id_of.append(bid)
        return row

    def _rebuild_active_rows(self) -> None:
        self._active_rows = np.array(
            [self._row_of[bid] for bid in self.tree.active_bins()], dtype=np.int64
        )

    @property
    def n_active_bins(self) -> int:
        return self.tree.n_active

    @property
    def total_active_arms(self) -> int:
        return int(self._arm_active[self._active_rows].sum())

    def active_arms(self, bid: BinId) -> list[int]:
        """Active arm labels (1-based, ascending) of an active bin."""
        if not self.tree.is_active(bid):
            raise ValueError(f"bin {bid} is not active")
        mask = self._arm_active[self._row_of[bid]]
        return [k + 1 for k in range(self.n_arms) if mask[k]]

    def arm_sets(self) -> dict[BinId, list[int]]:
        return {bid: self.active_arms(bid) for bid in self.tree.active_bins()}

    def active_arms_at(self, x: Sequence[float]) -> list[int]:
        return self.active_arms(self.tree.locate(x))

    def bin_window(self, bid: BinId) -> tuple[int, int]:
        """Half-open range of global steps during which the bin was active."""
        row = self._row_of[bid]
        end = self._dead_step[row]
        return int(self._born_step[row]), int(min(end, self.t + 1))

    def cells(self) -> dict[tuple[BinId, int], estimation.ArmCell]:
        """Materialized per-(bin, arm) accumulators for the active partition."""
        out: dict[tuple[BinId, int], estimation.ArmCell] = {}
        for bid in self.tree.active_bins():
            row = self._row_of[bid]
            for k in range(self.n_arms):
                cell = estimation.ArmCell(self.est_config.n_sources)
                cell.sum_v[:] = self._sum_v[row, :, k]
                cell.sum_u[:] = self._sum_u[row, :, k]
                cell.count[:] = self._count[row]
                out[(bid, k + 1)] = cell
        return out

    def snapshot(self) -> dict:
        """JSON-serializable partition + accumulator state for post-hoc analysis."""
        snap = self.tree.snapshot()
        for entry in snap["bins"]:
            bid = BinId(entry["depth"], entry["index"])
            row = self._row_of[bid]
            entry["active_arms"] = self.active_arms(bid)
            entry["count"] = [float(c) for c in self._count[row]]
            entry["sum_v"] = [[float(v) for v in col] for col in self._sum_v[row]]
            entry["sum_u"] = [[float(v) for v in col] for col in self._sum_u[row]]
        snap["step"] = self.t
        return snap

    # ---------------------------------------------------------------- moments

    def _moments(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Estimates and radii, shape (len(rows), K), for the given bin rows."""
        sum_v = self._sum_v[rows]
        sum_u = self._sum_u[rows]
        count = self._count[rows]
        if self._use_weights:
            lam = estimation.weight_array(sum_u, count, self._eps, self.est_config.gate)
        else:
            lam = np.ones_like(sum_u)
        return estimation.moments_array(
            sum_v, sum_u, count, lam, self._eps, self.est_config.c_n
        )

    def bin_moments(self, bid: BinId) -> tuple[np.ndarray, np.ndarray]:
        """Estimate and radius vectors (all K arm slots) for one active bin."""
        est, rad = self._moments(np.array([self._row_of[bid]]))
        return est[0], rad[0]

    # ------------------------------------------------------------------ steps

    def select_arm(self, x: Sequence[float]) -> int:
        """Uniform draw from the active arm set of the bin containing x."""
        arms = self.active_arms_at(x)
        return arms[int(self._rng_arm.integers(len(arms)))]

    def step_target(
        self, x: Sequence[float], env, rng_reward: np.random.Generator
    ) -> StepRow:
        """One on-policy interaction with the target stream (source 0)."""
        if any(
            self.progress[m + 1] != self.config.source_sizes[m]
            for m in range(self.config.n_aux)
        ):
            raise RuntimeError("jump-start must be completed before target steps")
        arm = self.select_arm(x)
        reward = float(env.draw_reward(arm, x, rng_reward))
        self._ingest(0, x, arm, reward)
        return StepRow(self.t, 0, tuple(float(v) for v in x), arm, reward)

    def step_aux(self, m: int, sample: BanditSample) -> StepRow:
        """Consume one auxiliary record from source m (1-based), off-policy."""
        if not 1 <= m <= self.config.n_aux:
            raise ValueError(f"source index {m} out of range")
        if not 1 <= sample.arm <= self.n_arms:
            raise ValueError(f"behavior arm {sample.arm} outside [1, {self.n_arms}]")
        if self.progress[0] > 0:
            raise RuntimeError("auxiliary data must precede target interaction")
        if any(
            self.progress[mm] != self.config.source_sizes[mm - 1] for mm in range(1, m)
        ):
            raise RuntimeError("auxiliary datasets must be consumed in order")
        if self.progress[m] >= self.config.source_sizes[m - 1]:
            raise RuntimeError(f"source {m} already fully consumed")
        self._ingest(m, sample.x, sample.arm, float(sample.reward))
        return StepRow(
            self.t, m, tuple(float(v) for v in sample.x), sample.arm, float(sample.reward)
        )

    def _ingest(self, m: int, x: Sequence[float], arm: int, reward: float) -> None:
        rows = self._active_rows
        eps_m = self._eps[m]
        if not math.isinf(eps_m):
            scale = 4.0 / eps_m
            mask = self._arm_active[rows]
            noise = self._rng_noise.laplace(0.0, scale, size=(2, rows.size, self.n_arms))
            self._sum_v[rows, m] += np.where(mask, noise[0], 0.0)
            self._sum_u[rows, m] += np.where(mask, noise[1], 0.0)
        hit_row = self._row_of[self.tree.locate(x)]
        if self._arm_active[hit_row, arm - 1]:
            self._sum_v[hit_row, m, arm - 1] += reward
            self._sum_u[hit_row, m, arm - 1] += 1.0
        self._count[rows, m] += 1.0
        self.t += 1
        self.progress[m] += 1
        self._structural_phase()

    # ------------------------------------------------------- structural phase

    def _structural_phase(self) -> None:
        """Eliminate then refine for every bin active at the start of the step."""
        rows = self._active_rows
        est, rad = self._moments(rows)
        mask = self._arm_active[rows]
        finite = mask & np.isfinite(rad) & (rad > 0.0)
        lower = np.where(finite, est - 2.0 * rad, -np.inf)
        upper = np.where(finite, est + 2.0 * rad, np.inf)
        best_lower = lower.max(axis=1)
        if self._use_weights:
            gate_ok = np.ones(rows.size, dtype=bool)
        else:
            gate_ok = self._count[rows, 0] >= self._gate_target
        elim_hit = gate_ok & (upper < best_lower[:, None]).any(axis=1)
        rad_masked = np.where(finite, rad, np.inf)
        refine_hit = (rad_masked < self._tau[self._depth[rows]][:, None]).any(axis=1)
        if not (elim_hit.any() or refine_hit.any()):
            return
        for i in np.flatnonzero(elim_hit | refine_hit):
            row = int(rows[i])
            if elim_hit[i]:
                self.try_eliminate(self._id_of[row])
            if refine_hit[i]:
                self.try_refine(self._id_of[row])

    def try_eliminate(self, bid: BinId) -> list[int]:
        """Remove every active arm whose upper bound falls below the best lower bound.

        The arm maximizing estimate - 2 radius can never satisfy the removal
        inequality, so at least one arm always survives.  In the no-transfer
        configuration eliminations additionally require the bin's target
        count to reach log^2(n_target).
        """
        if not self.tree.is_active(bid):
            raise ValueError(f"bin {bid} is not active")
        row = self._row_of[bid]
        if not self._use_weights and self._count[row, 0] < self._gate_target:
            return []
        est, rad = self.bin_moments(bid)
        mask = self._arm_active[row]
        finite = mask & np.isfinite(rad) & (rad > 0.0)
        if finite.sum() < 2:
            return []
        lower = np.where(finite, est - 2.0 * rad, -np.inf)
        best_lower = float(lower.max())
        removed = []
        for k in np.flatnonzero(finite):
            if est[k] + 2.0 * rad[k] < best_lower:
                self._arm_active[row, k] = False
                removed.append(int(k) + 1)
                self.events.append(
                    StructuralEvent(
                        kind="elimination",
                        step=self.t,
                        bin=bid,
                        arm=int(k) + 1,
                        removed_upper=float(est[k] + 2.0 * rad[k]),
                        winner_lower=best_lower,
                        target_count=float(self._count[row, 0]),
                    )
                )
        return removed

    def try_refine(self, bid: BinId) -> Optional[tuple[BinId, BinId]]:
        """Split the bin when some active arm's radius undercuts tau(depth, d).

        Children inherit the parent's active arm set and start with empty
        accumulators: refined-away statistics stay frozen with the parent.
        Returns None when no arm qualifies or the depth cap suppresses the
        split (the tree logs a warning).
        """
        if not self.tree.is_active(bid):
            raise ValueError(f"bin {bid} is not active")
        row = self._row_of[bid]
        est, rad = self.bin_moments(bid)
        mask = self._arm_active[row]
        finite = mask & np.isfinite(rad)
        threshold = self._tau[bid.depth]
        qualifying = finite & (rad < threshold)
        if not qualifying.any():
            return None
        kids = self.tree.refine(bid)
        if kids is None:  # depth cap
            return None
        arm_mask = self._arm_active[row].copy()
        for kid in kids:
            self._new_row(kid, arm_mask)
        self._dead_step[row] = self.t + 1  # active range is [born, dead)
        self._rebuild_active_rows()
        self.events.append(
            StructuralEvent(
                kind="refinement",
                step=self.t,
                bin=bid,
                children=kids,
                fired_radius=float(rad[qualifying].min()),
                threshold=float(threshold),
                target_count=float(self._count[row, 0]),
            )
        )
        return kids


def run_policy(
    policy: Policy,
    env,
    aux_datasets: Sequence[Sequence[BanditSample]],
    rng_context: np.random.Generator,
    rng_reward: np.random.Generator,
    on_step: Optional[Callable[[Policy, StepRow], None]] = None,
) -> RunRecord:
    """Consume the auxiliary datasets in order, then run the target phase.

    Instantaneous regret is filled in for target steps when the environment
    can compute it.  ``on_step`` (if given) observes the policy after every
    step, e.g. to collect probe metrics.
    """
    if len(aux_datasets) != policy.config.n_aux:
        raise ValueError("one dataset per configured source required")
    for m, dataset in enumerate(aux_datasets, start=1):
        if len(dataset) != policy.config.source_sizes[m - 1]:
            raise ValueError(f"source {m} size mismatch")
    record = RunRecord(
        aux_total=sum(policy.config.source_sizes), n_target=policy.config.n_target
    )
    for m, dataset in enumerate(aux_datasets, start=1):
        for sample in dataset:
            row = policy.step_aux(m, sample)
            record.steps.append(row)
            if on_step is not None:
                on_step(policy, row)
    for _ in range(policy.config.n_target):
        x = env.sample_context(rng_context)
        row = policy.step_target(x, env, rng_reward)
        row.regret = float(env.instant_regret(x, row.arm))
        record.steps.append(row)
        if on_step is not None:
            on_step(policy, row)
    record.events = list(policy.events)
    return record
