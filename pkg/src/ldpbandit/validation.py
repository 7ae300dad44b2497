"""Fast self-checks behind the `validate` CLI command.

A trimmed version of the acceptance suite that runs in well under a minute:
the analytic LDP ratio bound, partition fuzzing, the source-sampler KS test
and the estimator reduction identities.  Each check returns (name, ok,
detail) so failures are reportable without raising.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from . import estimation, privacy
from .environments import sample_source_context
from .partition import PartitionTree, tau


def _random_state_view(rng: np.random.Generator, dim: int = 2, n_arms: int = 3):
    """A small random partition plus per-bin active arm subsets."""
    tree = PartitionTree(dim, rng)
    for _ in range(int(rng.integers(0, 5))):
        bins = tree.active_bins()
        tree.refine(bins[int(rng.integers(len(bins)))])
    bins = {bid: tree.geometry(bid) for bid in tree.active_bins()}
    arm_sets = {}
    for bid in bins:
        keep = 1 + int(rng.integers(n_arms))
        arms = sorted(rng.permutation(n_arms)[:keep] + 1)
        arm_sets[bid] = [int(a) for a in arms]
    return tree, bins, arm_sets


def check_ldp_ratio(
    epsilon: float = 1.0,
    n_pairs: int = 300,
    seed: int = 0,
    scale_override: Optional[Callable[[float], float]] = None,
) -> tuple[str, bool, str]:
    """Analytic log-density-ratio bound over random record pairs.

    scale_override is a test hook that replaces the mechanism's noise scale
    (e.g. to verify that a mis-calibrated mechanism is caught).
    """
    rng = np.random.default_rng(seed)
    budget = privacy.PrivacyBudget(epsilon)
    scale = budget.noise_scale
    if scale_override is not None:
        scale = scale_override(epsilon)
    worst = 0.0
    for _ in range(n_pairs):
        tree, bins, arm_sets = _random_state_view(rng)
        records = []
        for _ in range(2):
            x = rng.random(tree.dim)
            bid = tree.locate(x)
            arms = arm_sets[bid]
            arm = int(arms[rng.integers(len(arms))])
            records.append((x, arm, float(rng.random())))
        raw_a = privacy.raw_user_values(*records[0], bins=bins, arm_sets=arm_sets)
        raw_b = privacy.raw_user_values(*records[1], bins=bins, arm_sets=arm_sets)
        l1 = sum(
            abs(raw_a[k].v - raw_b[k].v) + abs(raw_a[k].u - raw_b[k].u) for k in raw_a
        )
        worst = max(worst, l1 / scale if scale > 0 else 0.0)
    ok = worst <= epsilon + 1e-9
    return "ldp-ratio", ok, f"worst log ratio {worst:.6f} vs budget {epsilon}"


def check_partition(
    n_points: int = 2000, n_sequences: int = 20, seed: int = 1
) -> tuple[str, bool, str]:
    """Disjoint cover, volume conservation and diameter bound under fuzzing."""
    rng = np.random.default_rng(seed)
    for _ in range(n_sequences):
        dim = int(rng.integers(1, 4))
        tree = PartitionTree(dim, rng)
        for _ in range(int(rng.integers(0, 12))):
            bins = tree.active_bins()
            tree.refine(bins[int(rng.integers(len(bins)))])
        geoms = [tree.geometry(b) for b in tree.active_bins()]
        vol = sum(g.volume() for g in geoms)
        if abs(vol - 1.0) > 1e-12:
            return "partition", False, f"volume sum {vol} != 1"
        for bid in tree.active_bins():
            g = tree.geometry(bid)
            if g.diameter() > tau(bid.depth, dim) + 1e-12:
                return "partition", False, f"diameter bound violated at {bid}"
        pts = rng.random((n_points, dim))
        pts[0] = np.ones(dim)  # exercise the closure convention
        for x in pts:
            members = [b for b, g in zip(tree.active_bins(), geoms) if g.contains(x)]
            if len(members) != 1 or tree.locate(x) != members[0]:
                return "partition", False, f"membership failure at {x}"
    return "partition", True, f"{n_sequences} trees x {n_points} points"


def check_source_sampler(
    n_draws: int = 100_000, seed: int = 2, cases=((2, 1.0), (3, 0.2))
) -> tuple[str, bool, str]:
    """KS distance of sampled L_inf radii against the CDF (2r)^(d+gamma)."""
    from scipy.stats import kstest

    rng = np.random.default_rng(seed)
    worst = 0.0
    for d, gamma in cases:
        xs = np.array([sample_source_context(gamma, d, rng) for _ in range(n_draws)])
        radii = np.max(np.abs(xs - 0.5), axis=1)
        stat = kstest(radii, lambda r: np.clip(2.0 * r, 0.0, 1.0) ** (d + gamma)).statistic
        worst = max(worst, float(stat))
    ok = worst < 0.01
    return "source-sampler", ok, f"worst KS statistic {worst:.5f}"


def check_estimator_reduction(n_histories: int = 50, seed: int = 3) -> tuple[str, bool, str]:
    """Non-private single-source estimate equals the raw sample mean exactly."""
    rng = np.random.default_rng(seed)
    config = estimation.EstimatorConfig(c_conf=1.0, n=100, epsilons=(math.inf,))
    worst = 0.0
    for _ in range(n_histories):
        cell = estimation.ArmCell(1)
        rewards = rng.random(int(rng.integers(1, 40)))
        for r in rewards:
            cell.accumulate(0, privacy.PrivatizedCellUpdate(float(r), 1.0))
            cell.bump_count(0)
        while cell.count[0] < config.gate:
            cell.bump_count(0)
        est = estimation.estimate(cell, estimation.all_weights(cell, config))
        worst = max(worst, abs(est - rewards.mean()))
    ok = worst <= 1e-12
    return "estimator-reduction", ok, f"worst |estimate - mean| = {worst:.2e}"


def run_all(seed: int = 0, quiet: bool = False) -> bool:
    """Run every check; prints one line per check unless quiet."""
    checks = [
        check_ldp_ratio(seed=seed),
        check_partition(seed=seed + 1),
        check_source_sampler(seed=seed + 2),
        check_estimator_reduction(seed=seed + 3),
    ]
    all_ok = True
    for name, ok, detail in checks:
        all_ok &= ok
        if not quiet:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
