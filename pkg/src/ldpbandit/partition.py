"""Dyadic max-edge partitioning of the unit cube.

The covariate domain [0,1]^d is covered by a dynamic set of half-open
rectangular bins.  A bin is refined by halving one of its longest edges
(chosen uniformly at random among ties), so every reachable bin at depth s
has volume 2^-s and per-dimension edge lengths that are powers of 1/2.

Bounds are stored as exact dyadic rationals (integer numerator plus level),
never as free-form floats: the interval along dimension k is
[num_k / 2^level_k, (num_k + 1) / 2^level_k).  This keeps membership tests
bit-exact.  Points with a coordinate exactly equal to 1 are assigned to the
adjacent (topmost) bin so that the closed cube is fully covered.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class BinId(NamedTuple):
    """Bin address: depth s and 1-based index j in [1, 2^s]."""

    depth: int
    index: int

    def children(self) -> tuple["BinId", "BinId"]:
        s, j = self
        return BinId(s + 1, 2 * j - 1), BinId(s + 1, 2 * j)


def tau(s: int, d: int) -> float:
    """Refinement threshold 2 * sqrt(d) * 2^(-s/d) for depth s in dimension d.

    Upper-bounds the Euclidean diameter of any max-edge bin at depth s, and
    serves as the approximation-error surrogate in the refinement rule.
    """
    if s < 0 or d < 1:
        raise ValueError(f"need s >= 0 and d >= 1, got s={s}, d={d}")
    return 2.0 * math.sqrt(d) * 2.0 ** (-s / d)


@dataclass(frozen=True)
class BinGeometry:
    """Axis-aligned dyadic box: dimension k spans [nums[k]/2^levels[k], (nums[k]+1)/2^levels[k])."""

    nums: tuple[int, ...]
    levels: tuple[int, ...]

    def __post_init__(self):
        if len(self.nums) != len(self.levels) or not self.nums:
            raise ValueError("nums and levels must be equal-length, nonempty tuples")
        for num, lev in zip(self.nums, self.levels):
            if lev < 0 or not 0 <= num < 2**lev:
                raise ValueError(f"invalid dyadic interval num={num}, level={lev}")

    @property
    def dim(self) -> int:
        return len(self.nums)

    @property
    def depth(self) -> int:
        # Total number of halvings; volume is 2^-depth.
        return sum(self.levels)

    def lower(self) -> np.ndarray:
        return np.array([n / 2.0**l for n, l in zip(self.nums, self.levels)])

    def upper(self) -> np.ndarray:
        return np.array([(n + 1) / 2.0**l for n, l in zip(self.nums, self.levels)])

    def edge_lengths(self) -> np.ndarray:
        return np.array([2.0**-l for l in self.levels])

    def volume(self) -> float:
        return 2.0**-self.depth

    def diameter(self) -> float:
        """Euclidean diameter, sqrt(sum of squared edge lengths)."""
        return math.sqrt(sum(4.0**-l for l in self.levels))

    def max_edge_dims(self) -> list[int]:
        """Dimensions attaining the longest edge (i.e. the smallest level)."""
        lmin = min(self.levels)
        return [k for k, l in enumerate(self.levels) if l == lmin]

    def contains(self, x: Sequence[float]) -> bool:
        """Membership under the closure convention (upper faces at 1 included)."""
        if len(x) != self.dim:
            raise ValueError("point dimension mismatch")
        for xk, num, lev in zip(x, self.nums, self.levels):
            lo = num / 2.0**lev
            hi = (num + 1) / 2.0**lev
            if not (lo <= xk < hi or (hi == 1.0 and xk == 1.0)):
                return False
        return True

    def split(self, dim: int) -> tuple["BinGeometry", "BinGeometry"]:
        """Halve the interval along ``dim``; returns (lower half, upper half)."""
        nums_lo = list(self.nums)
        nums_hi = list(self.nums)
        levels = list(self.levels)
        nums_lo[dim] = 2 * self.nums[dim]
        nums_hi[dim] = 2 * self.nums[dim] + 1
        levels[dim] = self.levels[dim] + 1
        return (
            BinGeometry(tuple(nums_lo), tuple(levels)),
            BinGeometry(tuple(nums_hi), tuple(levels)),
        )


def max_edge_split(
    geometry: BinGeometry, rng: np.random.Generator
) -> tuple[int, BinGeometry, BinGeometry]:
    """Split a bin at the midpoint of a uniformly chosen longest edge.

    Always consumes exactly one draw from ``rng`` (even when the longest edge
    is unique) so that refinement sequences are replayable from the seed.
    Returns (split dimension, lower half, upper half).
    """
    candidates = geometry.max_edge_dims()
    k_star = candidates[int(rng.integers(len(candidates)))]
    left, right = geometry.split(k_star)
    return k_star, left, right


ROOT = BinId(0, 1)


class _SplitRecord(NamedTuple):
    dim: int
    midpoint: float
    left: BinId
    right: BinId


class PartitionTree:
    """Active set of dyadic bins covering [0,1]^d, with lineage.

    Single-writer structure: all mutation happens on one control thread;
    read-only sharing between mutations is safe.
    """

    def __init__(
        self,
        dim: int,
        rng: Optional[np.random.Generator] = None,
        max_depth: Optional[int] = None,
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        # Safety cap: float dyadic bounds stay exact well past this depth, but
        # unbounded refinement would eventually degenerate.
        self.max_depth = 8 * dim if max_depth is None else int(max_depth)
        self._rng = rng if rng is not None else np.random.default_rng()
        root_geom = BinGeometry((0,) * dim, (0,) * dim)
        self._geom: dict[BinId, BinGeometry] = {ROOT: root_geom}
        self._active: set[BinId] = {ROOT}
        self._parent: dict[BinId, BinId] = {}
        self._split: dict[BinId, _SplitRecord] = {}
        self._cap_warned: set[BinId] = set()

    @property
    def n_active(self) -> int:
        return len(self._active)

    def active_bins(self) -> list[BinId]:
        """Active bin ids in deterministic (depth, index) order."""
        return sorted(self._active)

    def is_active(self, bid: BinId) -> bool:
        return bid in self._active

    def geometry(self, bid: BinId) -> BinGeometry:
        return self._geom[bid]

    def parent(self, bid: BinId) -> Optional[BinId]:
        return self._parent.get(bid)

    def can_refine(self, bid: BinId) -> bool:
        return bid.depth < self.max_depth

    def locate(self, x: Sequence[float]) -> BinId:
        """Unique active bin containing x, under the closure convention.

        Rejects points outside the closed unit cube.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError(f"point {x} outside [0,1]^{self.dim}")
        bid = ROOT
        while bid not in self._active:
            rec = self._split[bid]
            # x == midpoint belongs to the upper child; x == 1 always descends
            # right, which realizes the closure convention.
            bid = rec.left if x[rec.dim] < rec.midpoint else rec.right
        return bid

    def refine(self, bid: BinId) -> Optional[tuple[BinId, BinId]]:
        """Replace an active bin by its two max-edge children.

        Returns the children ids, or None when the depth cap suppresses the
        refinement (a warning is logged once per capped bin).
        """
        if bid not in self._active:
            raise ValueError(f"cannot refine inactive bin {bid}")
        if not self.can_refine(bid):
            if bid not in self._cap_warned:
                logger.warning(
                    "refinement of bin %s suppressed: depth cap %d reached",
                    bid,
                    self.max_depth,
                )
                self._cap_warned.add(bid)
            return None
        geom = self._geom[bid]
        k_star, left_geom, right_geom = max_edge_split(geom, self._rng)
        left_id, right_id = bid.children()
        mid = (2 * geom.nums[k_star] + 1) / 2.0 ** (geom.levels[k_star] + 1)
        self._geom[left_id] = left_geom
        self._geom[right_id] = right_geom
        self._parent[left_id] = bid
        self._parent[right_id] = bid
        self._split[bid] = _SplitRecord(k_star, mid, left_id, right_id)
        self._active.discard(bid)
        self._active.update((left_id, right_id))
        return left_id, right_id

    def snapshot(self) -> dict:
        """JSON-serializable view of the active partition (ids plus dyadic bounds)."""
        bins = []
        for bid in self.active_bins():
            geom = self._geom[bid]
            bins.append(
                {
                    "depth": bid.depth,
                    "index": bid.index,
                    "nums": list(geom.nums),
                    "levels": list(geom.levels),
                    "lower": [float(v) for v in geom.lower()],
                    "upper": [float(v) for v in geom.upper()],
                }
            )
        return {"dim": self.dim, "max_depth": self.max_depth, "bins": bins}
