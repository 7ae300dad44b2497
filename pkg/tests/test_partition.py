"""Partition module: split rule, locate, refinement, depth/volume invariants."""

import math

import numpy as np
import pytest

from ldpbandit.partition import ROOT, BinGeometry, BinId, PartitionTree, max_edge_split, tau


class ScriptedRng:
    """Stands in for a Generator; integers() replays a fixed script."""

    def __init__(self, draws):
        self.draws = list(draws)

    def integers(self, n):
        value = self.draws.pop(0)
        assert 0 <= value < n
        return value


def quadrant_tree():
    """d=2 tree refined into the four quadrants (first split along dim 0)."""
    tree = PartitionTree(2, rng=ScriptedRng([0, 0, 0]))
    left, right = tree.refine(ROOT)
    tree.refine(left)
    tree.refine(right)
    return tree


def test_tau_values():
    assert tau(0, 2) == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-12)
    assert tau(2, 2) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert tau(3, 3) == pytest.approx(math.sqrt(3.0), abs=1e-12)
    with pytest.raises(ValueError):
        tau(-1, 2)


def test_max_edge_split_unique_argmax():
    # [0,1) x [0,0.5): dimension 0 holds the unique longest edge.
    geom = BinGeometry((0, 0), (0, 1))
    k, left, right = max_edge_split(geom, ScriptedRng([0]))
    assert k == 0
    assert np.allclose(left.lower(), [0.0, 0.0]) and np.allclose(left.upper(), [0.5, 0.5])
    assert np.allclose(right.lower(), [0.5, 0.0]) and np.allclose(right.upper(), [1.0, 0.5])


def test_max_edge_split_tie_follows_rng():
    geom = BinGeometry((0, 0), (0, 0))
    k, left, right = max_edge_split(geom, ScriptedRng([0]))
    assert k == 0
    assert np.allclose(left.upper(), [0.5, 1.0])
    assert np.allclose(right.lower(), [0.5, 0.0])


def test_double_split_always_four_quarter_bins():
    # Both tie-break branches of the first split lead to four bins of area 1/4.
    for first in (0, 1):
        root = BinGeometry((0, 0), (0, 0))
        _, a, b = max_edge_split(root, ScriptedRng([first]))
        leaves = []
        for child in (a, b):
            # The child has a unique longest edge, so the draw is irrelevant.
            _, c1, c2 = max_edge_split(child, ScriptedRng([0]))
            leaves.extend([c1, c2])
        assert len(leaves) == 4
        assert all(g.volume() == pytest.approx(0.25, abs=1e-15) for g in leaves)
        assert sum(g.volume() for g in leaves) == pytest.approx(1.0, abs=1e-15)


def test_locate_quadrants():
    tree = quadrant_tree()
    bid = tree.locate([0.25, 0.75])
    geom = tree.geometry(bid)
    assert np.allclose(geom.lower(), [0.0, 0.5]) and np.allclose(geom.upper(), [0.5, 1.0])


def test_locate_closure_convention():
    tree = quadrant_tree()
    bid = tree.locate([1.0, 1.0])
    geom = tree.geometry(bid)
    assert np.allclose(geom.lower(), [0.5, 0.5]) and np.allclose(geom.upper(), [1.0, 1.0])


def test_locate_rejects_outside_points():
    tree = quadrant_tree()
    with pytest.raises(ValueError):
        tree.locate([1.5, 0.5])
    with pytest.raises(ValueError):
        tree.locate([0.5, -0.1])


def test_refine_bookkeeping():
    tree = PartitionTree(2, rng=np.random.default_rng(0))
    kids = tree.refine(ROOT)
    assert kids == (BinId(1, 1), BinId(1, 2))
    assert not tree.is_active(ROOT)
    assert tree.n_active == 2
    assert tree.parent(kids[0]) == ROOT and tree.parent(kids[1]) == ROOT
    for kid in kids:
        tree.refine(kid)
    assert tree.n_active == 4
    total = sum(tree.geometry(b).volume() for b in tree.active_bins())
    assert total == pytest.approx(1.0, abs=1e-15)


def test_refine_inactive_is_contract_violation():
    tree = PartitionTree(1, rng=np.random.default_rng(0))
    tree.refine(ROOT)
    with pytest.raises(ValueError):
        tree.refine(ROOT)


def test_depth_cap_suppresses_refinement(caplog):
    tree = PartitionTree(1, rng=np.random.default_rng(0), max_depth=1)
    (kid, _) = tree.refine(ROOT)
    with caplog.at_level("WARNING"):
        assert tree.refine(kid) is None
    assert any("depth cap" in rec.message for rec in caplog.records)
    assert tree.is_active(kid)


def test_child_id_arithmetic_and_index_range():
    rng = np.random.default_rng(42)
    tree = PartitionTree(3, rng=rng)
    for _ in range(40):
        bins = tree.active_bins()
        target = bins[rng.integers(len(bins))]
        kids = tree.refine(target)
        if kids is None:
            continue
        s, j = target
        assert kids == (BinId(s + 1, 2 * j - 1), BinId(s + 1, 2 * j))
    for bid in tree.active_bins():
        assert 1 <= bid.index <= 2**bid.depth


def test_fuzz_disjoint_cover_volume_diameter():
    rng = np.random.default_rng(7)
    for _ in range(25):
        dim = int(rng.integers(1, 4))
        tree = PartitionTree(dim, rng=rng)
        n_refine = int(rng.integers(0, 15))
        for _ in range(n_refine):
            bins = tree.active_bins()
            tree.refine(bins[rng.integers(len(bins))])
        assert tree.n_active == n_refine + 1
        geoms = {b: tree.geometry(b) for b in tree.active_bins()}
        assert sum(g.volume() for g in geoms.values()) == pytest.approx(1.0, abs=1e-12)
        for bid, geom in geoms.items():
            assert geom.diameter() <= tau(bid.depth, dim) + 1e-12
            assert geom.volume() == pytest.approx(2.0**-bid.depth, abs=1e-15)
        points = rng.random((400, dim))
        points[0] = 1.0  # closure corner
        for x in points:
            members = [b for b, g in geoms.items() if g.contains(x)]
            assert len(members) == 1
            assert tree.locate(x) == members[0]


def test_edge_lengths_are_powers_of_half():
    rng = np.random.default_rng(3)
    tree = PartitionTree(2, rng=rng)
    for _ in range(20):
        bins = tree.active_bins()
        tree.refine(bins[rng.integers(len(bins))])
    for bid in tree.active_bins():
        for length in tree.geometry(bid).edge_lengths():
            assert math.log2(length) == round(math.log2(length))


def test_snapshot_roundtrip():
    tree = quadrant_tree()
    snap = tree.snapshot()
    assert snap["dim"] == 2
    assert len(snap["bins"]) == 4
    for entry in snap["bins"]:
        assert entry["lower"] < entry["upper"]
