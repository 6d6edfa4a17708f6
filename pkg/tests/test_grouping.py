import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmt3d import oracles
from hmt3d.curves import CurveOrder, sequence_voxels
from hmt3d.grouping import (PAD, equal_overlap_groups, group_within_window, split_sizes, window_groups,
                            window_partition)


def test_equal_overlap_examples():
    lay = equal_overlap_groups(8, 4)
    assert (lay.starts, lay.overlaps) == ((0, 4), (0,))
    lay = equal_overlap_groups(10, 4)
    assert lay.num_groups == 3 and lay.overlaps == (1, 1) and lay.starts == (0, 3, 6)
    lay = equal_overlap_groups(3, 8)
    assert lay.starts == (0,) and lay.span == 3
    assert equal_overlap_groups(0, 4).num_groups == 0


def test_remainder_to_earlier_pairs():
    # L=11, m=4: G=3, E=1 -> the single extra overlap goes to the first pair
    assert equal_overlap_groups(11, 4).overlaps == (1, 0)
    assert equal_overlap_groups(9, 4).overlaps == (2, 1)


def test_bad_group_size():
    with pytest.raises(ValueError):
        equal_overlap_groups(5, 0)


def test_exhaustive_against_solver():
    for length, m in itertools.product(range(1, 65), range(1, 17)):
        assert oracles.layout_violations(equal_overlap_groups(length, m), length, m) == []


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3000), st.integers(1, 600))
def test_layout_coverage(length, m):
    lay = equal_overlap_groups(length, m)
    idx = lay.index_matrix()
    assert np.array_equal(np.unique(idx), np.arange(length))
    assert idx[-1, -1] == length - 1
    assert lay.num_groups == -(-length // m)
    if lay.overlaps:
        assert max(lay.overlaps) - min(lay.overlaps) <= 1
    assert list(lay.starts) == sorted(lay.starts)


def test_window_partition_examples():
    part = window_partition([[70, 65, 10], [0, 0, 0]], (64, 64, 32))
    assert set(part.windows) == {(1, 1, 0), (0, 0, 0)}
    assert part.windows[(1, 1, 0)].tolist() == [0]


def test_window_partition_counts(rng):
    coords = np.unique(rng.integers(0, 200, (500, 3)), axis=0)
    part = window_partition(coords, (64, 64, 32))
    ids = np.concatenate([m for _, m in part.ordered()])
    assert len(ids) == len(coords) and len(np.unique(ids)) == len(coords)
    for wid, members in part.windows.items():
        assert (coords[members] // np.array([64, 64, 32]) == np.array(wid)).all()


def test_split_sizes():
    assert split_sizes(100, 90) == [50, 50]
    assert split_sizes(181, 90) == [61, 60, 60]
    assert split_sizes(90, 90) == [90]
    assert split_sizes(0, 90) == []


def test_group_within_window_examples(rng):
    coords = rng.integers(0, 8, (90, 3))
    batch = group_within_window(coords, np.arange(90), "hilbert", 90, 3)
    assert batch.num_groups == 1 and batch.mask.all()
    coords = rng.integers(0, 8, (100, 3))
    batch = group_within_window(coords, np.arange(100), "trans-hilbert", 90, 3)
    assert batch.num_groups == 2
    assert batch.mask.sum(axis=1).tolist() == [50, 50]
    assert (batch.slots[:, 50:] == PAD).all()
    empty = group_within_window(np.zeros((0, 3)), [], "hilbert", 90, 3)
    assert empty.num_groups == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 150), st.integers(1, 40), st.sampled_from(["hilbert", "trans-hilbert"]),
       st.integers(0, 2**31))
def test_padded_batch_invariants(count, g, kind, seed):
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, 16, (count, 3))
    ids = rng.permutation(1000)[:count]
    batch = group_within_window(coords, ids, kind, g, 4)
    sizes = batch.mask.sum(axis=1)
    assert batch.num_groups == -(-count // g)
    assert (~batch.mask).sum() == batch.num_groups * g - count
    if count:
        assert sizes.max() - sizes.min() <= 1 and list(sizes) == sorted(sizes, reverse=True)
    seq = sequence_voxels(coords, CurveOrder(kind, 4), ids)
    assert batch.real_ids().tolist() == seq.tolist()


def test_window_groups_feature_independent(rng):
    coords = np.unique(rng.integers(0, 130, (400, 3)), axis=0)
    a = window_groups(coords, (64, 64, 32), 30)
    b = window_groups(coords, (64, 64, 32), 30)
    assert [w for w, *_ in a] == sorted(w for w, *_ in a)
    for (wa, ma, ha, ta), (wb, mb, hb, tb) in zip(a, b):
        assert wa == wb and np.array_equal(ha.slots, hb.slots) and np.array_equal(ta.slots, tb.slots)
        assert sorted(ha.real_ids().tolist()) == sorted(ta.real_ids().tolist()) == ma.tolist()
        assert ha.num_groups == ta.num_groups


def test_json_shapes():
    lay = equal_overlap_groups(10, 4).to_json()
    assert lay == {"L": 10, "m": 4, "starts": [0, 3, 6], "overlaps": [1, 1]}
    batch = group_within_window([[0, 0, 0], [1, 0, 0]], [3, 9], "hilbert", 3, 1).to_json()
    assert batch["groups"] == [[3, 9, PAD]] and batch["mask"] == [[1, 1, 0]]
