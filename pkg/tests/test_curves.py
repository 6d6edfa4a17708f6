import functools
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmt3d import oracles
from hmt3d.curves import (CurveKind, CurveOrder, axis_sort_key, bits_for_extent, curve_visits, hilbert_coord,
                          hilbert_index, hilbert_index_array, sequence_voxels, trans_hilbert_index)

coord3 = st.tuples(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))


def test_axis_examples():
    assert axis_sort_key((0, 5, 1), "axis-x") < axis_sort_key((1, 0, 0), "axis-x")
    assert axis_sort_key((2, 3, 1), "axis-x") < axis_sort_key((2, 3, 4), "axis-x")
    assert axis_sort_key((5, 0, 1), "axis-y") < axis_sort_key((0, 1, 0), "axis-y")
    with pytest.raises(ValueError):
        axis_sort_key((0, 0, 0), "hilbert")


def _compare(kind, a, b):
    # independent comparator: primary axis, then the other planar axis, then z
    p, q = (0, 1) if kind == "axis-x" else (1, 0)
    for axis in (p, q, 2):
        if a[1][axis] != b[1][axis]:
            return -1 if a[1][axis] < b[1][axis] else 1
    return -1 if a[0] < b[0] else (a[0] > b[0])


@pytest.mark.parametrize("kind", ["axis-x", "axis-y"])
def test_axis_sort_matches_comparator(rng, kind):
    coords = rng.integers(0, 6, (200, 3))
    got = sequence_voxels(coords, CurveOrder(kind))
    want = [i for i, _ in sorted(enumerate(coords.tolist()), key=functools.cmp_to_key(
        lambda a, b: _compare(kind, a, b)))]
    assert got.tolist() == want
    assert sequence_voxels(coords[got], CurveOrder(kind), got).tolist() == got.tolist()


def test_hilbert_origin_and_order1_path():
    assert hilbert_index((0, 0, 0), 1) == 0
    assert hilbert_coord(0, 1) == (0, 0, 0)
    path = [hilbert_coord(i, 1) for i in range(8)]
    for a, b in zip(path, path[1:]):
        assert sum(x != y for x, y in zip(a, b)) == 1
        assert sum(abs(x - y) for x, y in zip(a, b)) == 1


@pytest.mark.parametrize("bits", [1, 2, 3, 4])
def test_hilbert_bijective_and_local(bits):
    assert oracles.hilbert_path_ok(bits, hilbert_index, hilbert_coord)


def test_hilbert_round_trip_b3():
    for c in itertools.product(range(8), repeat=3):
        assert hilbert_coord(hilbert_index(c, 3), 3) == c


def test_hilbert_bounds():
    with pytest.raises(IndexError):
        hilbert_index((4, 0, 0), 2)
    with pytest.raises(IndexError):
        hilbert_index((-1, 0, 0), 2)
    with pytest.raises(IndexError):
        hilbert_coord(64, 2)


@pytest.mark.parametrize("bits", [1, 2, 3, 6])
def test_vectorized_matches_scalar(rng, bits):
    side = 1 << bits
    coords = rng.integers(0, side, (300, 3))
    want = [hilbert_index(tuple(c), bits) for c in coords.tolist()]
    assert hilbert_index_array(coords, bits).tolist() == want


def test_trans_hilbert_definition():
    for a, b, c in itertools.product(range(2), repeat=3):
        assert trans_hilbert_index((a, b, c), 1) == hilbert_index((b, a, c), 1)


def test_trans_hilbert_b2_permutation_and_distinct():
    cells = list(itertools.product(range(4), repeat=3))
    h = sorted(cells, key=lambda c: hilbert_index(c, 2))
    th = sorted(cells, key=lambda c: trans_hilbert_index(c, 2))
    assert sorted(th) == sorted(cells) and len(set(th)) == 64
    assert h != th
    visits = [tuple(r[1:]) for r in curve_visits(2, CurveKind.TRANS_HILBERT)]
    assert visits == th


def test_curve_visits_hilbert():
    rows = curve_visits(2)
    assert [r[0] for r in rows] == list(range(64))
    assert len({tuple(r[1:]) for r in rows}) == 64


def test_sequence_voxels_trivial():
    order = CurveOrder("hilbert", 3)
    assert sequence_voxels(np.zeros((0, 3)), order).tolist() == []
    assert sequence_voxels([[1, 2, 3]], order).tolist() == [0]


def test_sequence_voxels_hilbert_oracle(rng):
    coords = rng.integers(0, 64, (50, 3))
    got = sequence_voxels(coords, CurveOrder("hilbert", 6))
    idx = [hilbert_index(tuple(c), 6) for c in coords.tolist()]
    assert got.tolist() == sorted(range(50), key=lambda i: (idx[i], i))


@settings(max_examples=50, deadline=None)
@given(st.lists(coord3, max_size=40), st.sampled_from(list(CurveKind)))
def test_sequence_total_and_deterministic(coords, kind):
    coords = np.array(coords, dtype=np.int64).reshape(-1, 3)
    order = CurveOrder(kind, 5)
    a = sequence_voxels(coords, order)
    assert sorted(a.tolist()) == list(range(len(coords)))
    assert np.array_equal(a, sequence_voxels(coords, order))


def test_bits_for_extent():
    assert bits_for_extent((64, 64, 32)) == 6
    assert bits_for_extent((1, 1, 1)) == 1
    assert bits_for_extent((3, 2, 2)) == 2
