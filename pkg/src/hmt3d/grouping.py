"""Group layouts for the two serialization paths.

* ``equal_overlap_groups``: fixed-size groups over one globally sorted
  sequence, adjacent groups overlapping by near-equal amounts.
* ``window_partition`` + ``group_within_window``: padded fixed-size groups
  inside non-overlapping 3D windows.
"""
from dataclasses import dataclass

import numpy as np

from .curves import CurveKind, CurveOrder, bits_for_extent, sequence_voxels

PAD = -1


@dataclass(frozen=True)
class GroupLayout:
    length: int
    group_size: int
    starts: tuple
    overlaps: tuple

    @property
    def num_groups(self):
        return len(self.starts)

    @property
    def span(self):
        """Elements per group (group_size clamped to the sequence length)."""
        return min(self.group_size, self.length)

    def index_matrix(self):
        """(G, span) positions into the sorted sequence."""
        return np.asarray(self.starts, dtype=np.int64)[:, None] + np.arange(self.span)

    def to_json(self):
        return {"L": self.length, "m": self.group_size, "starts": list(self.starts),
                "overlaps": list(self.overlaps)}


def equal_overlap_groups(length, group_size):
    if group_size < 1:
        raise ValueError("group size must be >= 1")
    if length <= 0:
        return GroupLayout(0, group_size, (), ())
    num = -(-length // group_size)
    if num == 1:
        return GroupLayout(length, group_size, (0,), ())
    excess = num * group_size - length
    base, extra = divmod(excess, num - 1)
    overlaps = tuple(base + 1 if i < extra else base for i in range(num - 1))
    starts = [0]
    for o in overlaps:
        starts.append(starts[-1] + group_size - o)
    return GroupLayout(length, group_size, tuple(starts), overlaps)


@dataclass(frozen=True)
class WindowPartition:
    window_shape: tuple
    windows: dict  # window id (wx, wy, wz) -> ascending voxel ids

    def ordered(self):
        return sorted(self.windows.items())


def window_partition(coords, window_shape):
    if any(t <= 0 for t in window_shape):
        raise ValueError("window shape must be positive")
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    win = coords // np.asarray(window_shape, dtype=np.int64)
    windows = {}
    if len(coords):
        uniq, inverse = np.unique(win, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
        for w, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            windows[tuple(int(v) for v in uniq[w])] = order[a:b]
    return WindowPartition(tuple(window_shape), windows)


@dataclass(frozen=True)
class PaddedGroupBatch:
    group_size: int
    slots: np.ndarray  # (G, g) voxel ids, PAD where masked
    kind: CurveKind

    @property
    def mask(self):
        return self.slots != PAD

    @property
    def num_groups(self):
        return self.slots.shape[0]

    def real_ids(self):
        return self.slots[self.mask]

    def to_json(self):
        return {"g": self.group_size, "order": self.kind.value, "groups": self.slots.tolist(),
                "mask": self.mask.astype(int).tolist()}


def split_sizes(count, group_size):
    """Even split of ``count`` into ceil(count/group_size) parts, larger first."""
    if count == 0:
        return []
    num = -(-count // group_size)
    q, r = divmod(count, num)
    return [q + 1] * r + [q] * (num - r)


def group_within_window(local_coords, ids, kind, group_size, order_bits):
    """Curve-sort window members and split them into padded groups.

    ``local_coords`` are window-relative; ``ids`` are the matching voxel ids.
    """
    if group_size < 1:
        raise ValueError("group size must be >= 1")
    kind = CurveKind(kind)
    ids = np.asarray(ids, dtype=np.int64)
    if not len(ids):
        return PaddedGroupBatch(group_size, np.zeros((0, group_size), np.int64), kind)
    seq = sequence_voxels(local_coords, CurveOrder(kind, order_bits), ids)
    sizes = split_sizes(len(seq), group_size)
    slots = np.full((len(sizes), group_size), PAD, dtype=np.int64)
    pos = 0
    for row, n in enumerate(sizes):
        slots[row, :n] = seq[pos:pos + n]
        pos += n
    return PaddedGroupBatch(group_size, slots, kind)


def window_groups(coords, window_shape, group_size):
    """Both curve batches for every window, keyed by window id (sorted)."""
    bits = bits_for_extent(window_shape)
    part = window_partition(coords, window_shape)
    shape = np.asarray(window_shape, dtype=np.int64)
    out = []
    for wid, members in part.ordered():
        local = coords[members] - np.asarray(wid) * shape
        out.append((wid, members,
                    group_within_window(local, members, CurveKind.HILBERT, group_size, bits),
                    group_within_window(local, members, CurveKind.TRANS_HILBERT, group_size, bits)))
    return out
