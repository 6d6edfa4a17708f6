"""Orderings that serialize 3D voxel coordinates into 1D sequences.

The Hilbert curve uses John Skilling's transpose construction ("Programming
the Hilbert curve", AIP Conf. Proc. 707, 2004): coordinates are converted to
the "transposed" Gray-coded form in place, then their bits are interleaved
with axis 0 most significant at every level.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

NDIM = 3


class CurveKind(str, Enum):
    AXIS_X = "axis-x"
    AXIS_Y = "axis-y"
    HILBERT = "hilbert"
    TRANS_HILBERT = "trans-hilbert"


@dataclass(frozen=True)
class CurveOrder:
    kind: CurveKind
    order_bits: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", CurveKind(self.kind))
        if self.kind in (CurveKind.HILBERT, CurveKind.TRANS_HILBERT) and self.order_bits < 1:
            raise ValueError("Hilbert orders need order_bits >= 1")


def bits_for_extent(extent):
    """Smallest b with 2**b >= every axis of ``extent``."""
    return max(1, max(int(e - 1).bit_length() for e in extent))


def axis_sort_key(coord, kind):
    x, y, z = (int(v) for v in coord)
    kind = CurveKind(kind)
    if kind is CurveKind.AXIS_X:
        return (x, y, z)
    if kind is CurveKind.AXIS_Y:
        return (y, x, z)
    raise ValueError(f"{kind} is not an axis ordering")


def _check_coord(coord, bits):
    side = 1 << bits
    if len(coord) != NDIM or any(not 0 <= c < side for c in coord):
        raise IndexError(f"coordinate {tuple(coord)} outside [0, {side}) for order {bits}")


def hilbert_index(coord, order_bits):
    _check_coord(coord, order_bits)
    X = [int(c) for c in coord]
    # inverse undo
    q = 1 << (order_bits - 1)
    while q > 1:
        p = q - 1
        for i in range(NDIM):
            if X[i] & q:
                X[0] ^= p
            else:
                t = (X[0] ^ X[i]) & p
                X[0] ^= t
                X[i] ^= t
        q >>= 1
    # Gray encode
    for i in range(1, NDIM):
        X[i] ^= X[i - 1]
    t = 0
    q = 1 << (order_bits - 1)
    while q > 1:
        if X[NDIM - 1] & q:
            t ^= q - 1
        q >>= 1
    for i in range(NDIM):
        X[i] ^= t

    index = 0
    for bit in range(order_bits - 1, -1, -1):
        for i in range(NDIM):
            index = (index << 1) | ((X[i] >> bit) & 1)
    return index


def hilbert_coord(index, order_bits):
    index = int(index)
    if not 0 <= index < 1 << (NDIM * order_bits):
        raise IndexError(f"index {index} outside [0, 2**{NDIM * order_bits})")
    X = [0] * NDIM
    for bit in range(order_bits - 1, -1, -1):
        for i in range(NDIM):
            shift = bit * NDIM + (NDIM - 1 - i)
            X[i] |= ((index >> shift) & 1) << bit

    n = 2 << (order_bits - 1)
    # Gray decode
    t = X[NDIM - 1] >> 1
    for i in range(NDIM - 1, 0, -1):
        X[i] ^= X[i - 1]
    X[0] ^= t
    # undo excess work
    q = 2
    while q != n:
        p = q - 1
        for i in range(NDIM - 1, -1, -1):
            if X[i] & q:
                X[0] ^= p
            else:
                t = (X[0] ^ X[i]) & p
                X[0] ^= t
                X[i] ^= t
        q <<= 1
    return tuple(X)


def trans_hilbert_index(coord, order_bits):
    x, y, z = coord
    return hilbert_index((y, x, z), order_bits)


def hilbert_index_array(coords, order_bits):
    """Vectorized hilbert_index over an (N, 3) integer array."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, NDIM)
    side = 1 << order_bits
    if coords.size and ((coords < 0).any() or (coords >= side).any()):
        raise IndexError(f"coordinates outside [0, {side}) for order {order_bits}")
    X = [coords[:, i].copy() for i in range(NDIM)]
    q = 1 << (order_bits - 1)
    while q > 1:
        p = q - 1
        for i in range(NDIM):
            hit = (X[i] & q) != 0
            t = np.where(hit, 0, (X[0] ^ X[i]) & p)
            X[0] = np.where(hit, X[0] ^ p, X[0] ^ t)
            if i:
                X[i] = X[i] ^ t
        q >>= 1
    for i in range(1, NDIM):
        X[i] = X[i] ^ X[i - 1]
    t = np.zeros_like(X[0])
    q = 1 << (order_bits - 1)
    while q > 1:
        t = np.where((X[NDIM - 1] & q) != 0, t ^ (q - 1), t)
        q >>= 1
    X = [x ^ t for x in X]

    index = np.zeros_like(X[0])
    for bit in range(order_bits - 1, -1, -1):
        for i in range(NDIM):
            index = (index << 1) | ((X[i] >> bit) & 1)
    return index


def curve_keys(coords, order):
    """Sort keys for an (N, 3) coordinate array under ``order``.

    Hilbert kinds expect window-local coordinates.
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, NDIM)
    kind = order.kind
    if kind is CurveKind.AXIS_X:
        return coords[:, [0, 1, 2]]
    if kind is CurveKind.AXIS_Y:
        return coords[:, [1, 0, 2]]
    if kind is CurveKind.TRANS_HILBERT:
        coords = coords[:, [1, 0, 2]]
    return hilbert_index_array(coords, order.order_bits)[:, None]


def sequence_voxels(coords, order, ids=None):
    """Voxel ids sorted by ``order``; ties fall back to ascending id."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, NDIM)
    ids = np.arange(len(coords)) if ids is None else np.asarray(ids, dtype=np.int64)
    if not len(coords):
        return ids[:0]
    keys = curve_keys(coords, order)
    # np.lexsort sorts by the last key first
    perm = np.lexsort((ids,) + tuple(keys[:, j] for j in range(keys.shape[1] - 1, -1, -1)))
    return ids[perm]


def curve_visits(order_bits, kind=CurveKind.HILBERT):
    """All cells of a 2**b cube in visiting order, as (index, x, y, z) rows."""
    kind = CurveKind(kind)
    rows = []
    for index in range(1 << (NDIM * order_bits)):
        x, y, z = hilbert_coord(index, order_bits)
        if kind is CurveKind.TRANS_HILBERT:
            # trans-Hilbert visits the axis-swapped cell at the same index
            x, y = y, x
        rows.append((index, x, y, z))
    return rows
