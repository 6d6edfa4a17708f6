"""Point clouds, voxel grids and the dense/sparse conversions between them."""
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import DTYPE, LinearParams, ShapeError, mlp_forward

POINT_DTYPE = np.dtype("<f4")


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    """(N, 4) array of x, y, z (meters) and intensity."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=DTYPE).reshape(-1, 4)
        bad = np.flatnonzero(~np.isfinite(pts).all(axis=1))
        if bad.size:
            raise FormatError(f"non-finite point at index {int(bad[0])}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


def read_kitti_bin(path):
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of 16 bytes")
    pts = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4)
    bad = np.flatnonzero(~np.isfinite(pts).all(axis=1))
    if bad.size:
        raise FormatError(f"{path}: non-finite value in point {int(bad[0])}")
    return PointCloud(pts.astype(DTYPE))


def write_kitti_bin(path, cloud):
    Path(path).write_bytes(np.asarray(cloud.points, dtype=POINT_DTYPE).tobytes())


def _extent(span, size):
    # tolerate float noise such as 70.4 / 0.2 = 352.00000000000006
    return max(1, math.ceil(span / size - 1e-6))


@dataclass(frozen=True)
class GridSpec:
    range_min: tuple
    range_max: tuple
    voxel_size: tuple

    def __post_init__(self):
        for name in ("range_min", "range_max", "voxel_size"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if any(s <= 0 for s in self.voxel_size):
            raise ValueError("voxel_size must be positive")
        if any(hi <= lo for lo, hi in zip(self.range_min, self.range_max)):
            raise ValueError("range_max must exceed range_min on every axis")

    @property
    def extents(self):
        return tuple(_extent(hi - lo, s) for lo, hi, s in zip(self.range_min, self.range_max, self.voxel_size))

    @classmethod
    def kitti(cls):
        return cls((0.0, -40.0, -3.0), (70.4, 40.0, 1.0), (0.2, 0.2, 0.125))

    @classmethod
    def once(cls):
        return cls((-75.2, -75.2, -5.0), (75.2, 75.2, 3.0), (0.4, 0.4, 0.25))

    @classmethod
    def unit(cls, extents):
        """Unit voxels anchored at the origin; handy for synthetic grids."""
        return cls((0.0, 0.0, 0.0), tuple(float(e) for e in extents), (1.0, 1.0, 1.0))

    def to_voxel_frame(self, xyz):
        """Metric position -> continuous voxel coordinates."""
        return tuple((p - lo) / s for p, lo, s in zip(xyz, self.range_min, self.voxel_size))

    def halve_z(self):
        z_lo, vz = self.range_min[2], self.voxel_size[2] * 2
        new_z = math.ceil(self.extents[2] / 2)
        return replace(
            self,
            range_max=(self.range_max[0], self.range_max[1], z_lo + new_z * vz),
            voxel_size=(self.voxel_size[0], self.voxel_size[1], vz),
        )


def linear_keys(coords, extents):
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    _, ny, nz = extents
    return (coords[:, 0] * ny + coords[:, 1]) * nz + coords[:, 2]


@dataclass(frozen=True)
class SparseVoxelGrid:
    """Occupied voxels: integer coords (L, 3) with features (L, d).

    Row i is voxel id i. Instances are immutable; every operation returns a
    new grid.
    """

    spec: GridSpec
    coords: np.ndarray
    feats: np.ndarray
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.int64).reshape(-1, 3)
        feats = np.array(self.feats, dtype=DTYPE)
        if feats.ndim != 2 or feats.shape[0] != coords.shape[0]:
            raise ShapeError(f"feats {feats.shape} do not match {coords.shape[0]} coords")
        ext = np.array(self.spec.extents)
        if coords.size and ((coords < 0).any() or (coords >= ext).any()):
            raise ValueError("voxel coordinate outside grid extents")
        if not np.isfinite(feats).all():
            raise ValueError("non-finite voxel feature")
        if np.unique(linear_keys(coords, self.spec.extents)).size != coords.shape[0]:
            raise ValueError("duplicate voxel coordinates")
        coords.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "feats", feats)

    @classmethod
    def empty(cls, spec, d):
        return cls(spec, np.zeros((0, 3), np.int64), np.zeros((0, d)))

    def __len__(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.feats.shape[1]

    def with_feats(self, feats):
        return SparseVoxelGrid(self.spec, self.coords, feats)

    def index(self):
        """coord tuple -> voxel id."""
        if self._index is None:
            object.__setattr__(self, "_index", {tuple(c): i for i, c in enumerate(self.coords.tolist())})
        return self._index

    def as_dict(self):
        return {tuple(c): f for c, f in zip(self.coords.tolist(), self.feats)}

    def keys(self):
        return linear_keys(self.coords, self.spec.extents)


def voxelize(cloud, spec, d, rng=None, lift=None):
    """Bin points into voxels, mean-pool (x, y, z, intensity), lift to d dims.

    Points outside the half-open range [range_min, range_max) are dropped.
    The per-voxel sums run over points in a canonical sorted order, so the
    result does not depend on input point order.
    """
    if d < 4:
        raise ValueError("feature dim d must be >= 4")
    if lift is None:
        if rng is None:
            raise ValueError("voxelize needs either rng or lift params")
        lift = LinearParams.init(rng, 4, d)
    pts = cloud.points
    lo = np.array(spec.range_min)
    hi = np.array(spec.range_max)
    ext = np.array(spec.extents)
    inside = ((pts[:, :3] >= lo) & (pts[:, :3] < hi)).all(axis=1)
    pts = pts[inside]
    idx = np.floor((pts[:, :3] - lo) / np.array(spec.voxel_size)).astype(np.int64)
    ok = (idx < ext).all(axis=1)
    pts, idx = pts[ok], idx[ok]
    if not len(pts):
        return SparseVoxelGrid.empty(spec, d)

    keys = linear_keys(idx, spec.extents)
    order = np.lexsort((pts[:, 3], pts[:, 2], pts[:, 1], pts[:, 0], keys))
    keys, pts, idx = keys[order], pts[order], idx[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    counts = np.diff(np.r_[starts, len(keys)])
    sums = np.zeros((len(starts), 4))
    seg = np.repeat(np.arange(len(starts)), counts)
    offset = np.arange(len(keys)) - starts[seg]
    for k in range(counts.max()):
        sel = offset == k
        sums[seg[sel]] += pts[sel]
    raw = sums / counts[:, None]
    return SparseVoxelGrid(spec, idx[starts], lift(raw))


def normalize_coord(coord, spec):
    """(x/X, y/Y, z/Z) for one coord or an (N, 3) array."""
    c = np.asarray(coord, dtype=np.int64)
    ext = np.array(spec.extents)
    if (c < 0).any() or (c >= ext).any():
        raise IndexError(f"coordinate {c.tolist()} outside extents {tuple(ext)}")
    return c / ext


def absolute_pos_encode(coord, spec, params):
    if params.d_in != 3:
        raise ShapeError("position MLP must take 3 inputs")
    return mlp_forward(2 * np.pi * normalize_coord(coord, spec), params)


def z_compress(grid, params):
    """Merge voxels sharing (x, y, z // 2) by element-wise max, then project.

    Output entries are ordered by their new coordinate.
    """
    new_spec = grid.spec.halve_z()
    if not len(grid):
        return SparseVoxelGrid.empty(new_spec, params.weight.shape[1])
    coords = grid.coords.copy()
    coords[:, 2] //= 2
    keys = linear_keys(coords, new_spec.extents)
    uniq, inverse = np.unique(keys, return_inverse=True)
    merged = np.full((len(uniq), grid.d), -np.inf)
    np.maximum.at(merged, inverse, grid.feats)
    first = np.zeros(len(uniq), dtype=np.int64)
    first[inverse[::-1]] = np.arange(len(keys))[::-1]
    return SparseVoxelGrid(new_spec, coords[first], params(merged))


def bev_flatten(grid):
    """Dense (X, Y, Z*d) map; channel block z of cell (x, y) holds voxel (x, y, z)."""
    nx, ny, nz = grid.spec.extents
    d = grid.d
    bev = np.zeros((nx, ny, nz, d))
    if len(grid):
        x, y, z = grid.coords.T
        bev[x, y, z] = grid.feats
    return bev.reshape(nx, ny, nz * d)
