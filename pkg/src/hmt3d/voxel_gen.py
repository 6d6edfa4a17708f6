"""Sensor-aware voxel generation.

Each occupied voxel spawns up to three candidates one step further from the
sensor in x, y and xy. Candidates inherit their parent's feature, are
convolved together with the original voxels by a submanifold convolution,
scored, and the best fraction ``r`` is kept.
"""
import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .numerics import LinearParams, ShapeError, matmul, sigmoid, uniform_init
from .voxel_grid import SparseVoxelGrid, linear_keys

KERNEL_OFFSETS = tuple(itertools.product((-1, 0, 1), repeat=3))


@dataclass(frozen=True)
class SensorPose:
    """Sensor position in continuous voxel coordinates of a grid."""

    position: tuple

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValueError(f"invalid sensor position {self.position!r}")
        object.__setattr__(self, "position", pos)

    @classmethod
    def from_metric(cls, xyz, spec):
        return cls(spec.to_voxel_frame(xyz))


def diffusion_signs(coords, sensor):
    """(R_X, R_Y) per voxel, with sign(0) taken as +1."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    sx, sy, _ = sensor.position
    rx = np.where(coords[:, 0] - sx >= 0, 1, -1)
    ry = np.where(coords[:, 1] - sy >= 0, 1, -1)
    return rx, ry


def _candidate_array(coords, sensor):
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    rx, ry = diffusion_signs(coords, sensor)
    zero = np.zeros_like(rx)
    steps = np.stack([np.stack([rx, zero, zero], 1),
                      np.stack([zero, ry, zero], 1),
                      np.stack([rx, ry, zero], 1)], axis=1)
    return coords[:, None, :] + steps  # (N, 3 candidates, 3)


def diffusion_offsets(coord, sensor, extents=None):
    """The three away-from-sensor neighbors of ``coord``; out-of-grid ones dropped."""
    cands = [tuple(int(v) for v in c) for c in _candidate_array([coord], sensor)[0]]
    if extents is None:
        return cands
    return [c for c in cands if all(0 <= v < e for v, e in zip(c, extents))]


@dataclass(frozen=True)
class DiffusedVoxelSet:
    coords: np.ndarray   # (L_d, 3), unique, none on an occupied input site
    feats: np.ndarray    # (L_d, d), element-wise max over merged parents
    parent: np.ndarray   # (L_d,), lowest contributing voxel id
    spawned: int         # 3N
    in_grid: int         # candidates left after clipping, before filtering/dedup

    def __len__(self):
        return self.coords.shape[0]


def diffuse(grid, sensor):
    n, d = len(grid), grid.d
    ext = np.array(grid.spec.extents)
    cands = _candidate_array(grid.coords, sensor).reshape(-1, 3)
    parent = np.repeat(np.arange(n), 3)
    inside = ((cands >= 0) & (cands < ext)).all(axis=1)
    cands, parent = cands[inside], parent[inside]
    in_grid = len(cands)

    keys = linear_keys(cands, grid.spec.extents)
    free = ~np.isin(keys, grid.keys())
    cands, parent, keys = cands[free], parent[free], keys[free]

    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    feats = np.full((len(uniq), d), -np.inf)
    np.maximum.at(feats, inverse, grid.feats[parent])
    low_parent = np.full(len(uniq), n, dtype=np.int64)
    np.minimum.at(low_parent, inverse, parent)
    return DiffusedVoxelSet(cands[first].reshape(-1, 3), feats.reshape(-1, d), low_parent, 3 * n, in_grid)


@dataclass(frozen=True)
class ConvKernel:
    weight: np.ndarray  # (3, 3, 3, d_in, d_out), indexed by offset + 1
    bias: np.ndarray    # (d_out,)

    @classmethod
    def init(cls, rng, d_in, d_out):
        fan_in = 27 * d_in
        return cls(uniform_init(rng, fan_in, (3, 3, 3, d_in, d_out)), uniform_init(rng, fan_in, (d_out,)))


def subm_sparse_conv(grid, kernel):
    """3x3x3 submanifold convolution: outputs only at the input's active sites."""
    if kernel.weight.shape[3] != grid.d:
        raise ShapeError(f"kernel expects {kernel.weight.shape[3]} channels, grid has {grid.d}")
    d_out = kernel.weight.shape[4]
    out = np.zeros((len(grid), d_out))
    if len(grid):
        ext = np.array(grid.spec.extents)
        keys = grid.keys()
        order = np.argsort(keys)
        sorted_keys = keys[order]
        for off in KERNEL_OFFSETS:
            nb = grid.coords + np.array(off)
            rows = np.flatnonzero(((nb >= 0) & (nb < ext)).all(axis=1))
            nb_keys = linear_keys(nb[rows], grid.spec.extents)
            pos = np.minimum(np.searchsorted(sorted_keys, nb_keys), len(keys) - 1)
            hit = sorted_keys[pos] == nb_keys
            rows, src = rows[hit], order[pos[hit]]
            if len(rows):
                w = kernel.weight[off[0] + 1, off[1] + 1, off[2] + 1]
                out[rows] += matmul(grid.feats[src], w)
        out += kernel.bias
    return grid.with_feats(out) if d_out == grid.d else SparseVoxelGrid(grid.spec, grid.coords, out)


def selection_count(num_candidates, ratio):
    """P = floor(L_d * r), at least 1 whenever there is a candidate."""
    if not 0 < ratio <= 1:
        raise ValueError("generation ratio must be in (0, 1]")
    if num_candidates <= 0:
        return 0
    # guard against products like 0.29 * 100 = 28.999999999999996
    return max(1, min(num_candidates, math.floor(num_candidates * ratio + 1e-9)))


def score_and_select(coords, feats, ratio, scorer):
    """Sigmoid scores and the indices of the top-P candidates, best first.

    Equal scores are ranked by ascending coordinate (x, then y, then z).
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    count = selection_count(len(coords), ratio)
    if not len(coords):
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    scores = sigmoid(scorer(feats)[:, 0])
    rank = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0], -scores))
    return scores, rank[:count]


@dataclass(frozen=True)
class GenerationResult:
    grid: SparseVoxelGrid
    diffused: DiffusedVoxelSet
    scores: np.ndarray
    selected: np.ndarray  # indices into ``diffused``, best first

    def heatmap_rows(self):
        chosen = np.zeros(len(self.diffused), dtype=bool)
        chosen[self.selected] = True
        return [(int(x), int(y), int(z), float(s), int(c))
                for (x, y, z), s, c in zip(self.diffused.coords.tolist(), self.scores, chosen)]


def voxel_generation(grid, sensor, ratio, kernel, scorer):
    diffused = diffuse(grid, sensor)
    n = len(grid)
    union = SparseVoxelGrid(grid.spec, np.vstack([grid.coords, diffused.coords]),
                            np.vstack([grid.feats, diffused.feats]))
    conv = subm_sparse_conv(union, kernel)
    scores, selected = score_and_select(diffused.coords, conv.feats[n:], ratio, scorer)
    keep = np.r_[np.arange(n), n + selected]
    out = SparseVoxelGrid(grid.spec, conv.coords[keep], conv.feats[keep])
    return GenerationResult(out, diffused, scores, selected)


def voxel_generation_block(grid, sensor, ratio, kernel, scorer):
    """Initial voxels (convolved) followed by the top-P generated voxels."""
    return voxel_generation(grid, sensor, ratio, kernel, scorer).grid


@dataclass(frozen=True)
class GenerationParams:
    kernel: ConvKernel
    scorer: LinearParams

    @classmethod
    def init(cls, rng, d):
        return cls(ConvKernel.init(rng, d, d), LinearParams.init(rng, d, 1))


def write_heatmap(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "score", "selected"])
        for x, y, z, s, c in rows:
            writer.writerow([x, y, z, repr(s), c])
