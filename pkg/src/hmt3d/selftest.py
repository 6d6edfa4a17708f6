"""Quick oracle checks for every module, runnable from the CLI."""
import itertools

import numpy as np

from . import oracles
from .attention import AttentionParams, cross_attention_pair, knn_table, scaled_dot_attention
from .curves import hilbert_coord, hilbert_index
from .grouping import equal_overlap_groups, group_within_window
from .numerics import LinearParams, MLPParams, make_rng, matmul, mlp_forward, softmax_masked
from .ssm import SSMParams, selective_scan
from .voxel_gen import ConvKernel, subm_sparse_conv
from .voxel_grid import GridSpec, PointCloud, SparseVoxelGrid, voxelize, z_compress


def _random_grid(rng, extents, count, d):
    cells = rng.choice(int(np.prod(extents)), size=count, replace=False)
    coords = np.stack(np.unravel_index(cells, extents), axis=1)
    return SparseVoxelGrid(GridSpec.unit(extents), coords, rng.normal(size=(count, d)))


def check_matmul(rng):
    a, b = rng.normal(size=(7, 5)), rng.normal(size=(5, 3))
    return np.abs(matmul(a, b) - oracles.triple_loop_matmul(a, b)).max() <= 1e-12


def check_softmax(rng):
    for _ in range(20):
        n = int(rng.integers(1, 10))
        logits, mask = rng.normal(size=n) * 5, rng.random(n) < 0.7
        mask[rng.integers(n)] = True
        if np.abs(softmax_masked(logits, mask) - oracles.reduced_softmax(logits, mask)).max() > 1e-12:
            return False
    return True


def check_mlp(rng):
    p = MLPParams.init(rng, 3, 6, 4)
    x = rng.normal(size=(4, 3))
    return np.abs(mlp_forward(x, p) - oracles.scalar_mlp(x, p)).max() <= 1e-10


def check_voxelize(rng):
    spec = GridSpec((0, 0, 0), (4, 4, 2), (0.5, 0.5, 0.25))
    pts = np.c_[rng.uniform(-0.5, 4.5, (500, 3)) * [1, 1, 0.5], rng.random(500)]
    grid = voxelize(PointCloud(pts), spec, 8, rng=rng)
    cells = oracles.bin_points(pts, spec.range_min, spec.range_max, spec.voxel_size)
    return set(map(tuple, grid.coords.tolist())) == set(cells)


def check_z_compress(rng):
    grid = _random_grid(rng, (6, 6, 9), 60, 4)
    out = z_compress(grid, LinearParams.init(rng, 4, 4))
    expected = {(x, y, z // 2) for x, y, z in grid.coords.tolist()}
    return set(map(tuple, out.coords.tolist())) == expected and out.spec.extents[2] == 5


def check_hilbert(rng):
    return all(oracles.hilbert_path_ok(b, hilbert_index, hilbert_coord) for b in (1, 2, 3))


def check_grouping(rng):
    for length, m in itertools.product(range(1, 65), range(1, 17)):
        if oracles.layout_violations(equal_overlap_groups(length, m), length, m):
            return False
    batch = group_within_window(rng.integers(0, 8, (100, 3)), np.arange(100), "hilbert", 90, 3)
    return batch.num_groups == 2 and batch.mask.sum(axis=1).tolist() == [50, 50]


def check_scan(rng):
    for _ in range(20):
        m, d, n = int(rng.integers(1, 33)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        p = SSMParams.init(rng, d, n)
        x = rng.normal(size=(m, d))
        for direction in ("forward", "backward"):
            if np.abs(selective_scan(x, p, direction) - oracles.naive_scan(x, p, direction)).max() > 1e-9:
                return False
    return True


def check_attention(rng):
    for _ in range(20):
        g, dk = 6, 4
        Q, K, V = (rng.normal(size=(g, dk)) for _ in range(3))
        mask = np.ones(g, bool)
        mask[rng.choice(g, 2, replace=False)] = False
        got = scaled_dot_attention(Q, K, V, mask)
        if np.abs(got - oracles.dense_masked_attention(Q, K, V, mask)).max() > 1e-9:
            return False
    params = AttentionParams.init(rng, 8, heads=2)
    a, b = rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
    mask = np.array([True, True, True, False, False])
    out_h, _ = cross_attention_pair(a, b, params, mask, mask)
    ref = oracles.per_head_attention(a, b, mask, params.h_query, 2)
    return np.abs(out_h - ref).max() <= 1e-10


def check_knn(rng):
    coords = np.unique(rng.integers(0, 6, (40, 3)), axis=0)
    ids = rng.permutation(len(coords)) * 3
    table = knn_table(coords, ids, 8)
    ref = oracles.brute_knn(coords, ids, 8)
    return all(list(table.neighbors[r, :table.counts[r]]) == ref[int(i)] for r, i in enumerate(table.ids))


def check_subm_conv(rng):
    grid = _random_grid(rng, (5, 5, 5), 40, 3)
    kernel = ConvKernel.init(rng, 3, 2)
    got = subm_sparse_conv(grid, kernel)
    ref = oracles.dense_subm_conv(grid.coords, grid.feats, grid.spec.extents, kernel.weight, kernel.bias)
    return np.abs(got.feats - ref).max() <= 1e-10


CHECKS = [
    ("numerics.matmul", check_matmul),
    ("numerics.softmax_masked", check_softmax),
    ("numerics.mlp_forward", check_mlp),
    ("voxel_grid.voxelize", check_voxelize),
    ("voxel_grid.z_compress", check_z_compress),
    ("curves.hilbert", check_hilbert),
    ("grouping.layouts", check_grouping),
    ("ssm.selective_scan", check_scan),
    ("attention.masked", check_attention),
    ("attention.knn", check_knn),
    ("voxel_gen.subm_conv", check_subm_conv),
]


def run_selftest(seed=0, out=print):
    ok = True
    for name, check in CHECKS:
        passed = bool(check(make_rng(seed)))
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok
