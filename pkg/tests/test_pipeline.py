import json

import numpy as np
import pytest

from hmt3d.numerics import make_rng
from hmt3d.pipeline import (BackboneConfig, backbone_forward, bev_checksum, hmt_block, init_block_params, init_lift,
                            read_bev, resolve_threads, run_hmt_block, write_bev)
from hmt3d.scenes import bundled_scene, synthetic_scene
from hmt3d.voxel_grid import PointCloud, SparseVoxelGrid, voxelize


def small_config(**overrides):
    base = dict(profile="custom", range_min=[0, -8, -2], range_max=[16, 8, 2], voxel_size=[0.5, 0.5, 0.25],
                feature_dim=8, heads=2, state_dim=4, blocks=3, group_sizes=[64, 32, 16],
                window_shape=[8, 8, 8], group_size=20, seed=3)
    base.update(overrides)
    return BackboneConfig.from_dict(base)


def small_cloud(seed=0, n=600):
    rng = make_rng(seed)
    pts = np.c_[rng.uniform(-1, 17, n), rng.uniform(-9, 9, n), rng.uniform(-2.5, 2.5, n), rng.random(n)]
    return PointCloud(pts)


def test_defaults_are_the_published_constants():
    cfg = BackboneConfig()
    assert cfg.blocks == 5 and cfg.group_sizes == [4096, 2048, 1024, 512, 512]
    assert cfg.window_shape == [64, 64, 32] and cfg.group_size == 90
    assert cfg.knn_k == 8 and cfg.gen_ratio == 0.2
    assert BackboneConfig.preset("kitti").feature_dim == 64
    assert BackboneConfig.preset("once").feature_dim == 128
    assert BackboneConfig.preset("once").grid_spec.extents == (376, 376, 32)


@pytest.mark.parametrize("bad", [
    {"blocks": 0}, {"group_sizes": [1, 2]}, {"gen_ratio": 0}, {"gen_ratio": 1.5}, {"knn_k": 1},
    {"window_shape": [4, 4]}, {"profile": "nuscenes"}, {"feature_dim": 10}, {"profile": "custom"},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        BackboneConfig.from_dict(bad)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        BackboneConfig.from_dict({"group_szie": 10})


def test_config_round_trip(tmp_path):
    cfg = small_config()
    text = cfg.dumps()
    path = tmp_path / "cfg.json"
    path.write_text(text)
    again = BackboneConfig.load(path)
    assert again == cfg and again.dumps() == text
    assert BackboneConfig.from_dict(json.loads(again.dumps())).dumps() == text


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv("HMT_THREADS", raising=False)
    assert resolve_threads() == 1
    monkeypatch.setenv("HMT_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2
    assert resolve_threads(0) >= 1
    with pytest.raises(ValueError):
        resolve_threads(-1)


def test_single_voxel_block():
    cfg = small_config(blocks=1, group_sizes=[8])
    spec = cfg.grid_spec
    grid = SparseVoxelGrid(spec, [[10, 10, 4]], make_rng(0).normal(size=(1, 8)))
    out = hmt_block(grid, init_block_params(cfg, 0), cfg, 0)
    assert len(out) >= 1
    assert {tuple(c) for c in out.coords.tolist()} >= {(10, 10, 4)}


def test_block_grows_and_is_deterministic():
    cfg = small_config()
    grid = voxelize(small_cloud(), cfg.grid_spec, 8, lift=init_lift(cfg))
    params = init_block_params(cfg, 0)
    a = run_hmt_block(grid, params, cfg, 0)
    b = run_hmt_block(grid, params, cfg, 0)
    assert len(a.grid) >= len(grid)
    assert set(map(tuple, grid.coords.tolist())) <= set(map(tuple, a.grid.coords.tolist()))
    assert a.grid.feats.tobytes() == b.grid.feats.tobytes()


def test_empty_cloud():
    cfg = small_config()
    bev, report = backbone_forward(PointCloud(np.zeros((0, 4))), cfg, threads=1)
    assert not bev.any()
    assert report.initial_voxels == 0
    assert all(b["voxels_out"] == 0 and b["selected"] == 0 for b in report.blocks)
    assert bev.shape == (32, 32, 4 * 8)


def test_single_block_skips_compression():
    cfg = small_config(blocks=1, group_sizes=[64])
    bev, report = backbone_forward(small_cloud(), cfg, threads=1)
    assert bev.shape == (32, 32, 16 * 8)
    assert report.blocks[0]["z_extent"] == 16


def test_report_contents():
    cfg = small_config()
    bev, report = backbone_forward(small_cloud(), cfg, threads=1)
    z = [b["z_extent"] for b in report.blocks]
    assert z == [8, 4, 4] and z == sorted(z, reverse=True)
    for b in report.blocks:
        assert b["voxels_after_generation"] == b["voxels_before_generation"] + b["selected"]
        assert b["voxels_out"] <= b["voxels_after_generation"]
    for prev, nxt in zip(report.blocks, report.blocks[1:]):
        assert nxt["voxels_in"] == prev["voxels_out"]
    assert report.bev_checksum == bev_checksum(bev)
    assert report.config == cfg.to_dict()
    assert json.loads(report.to_json())["bev_shape"] == list(bev.shape)


def test_deterministic_across_threads():
    cfg = small_config()
    sums = {backbone_forward(small_cloud(), cfg, threads=t)[1].bev_checksum for t in (1, 4, 1)}
    assert len(sums) == 1


def test_seed_changes_output():
    a = backbone_forward(small_cloud(), small_config(seed=1), threads=1)[1].bev_checksum
    b = backbone_forward(small_cloud(), small_config(seed=2), threads=1)[1].bev_checksum
    assert a != b


def test_bev_dump_round_trip(tmp_path, rng):
    bev = rng.normal(size=(3, 4, 6))
    path = tmp_path / "bev.bin"
    write_bev(path, bev)
    raw = path.read_bytes()
    assert len(raw) == 12 + bev.size * 8
    assert np.frombuffer(raw[:12], "<u4").tolist() == [3, 4, 6]
    assert np.array_equal(read_bev(path), bev)


def test_bundled_scene_matches_generator():
    cloud = bundled_scene()
    assert len(cloud) == 5000
    assert np.array_equal(cloud.points, synthetic_scene(5000, 7).points)


def test_once_profile_smoke():
    cfg = BackboneConfig.preset("once", blocks=2, group_sizes=[256, 128], feature_dim=16, heads=4)
    bev, report = backbone_forward(small_cloud(n=300), cfg, threads=1)
    assert bev.shape == (376, 376, 16 * 16)
    assert report.initial_voxels > 0
