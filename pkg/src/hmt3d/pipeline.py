"""Backbone assembly: voxelize, N hybrid blocks with Z-compression, BEV."""
import hashlib
import json
import logging
import os
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attention import AttentionParams, grouped_transformer_block
from .numerics import LinearParams, child_rng
from .ssm import MambaBlockParams, serialized_mamba_block
from .voxel_gen import GenerationParams, SensorPose, voxel_generation
from .voxel_grid import GridSpec, SparseVoxelGrid, bev_flatten, voxelize, z_compress

log = logging.getLogger(__name__)

PROFILES = {
    "kitti": {"feature_dim": 64, "grid": GridSpec.kitti},
    "once": {"feature_dim": 128, "grid": GridSpec.once},
}


@dataclass
class BackboneConfig:
    blocks: int = 5
    group_sizes: list = field(default_factory=lambda: [4096, 2048, 1024, 512, 512])
    window_shape: list = field(default_factory=lambda: [64, 64, 32])
    group_size: int = 90
    knn_k: int = 8
    gen_ratio: float = 0.2
    feature_dim: int = 64
    profile: str = "kitti"
    seed: int = 0
    state_dim: int = 16
    heads: int = 4
    sensor_position: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    # only read for the "custom" profile
    range_min: list = None
    range_max: list = None
    voxel_size: list = None

    def __post_init__(self):
        self.group_sizes = [int(m) for m in self.group_sizes]
        self.window_shape = [int(t) for t in self.window_shape]
        self.sensor_position = [float(v) for v in self.sensor_position]
        self.validate()

    def validate(self):
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if len(self.group_sizes) != self.blocks:
            raise ValueError(f"need {self.blocks} group sizes, got {len(self.group_sizes)}")
        if any(m < 1 for m in self.group_sizes):
            raise ValueError("group sizes must be positive")
        if len(self.window_shape) != 3 or any(t < 1 for t in self.window_shape):
            raise ValueError("window_shape must be three positive ints")
        if self.group_size < 1 or self.knn_k < 2:
            raise ValueError("group_size must be >= 1 and knn_k >= 2")
        if not 0 < self.gen_ratio <= 1:
            raise ValueError("gen_ratio must be in (0, 1]")
        if self.feature_dim < 4 or self.feature_dim % self.heads:
            raise ValueError("feature_dim must be >= 4 and divisible by heads")
        if self.profile not in PROFILES and self.profile != "custom":
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "custom" and None in (self.range_min, self.range_max, self.voxel_size):
            raise ValueError("custom profile needs range_min, range_max and voxel_size")

    @classmethod
    def preset(cls, profile, **overrides):
        base = {"profile": profile}
        if profile in PROFILES:
            base["feature_dim"] = PROFILES[profile]["feature_dim"]
        base.update(overrides)
        return cls(**base)

    @property
    def grid_spec(self):
        if self.profile == "custom":
            return GridSpec(self.range_min, self.range_max, self.voxel_size)
        return PROFILES[self.profile]["grid"]()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        profile = data.get("profile", "kitti")
        return cls.preset(profile, **{k: v for k, v in data.items() if k != "profile"})

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def resolve_threads(threads=None):
    """Explicit count, else HMT_THREADS, else 1; 0 means one per CPU."""
    if threads is None:
        threads = int(os.environ.get("HMT_THREADS", "1") or 1)
    if threads < 0:
        raise ValueError("thread count must be >= 0")
    return threads or (os.cpu_count() or 1)


@dataclass(frozen=True)
class BlockParams:
    mamba_x: MambaBlockParams
    mamba_y: MambaBlockParams
    attention: AttentionParams
    generation: GenerationParams
    compress: LinearParams = None  # absent on the last block


def init_block_params(config, block):
    seed, d = config.seed, config.feature_dim
    last = block == config.blocks - 1
    return BlockParams(
        mamba_x=MambaBlockParams.init(child_rng(seed, block, "mamba_x"), d, config.state_dim),
        mamba_y=MambaBlockParams.init(child_rng(seed, block, "mamba_y"), d, config.state_dim),
        attention=AttentionParams.init(child_rng(seed, block, "attention"), d, config.heads),
        generation=GenerationParams.init(child_rng(seed, block, "generation"), d),
        compress=None if last else LinearParams.init(child_rng(seed, block, "compress"), d, d),
    )


def init_lift(config):
    return LinearParams.init(child_rng(config.seed, "lift"), 4, config.feature_dim)


def hmt_block(grid, params, config, block, threads=1):
    """SSM(axis-x) -> grouped transformer -> SSM(axis-y) -> voxel generation."""
    return run_hmt_block(grid, params, config, block, threads).grid


def run_hmt_block(grid, params, config, block, threads=1, on_generation=None):
    grid = serialized_mamba_block(grid, "axis-x", config.group_sizes[block], params.mamba_x)
    grid = grouped_transformer_block(grid, config.window_shape, config.group_size, config.knn_k,
                                     params.attention, threads=threads)
    grid = serialized_mamba_block(grid, "axis-y", config.group_sizes[block], params.mamba_y)
    sensor = SensorPose.from_metric(config.sensor_position, grid.spec)
    result = voxel_generation(grid, sensor, config.gen_ratio,
                              params.generation.kernel, params.generation.scorer)
    if on_generation is not None:
        on_generation(block, result)
    return result


@dataclass
class RunReport:
    config: dict
    initial_voxels: int
    blocks: list
    bev_shape: list
    bev_checksum: str
    seconds: float

    def to_json(self):
        return json.dumps(asdict(self), indent=2)


def bev_checksum(bev):
    h = hashlib.sha256()
    h.update(np.asarray(bev.shape, dtype="<u4").tobytes())
    h.update(np.ascontiguousarray(bev, dtype="<f8").tobytes())
    return h.hexdigest()


def write_bev(path, bev):
    """Header of three little-endian uint32 (X, Y, channels), then row-major float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3I", *bev.shape))
        fh.write(np.ascontiguousarray(bev, dtype="<f8").tobytes())


def read_bev(path):
    raw = Path(path).read_bytes()
    shape = struct.unpack("<3I", raw[:12])
    return np.frombuffer(raw[12:], dtype="<f8").reshape(shape)


def backbone_forward(cloud, config, threads=None, on_generation=None):
    """Full forward pass. Returns (bev, RunReport)."""
    threads = resolve_threads(threads)
    start = time.perf_counter()
    spec = config.grid_spec
    grid = voxelize(cloud, spec, config.feature_dim, lift=init_lift(config))
    initial = len(grid)
    blocks = []
    for b in range(config.blocks):
        last = b == config.blocks - 1
        if not len(grid):
            if not last:
                grid = SparseVoxelGrid.empty(grid.spec.halve_z(), config.feature_dim)
            blocks.append({"block": b, "voxels_in": 0, "voxels_before_generation": 0,
                           "candidates": 0, "selected": 0, "voxels_after_generation": 0,
                           "voxels_out": 0, "z_extent": grid.spec.extents[2], "seconds": 0.0})
            continue
        t0 = time.perf_counter()
        params = init_block_params(config, b)
        n_in = len(grid)
        result = run_hmt_block(grid, params, config, b, threads, on_generation)
        grid = result.grid
        n_gen = len(grid)
        if not last:
            grid = z_compress(grid, params.compress)
        blocks.append({
            "block": b, "voxels_in": n_in, "voxels_before_generation": n_in,
            "candidates": len(result.diffused), "selected": int(len(result.selected)),
            "voxels_after_generation": n_gen, "voxels_out": len(grid),
            "z_extent": grid.spec.extents[2], "seconds": round(time.perf_counter() - t0, 4),
        })
        log.info("block %d: %d -> %d voxels (%d generated)", b, n_in, len(grid), len(result.selected))
    bev = bev_flatten(grid)
    report = RunReport(config.to_dict(), initial, blocks, list(bev.shape), bev_checksum(bev),
                       round(time.perf_counter() - start, 4))
    return bev, report
