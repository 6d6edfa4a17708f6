"""Deterministic synthetic LiDAR scenes for smoke runs and tests."""
from importlib import resources

import numpy as np

from .numerics import make_rng
from .voxel_grid import PointCloud, read_kitti_bin

BUNDLED_SCENE = "scene_kitti_5k.bin"


def synthetic_scene(num_points=5000, seed=7):
    """Ground returns on scan rings plus a handful of box-shaped objects.

    Roughly 5% of points land outside the KITTI range so cropping is exercised.
    Values are rounded through float32 so a write/read round trip is exact.
    """
    rng = make_rng(seed)
    n_obj = num_points // 4
    n_ground = num_points - n_obj

    ring = rng.integers(0, 32, n_ground)
    radius = 4.0 + 2.2 * ring + rng.normal(0, 0.05, n_ground)
    theta = rng.uniform(-np.pi / 2, np.pi / 2, n_ground)
    ground = np.stack([radius * np.cos(theta), radius * np.sin(theta),
                       -1.73 + rng.normal(0, 0.03, n_ground),
                       rng.uniform(0, 0.3, n_ground)], axis=1)

    centers = np.stack([rng.uniform(5, 60, 8), rng.uniform(-30, 30, 8)], axis=1)
    owner = rng.integers(0, 8, n_obj)
    local = rng.uniform(-1, 1, (n_obj, 3)) * np.array([2.0, 0.9, 0.75])
    # push points onto the box faces facing the sensor
    face = rng.integers(0, 2, n_obj)
    local[face == 0, 0] = -2.0
    local[face == 1, 1] = -0.9 * np.sign(centers[owner[face == 1], 1])
    objects = np.stack([centers[owner, 0] + local[:, 0], centers[owner, 1] + local[:, 1],
                        -0.98 + local[:, 2], rng.uniform(0.2, 0.9, n_obj)], axis=1)

    pts = np.vstack([ground, objects])
    pts = pts[rng.permutation(len(pts))]
    return PointCloud(pts.astype(np.float32).astype(np.float64))


def bundled_scene():
    with resources.as_file(resources.files("hmt3d.data") / BUNDLED_SCENE) as path:
        return read_kitti_bin(path)
