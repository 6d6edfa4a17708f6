import argparse
import csv
import json
import logging
import sys

from .curves import CurveKind, CurveOrder, curve_visits, sequence_voxels
from .grouping import equal_overlap_groups, window_groups
from .pipeline import (BackboneConfig, backbone_forward, init_block_params, init_lift,
                       resolve_threads, write_bev)
from .scenes import bundled_scene, synthetic_scene
from .voxel_gen import SensorPose, voxel_generation, write_heatmap
from .voxel_grid import read_kitti_bin, voxelize, write_kitti_bin

CONFIG_FLAGS = {
    "seed": "seed", "blocks": "blocks", "group_sizes": "group_sizes", "window": "window_shape",
    "g": "group_size", "k": "knn_k", "ratio": "gen_ratio", "dim": "feature_dim",
}


def _add_config_args(p):
    p.add_argument("--input", help="KITTI velodyne .bin (default: bundled synthetic scene)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--profile", choices=["kitti", "once", "custom"])
    p.add_argument("--seed", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--group-sizes", dest="group_sizes", type=int, nargs="+")
    p.add_argument("--window", type=int, nargs=3)
    p.add_argument("--g", type=int, help="transformer group size")
    p.add_argument("--k", type=int, help="neighbors for relative position encoding")
    p.add_argument("--ratio", type=float, help="voxel generation ratio")
    p.add_argument("--dim", type=int, help="feature dim")


def build_config(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    if args.profile:
        data["profile"] = args.profile
    for flag, key in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if "blocks" in data and "group_sizes" not in data:
        defaults = BackboneConfig().group_sizes
        data["group_sizes"] = (defaults + defaults[-1:] * data["blocks"])[:data["blocks"]]
    return BackboneConfig.from_dict(data)


def load_cloud(args):
    return read_kitti_bin(args.input) if args.input else bundled_scene()


def cmd_run(args):
    config = build_config(args)
    heat = {}

    def keep(block, result):
        if block == args.heatmap_block:
            heat["rows"] = result.heatmap_rows()

    bev, report = backbone_forward(load_cloud(args), config, resolve_threads(args.threads),
                                   on_generation=keep if args.emit_heatmap else None)
    text = report.to_json()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.bev_dump:
        write_bev(args.bev_dump, bev)
    if args.emit_heatmap:
        write_heatmap(args.emit_heatmap, heat.get("rows", []))
    return 0


def cmd_curve(args):
    rows = curve_visits(args.bits, CurveKind(args.order))
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["index", "x", "y", "z"])
        writer.writerows(rows)
    finally:
        if args.output:
            fh.close()
    return 0


def cmd_groups(args):
    config = build_config(args)
    grid = voxelize(load_cloud(args), config.grid_spec, config.feature_dim, lift=init_lift(config))
    m = args.m or config.group_sizes[0]
    order = sequence_voxels(grid.coords, CurveOrder(CurveKind(args.axis)))
    windows = []
    for wid, members, batch_h, batch_ht in window_groups(grid.coords, config.window_shape, config.group_size):
        windows.append({"window": list(wid), "members": members.tolist(),
                        "hilbert": batch_h.to_json(), "trans_hilbert": batch_ht.to_json()})
    doc = {
        "voxels": len(grid),
        "mamba": {"axis": args.axis, "order": order.tolist(), "layout": equal_overlap_groups(len(grid), m).to_json()},
        "transformer": {"window_shape": config.window_shape, "windows": windows},
    }
    text = json.dumps(doc)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_heatmap(args):
    """Voxel generation on the freshly voxelized input, with block-0 weights."""
    config = build_config(args)
    grid = voxelize(load_cloud(args), config.grid_spec, config.feature_dim, lift=init_lift(config))
    params = init_block_params(config, 0).generation
    sensor = SensorPose.from_metric(config.sensor_position, grid.spec)
    result = voxel_generation(grid, sensor, config.gen_ratio, params.kernel, params.scorer)
    write_heatmap(args.output, result.heatmap_rows())
    print(f"{len(result.diffused)} candidates, {len(result.selected)} selected -> {args.output}")
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest
    return 0 if run_selftest(args.seed) else 1


def cmd_synth(args):
    write_kitti_bin(args.output, synthetic_scene(args.points, args.seed))
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="hmt3d", description="Hybrid SSM/attention voxel backbone, forward only.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="forward pass; writes a run report")
    _add_config_args(p)
    p.add_argument("--threads", type=int, help="worker threads (0 = one per CPU; default HMT_THREADS or 1)")
    p.add_argument("--report", help="write the report JSON here instead of stdout")
    p.add_argument("--bev-dump", help="binary BEV dump path")
    p.add_argument("--emit-heatmap", help="CSV of generation candidates (x,y,z,score,selected)")
    p.add_argument("--heatmap-block", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("curve", help="Hilbert visit order as CSV")
    p.add_argument("--order", choices=[CurveKind.HILBERT.value, CurveKind.TRANS_HILBERT.value], default="hilbert")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("groups", help="dump group layouts as JSON")
    _add_config_args(p)
    p.add_argument("--m", type=int, help="mamba group size (default: first block's)")
    p.add_argument("--axis", choices=[CurveKind.AXIS_X.value, CurveKind.AXIS_Y.value], default="axis-x")
    p.add_argument("--output")
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("heatmap", help="generation candidate scores as CSV")
    _add_config_args(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("synth", help="write a synthetic KITTI-format scene")
    p.add_argument("--output", required=True)
    p.add_argument("--points", type=int, default=5000)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"hmt3d: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
