import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hmt3d.cli import main
from hmt3d.pipeline import read_bev
from hmt3d.scenes import synthetic_scene
from hmt3d.voxel_grid import write_kitti_bin

SMALL = ["--profile", "kitti", "--blocks", "2", "--group-sizes", "256", "128", "--dim", "8",
         "--window", "32", "32", "16", "--g", "30"]


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    path = tmp_path_factory.mktemp("scene") / "scene.bin"
    write_kitti_bin(path, synthetic_scene(800, seed=11))
    return path


def test_curve_bits2(capsys):
    assert main(["curve", "--order", "hilbert", "--bits", "2"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["index", "x", "y", "z"]
    assert len(rows) == 65
    assert len({tuple(r[1:]) for r in rows[1:]}) == 64


def test_curve_to_file(tmp_path):
    out = tmp_path / "th.csv"
    assert main(["curve", "--order", "trans-hilbert", "--bits", "1", "--output", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 9


def test_selftest_exit_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 10


def test_bad_flag_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--no-such-flag"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["curve"])
    assert exc.value.code != 0


def test_missing_file(tmp_path, capsys):
    assert main(["run", "--input", str(tmp_path / "nope.bin")]) == 1
    assert "error" in capsys.readouterr().err


def test_invalid_config_value(capsys):
    assert main(["run", "--ratio", "2"]) == 1


def test_run_report_and_dump(scene, tmp_path):
    report, dump, heat = tmp_path / "r.json", tmp_path / "bev.bin", tmp_path / "heat.csv"
    args = ["run", "--input", str(scene), *SMALL, "--seed", "7", "--threads", "1",
            "--report", str(report), "--bev-dump", str(dump), "--emit-heatmap", str(heat)]
    assert main(args) == 0
    doc = json.loads(report.read_text())
    assert doc["config"]["seed"] == 7 and doc["config"]["group_sizes"] == [256, 128]
    assert list(read_bev(dump).shape) == doc["bev_shape"]
    rows = heat.read_text().splitlines()
    assert rows[0] == "x,y,z,score,selected"
    assert len(rows) - 1 == doc["blocks"][0]["candidates"]
    assert main(args[:-6] + ["--report", str(tmp_path / "r2.json")]) == 0
    assert json.loads((tmp_path / "r2.json").read_text())["bev_checksum"] == doc["bev_checksum"]


def test_config_file_with_override(scene, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"blocks": 1, "group_sizes": [128], "feature_dim": 8, "seed": 5,
                               "window_shape": [32, 32, 16]}))
    out = tmp_path / "r.json"
    assert main(["run", "--input", str(scene), "--config", str(cfg), "--seed", "9", "--report", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["seed"] == 9 and doc["config"]["blocks"] == 1


def test_groups_json(scene, tmp_path):
    out = tmp_path / "g.json"
    assert main(["groups", "--input", str(scene), *SMALL, "--m", "64", "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    lay = doc["mamba"]["layout"]
    assert lay["L"] == doc["voxels"] and lay["m"] == 64
    assert sorted(doc["mamba"]["order"]) == list(range(doc["voxels"]))
    members = sum((w["members"] for w in doc["transformer"]["windows"]), [])
    assert sorted(members) == list(range(doc["voxels"]))
    for w in doc["transformer"]["windows"]:
        g = np.array(w["hilbert"]["groups"])
        assert g.shape[1] == 30 and np.array(w["hilbert"]["mask"]).sum() == len(w["members"])


def test_heatmap_subcommand(scene, tmp_path, capsys):
    out = tmp_path / "h.csv"
    assert main(["heatmap", "--input", str(scene), *SMALL, "--output", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "x,y,z,score,selected" and len(rows) > 1


def test_synth(tmp_path):
    out = tmp_path / "s.bin"
    assert main(["synth", "--output", str(out), "--points", "100"]) == 0
    assert out.stat().st_size == 1600


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "hmt3d.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
