import json
import os

import numpy as np
import pytest

from planarpx import fileio
from planarpx.cli import main
from planarpx.core import CameraIntrinsics, PlaneModel, RigidMotion, ScalarGrid


@pytest.fixture
def workdir(tmp_path):
    os.makedirs(tmp_path / "out", exist_ok=True)
    return tmp_path


def write_inputs(tmp_path):
    K = CameraIntrinsics(45.0, 45.0, 24.0, 16.0)
    fileio.write_intrinsics(str(tmp_path / "K.txt"), K)
    from planarpx.synthetic import Box, SyntheticScene

    scene = SyntheticScene(
        PlaneModel(np.array([0.0, 1.0, 0.0]), 1.5),
        [Box([0.0, 10.0, 0.6], [3.0, 2.0, 1.2]), Box([-2.5, 14.0, 1.0], [2.0, 2.0, 2.0])],
    )
    fileio.write_scene(str(tmp_path / "scene.yaml"), scene)
    motion = RigidMotion(np.eye(3), np.array([0.0, 0.0, 0.75]))
    fileio.write_pose_kitti(str(tmp_path / "motion.txt"), [motion])
    return K, scene, motion


def run(args):
    return main([str(a) for a in args])


def test_unknown_flag_is_hard_error(capsys):
    with pytest.raises(SystemExit):
        run(["eval", "--pred", "x", "--gt", "y", "--frobnicate"])


def test_missing_file_reports_io_error(tmp_path, capsys):
    rc = run(["eval", "--pred", tmp_path / "nope.png", "--gt", tmp_path / "nope.png"])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_synth_and_eval_self(workdir, capsys):
    write_inputs(workdir)
    out = workdir / "out"
    rc = run(
        ["synth", "--scene", workdir / "scene.yaml", "--intrinsics", workdir / "K.txt",
         "--out", out, "--width", 48, "--height", 36, "--motion", workdir / "motion.txt",
         "--json", workdir / "synth.json"]
    )
    assert rc == 0
    rec = json.load(open(workdir / "synth.json"))
    assert rec["t_z"] == 0.75
    assert rec["valid_fraction"] > 0.4

    rc = run(["eval", "--pred", out / "depth.bin", "--gt", out / "depth.bin",
              "--json", workdir / "eval.json"])
    assert rc == 0
    rec = json.load(open(workdir / "eval.json"))
    assert rec["abs_rel"] == 0.0
    assert rec["delta1"] == 1.0


def test_warp_reports_alignment_split(workdir, capsys):
    write_inputs(workdir)
    out = workdir / "out"
    run(["synth", "--scene", workdir / "scene.yaml", "--intrinsics", workdir / "K.txt",
         "--out", out, "--width", 48, "--height", 36, "--motion", workdir / "motion.txt"])
    rc = run(
        ["warp", "--depth", out / "depth.bin", "--intrinsics", workdir / "K.txt",
         "--motion", workdir / "motion.txt", "--plane", out / "plane_source.txt",
         "--height-grid", out / "height.bin", "--json", workdir / "warp.json"]
    )
    assert rc == 0
    rec = json.load(open(workdir / "warp.json"))
    assert rec["ground_residual_rms_px"] < 1e-6
    assert rec["object_residual_mean_px"] > 0.01
    # inputs pass through float32 rasters, so agreement is at raster precision
    assert rec["object_formula_max_diff_px"] < 1e-6


def test_flow_pipeline_roundtrip(workdir):
    """synth -> flow2gamma -> gamma2depth -> eval against the oracle depth."""
    write_inputs(workdir)
    out = workdir / "out"
    run(["synth", "--scene", workdir / "scene.yaml", "--intrinsics", workdir / "K.txt",
         "--out", out, "--width", 48, "--height", 36, "--motion", workdir / "motion.txt"])
    rc = run(
        ["flow2gamma", "--flow", out / "flow.flo", "--motion", workdir / "motion.txt",
         "--plane", out / "plane_source.txt", "--intrinsics", workdir / "K.txt",
         "--out", out / "gamma_rec.bin", "--json", workdir / "f2g.json"]
    )
    assert rc == 0
    rc = run(
        ["gamma2depth", "--gamma", out / "gamma_rec.bin", "--plane", out / "plane.txt",
         "--intrinsics", workdir / "K.txt", "--out", out / "depth_rec.bin"]
    )
    assert rc == 0
    rc = run(["eval", "--pred", out / "depth_rec.bin", "--gt", out / "depth.bin",
              "--json", workdir / "eval.json"])
    assert rc == 0
    rec = json.load(open(workdir / "eval.json"))
    assert rec["abs_rel"] < 1e-6


def test_flow2gamma_lateral_motion_diagnostic(workdir, capsys):
    write_inputs(workdir)
    out = workdir / "out"
    run(["synth", "--scene", workdir / "scene.yaml", "--intrinsics", workdir / "K.txt",
         "--out", out, "--width", 48, "--height", 36, "--motion", workdir / "motion.txt"])
    lateral = RigidMotion(np.eye(3), np.array([0.3, 0.0, 0.0]))
    fileio.write_pose_kitti(str(workdir / "lateral.txt"), [lateral])
    capsys.readouterr()
    rc = run(
        ["flow2gamma", "--flow", out / "flow.flo", "--motion", workdir / "lateral.txt",
         "--plane", out / "plane_source.txt", "--intrinsics", workdir / "K.txt",
         "--out", out / "g.bin"]
    )
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:lateral-motion:")
    assert not os.path.exists(out / "g.bin")  # no partial output


def test_fit_plane_on_oracle_ground(workdir):
    write_inputs(workdir)
    out = workdir / "out"
    # ground-only scene
    from planarpx.synthetic import SyntheticScene

    scene = SyntheticScene(PlaneModel(np.array([0.0, 1.0, 0.0]), 1.5), [])
    fileio.write_scene(str(workdir / "flat.yaml"), scene)
    run(["synth", "--scene", workdir / "flat.yaml", "--intrinsics", workdir / "K.txt",
         "--out", out, "--width", 48, "--height", 36])
    rc = run(["fit-plane", "--depth", out / "depth.bin", "--intrinsics", workdir / "K.txt",
              "--out", workdir / "fitted.txt", "--seed", 7,
              "--json", workdir / "fit.json"])
    assert rc == 0
    rec = json.load(open(workdir / "fit.json"))
    assert rec["inlier_fraction"] == 1.0
    fitted = fileio.read_plane(str(workdir / "fitted.txt"))
    assert np.allclose(fitted.normal, [0, 1, 0], atol=1e-6)
    assert fitted.camera_height == pytest.approx(1.5, abs=1e-6)


def test_mean_plane_cli(workdir):
    a = PlaneModel(np.array([0.0, 1.0, 0.0]), 1.4)
    b = PlaneModel(np.array([0.0, 1.0, 0.0]), 1.6)
    fileio.write_plane(str(workdir / "pa.txt"), a)
    fileio.write_plane(str(workdir / "pb.txt"), b)
    rc = run(["mean-plane", "--planes", workdir / "pa.txt", workdir / "pb.txt",
              "--out", workdir / "pm.txt"])
    assert rc == 0
    m = fileio.read_plane(str(workdir / "pm.txt"))
    assert m.camera_height == pytest.approx(1.5)


def test_icp_refine_cli(workdir, rng):
    K, _, _ = write_inputs(workdir)
    depth = ScalarGrid(rng.uniform(5, 15, (36, 48)))
    fileio.write_grid(str(workdir / "a.bin"), depth)
    fileio.write_grid(str(workdir / "b.bin"), depth)
    rc = run(["icp-refine", "--src", workdir / "a.bin", "--tgt", workdir / "b.bin",
              "--intrinsics", workdir / "K.txt", "--json", workdir / "icp.json"])
    assert rc == 0
    rec = json.load(open(workdir / "icp.json"))
    assert rec["residual_trace"][0] < 1e-9
    assert np.allclose(rec["rotation"], np.eye(3), atol=1e-9)


def test_loss_cli(workdir):
    write_inputs(workdir)
    out = workdir / "out"
    run(["synth", "--scene", workdir / "scene.yaml", "--intrinsics", workdir / "K.txt",
         "--out", out, "--width", 48, "--height", 36])
    rc = run(["loss", "--pred-gamma", out / "gamma.bin", "--gt-gamma", out / "gamma.bin",
              "--plane", out / "plane.txt", "--intrinsics", workdir / "K.txt",
              "--json", workdir / "loss.json"])
    assert rc == 0
    rec = json.load(open(workdir / "loss.json"))
    assert rec["gamma_l1"] == 0.0
    assert rec["silog"] == 0.0
    assert rec["total"] == 0.0
    assert rec["weights"] == {"w_gamma": 1.0, "w_depth": 0.01, "lambda": 0.85, "alpha": 10.0}


def test_machine_output_is_deterministic(workdir, capsys):
    write_inputs(workdir)
    out = workdir / "out"
    args = ["synth", "--scene", workdir / "scene.yaml", "--intrinsics", workdir / "K.txt",
            "--out", out, "--width", 32, "--height", 24, "--motion", workdir / "motion.txt",
            "--json", workdir / "a.json"]
    assert run(args) == 0
    first = open(workdir / "a.json", "rb").read()
    args[-1] = workdir / "b.json"
    assert run(args) == 0
    assert open(workdir / "b.json", "rb").read() == first
