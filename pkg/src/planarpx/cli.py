"""Command-line surface tying the library into runnable pipelines.

Every command prints a human-readable `key = value` table to stdout and, with
--json PATH, writes the same record as JSON. Exit code 0 on success; on error a
single `error:<category>: message` line goes to stderr and the exit code is 2.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import sys

import numpy as np

from . import fileio
from .core import (
    CameraIntrinsics,
    ScalarGrid,
    gamma_grid_to_depth,
    homography_from_motion,
    ppe_map,
)
from .errors import ToolkitError
from .fileio import ToolConfig
from .metrics import depth_metrics, gamma_l1_loss, height_mask, silog_loss, total_loss
from .parallax import gamma_map_from_flow
from .planefit import (
    RansacConfig,
    backproject_depth,
    estimate_normals,
    icp_point_to_plane,
    mean_plane,
    ransac_plane_fit,
)
from .synthetic import (
    level_camera_pose,
    plane_in_camera,
    render,
    residual_flow_from_depth,
)
from .core import epipole as epipole_of


def _emit(record: dict, json_path: str | None):
    for key, value in record.items():
        print(f"{key} = {value}")
    if json_path:
        fileio._atomic_write(
            json_path, (json.dumps(record, sort_keys=True, indent=2) + "\n").encode()
        )


def _load_depth(path: str) -> ScalarGrid:
    if path.endswith(".png"):
        return fileio.read_depth_png16(path)
    return fileio.read_grid(path)


def _load_config(args) -> ToolConfig:
    cfg = fileio.read_config(args.config) if args.config else ToolConfig()
    if getattr(args, "seed", None) is not None:
        cfg = ToolConfig(
            ransac=RansacConfig(
                iterations=cfg.ransac.iterations,
                inlier_threshold=cfg.ransac.inlier_threshold,
                min_inlier_fraction=cfg.ransac.min_inlier_fraction,
                rng_seed=args.seed,
            ),
            epipole_policy=cfg.epipole_policy,
            loss_weights=cfg.loss_weights,
            eval=cfg.eval,
        )
    return cfg


def cmd_synth(args) -> dict:
    scene = fileio.read_scene(args.scene)
    K = fileio.read_intrinsics(args.intrinsics)
    pose = level_camera_pose(scene.ground.camera_height)
    frame = render(scene, K, pose, args.width, args.height)
    plane_t = plane_in_camera(pose)

    import os

    os.makedirs(args.out, exist_ok=True)
    j = lambda name: os.path.join(args.out, name)
    fileio.write_depth_png16(j("depth.png"), frame.depth)
    fileio.write_grid(j("depth.bin"), frame.depth)
    fileio.write_grid(j("gamma.bin"), frame.gamma)
    fileio.write_grid(j("height.bin"), frame.height)
    fileio.write_grid(j("ppe.bin"), ppe_map(K, plane_t, args.width, args.height))
    fileio.write_plane(j("plane.txt"), plane_t)

    record = {
        "width": args.width,
        "height": args.height,
        "camera_height": plane_t.camera_height,
        "valid_fraction": float(frame.depth.mask.mean()),
        "object_fraction": float(frame.object_mask.mean()),
    }
    if args.motion:
        motion = fileio.read_pose_kitti(args.motion)
        source_pose = motion.inverse().compose(pose)
        plane_s = plane_in_camera(source_pose)
        flow = residual_flow_from_depth(frame.depth, K, motion, plane_s)
        fileio.write_flo(j("flow.flo"), flow)
        fileio.write_plane(j("plane_source.txt"), plane_s)
        record["flow_valid_fraction"] = float(flow.mask.mean())
        record["t_z"] = float(motion.translation[2])
    return record


def cmd_warp(args) -> dict:
    depth = _load_depth(args.depth)
    K = fileio.read_intrinsics(args.intrinsics)
    motion = fileio.read_pose_kitti(args.motion)
    plane = fileio.read_plane(args.plane)
    flow = residual_flow_from_depth(depth, K, motion, plane)

    record = {"flow_valid_fraction": float(flow.mask.mean())}
    mag = np.linalg.norm(flow.vectors, axis=-1)
    if args.height_grid:
        hgrid = fileio.read_grid(args.height_grid)
        ground = flow.mask & hgrid.mask & (hgrid.values == 0.0)
        objects = flow.mask & hgrid.mask & (hgrid.values > 0.0)
        record["ground_pixels"] = int(ground.sum())
        record["object_pixels"] = int(objects.sum())
        if ground.any():
            record["ground_residual_rms_px"] = float(np.sqrt(np.mean(mag[ground] ** 2)))
        if objects.any():
            record["object_residual_mean_px"] = float(np.mean(mag[objects]))
            # closed-form check: u_res = [g/(1-g)] (p_t - e_t), g = gamma tz / hc
            t_z = float(motion.translation[2])
            if abs(t_z) > 1e-12:
                gamma = np.where(depth.values > 0, hgrid.values / np.where(depth.values > 0, depth.values, 1.0), 0.0)
                e = epipole_of(K, motion.translation)
                u, v = np.meshgrid(
                    np.arange(flow.width, dtype=float),
                    np.arange(flow.height, dtype=float),
                )
                r = np.stack([u - e.u, v - e.v], axis=-1)
                g = gamma * t_z / plane.camera_height
                formula = (g / (1.0 - g))[..., None] * r
                diff = np.linalg.norm(flow.vectors - formula, axis=-1)
                record["object_formula_max_diff_px"] = float(diff[objects].max())
    else:
        record["residual_rms_px"] = float(np.sqrt(np.mean(mag[flow.mask] ** 2)))
    return record


def cmd_fit_plane(args) -> dict:
    cfg = _load_config(args)
    depth = _load_depth(args.depth)
    K = fileio.read_intrinsics(args.intrinsics)
    cloud = backproject_depth(depth, K)
    plane, inliers = ransac_plane_fit(cloud, cfg.ransac)
    if args.out:
        fileio.write_plane(args.out, plane)
    return {
        "normal": list(plane.normal),
        "camera_height": plane.camera_height,
        "inlier_fraction": float(inliers.mean()),
        "points": len(cloud),
    }


def cmd_mean_plane(args) -> dict:
    paths = []
    for pattern in args.planes:
        hits = sorted(globmod.glob(pattern))
        paths.extend(hits if hits else [pattern])
    planes = [fileio.read_plane(p) for p in paths]
    plane = mean_plane(planes)
    if args.out:
        fileio.write_plane(args.out, plane)
    return {
        "normal": list(plane.normal),
        "camera_height": plane.camera_height,
        "planes": len(planes),
    }


def cmd_icp_refine(args) -> dict:
    K = fileio.read_intrinsics(args.intrinsics)
    src = backproject_depth(_load_depth(args.src), K)
    tgt = estimate_normals(backproject_depth(_load_depth(args.tgt), K))
    init = fileio.read_pose_kitti(args.init) if args.init else None
    motion, trace = icp_point_to_plane(src, tgt, init=init)
    if args.out:
        fileio.write_pose_kitti(args.out, [motion])
    return {
        "rotation": [list(row) for row in motion.rotation],
        "translation": list(motion.translation),
        "residual_trace": trace,
        "iterations": len(trace) - 1,
    }


def cmd_flow2gamma(args) -> dict:
    cfg = _load_config(args)
    flow = fileio.read_flo(args.flow)
    motion = fileio.read_pose_kitti(args.motion)
    plane = fileio.read_plane(args.plane)
    K = fileio.read_intrinsics(args.intrinsics)
    e_t = epipole_of(K, motion.translation)  # raises lateral-motion when t_z = 0
    gamma = gamma_map_from_flow(
        flow,
        e_t,
        float(motion.translation[2]),
        plane.camera_height,
        cfg.epipole_policy,
    )
    fileio.write_grid(args.out, gamma)
    return {
        "epipole": [e_t.u, e_t.v],
        "t_z": float(motion.translation[2]),
        "valid_fraction": float(gamma.mask.mean()),
        "masked_fraction": float(1.0 - gamma.mask.mean()),
    }


def cmd_gamma2depth(args) -> dict:
    gamma = fileio.read_grid(args.gamma)
    plane = fileio.read_plane(args.plane)
    K = fileio.read_intrinsics(args.intrinsics)
    ppe = ppe_map(K, plane, gamma.width, gamma.height)
    depth = gamma_grid_to_depth(gamma, ppe, plane.camera_height)
    fileio.write_grid(args.out, depth)
    return {
        "valid_fraction": float(depth.mask.mean()),
        "camera_height": plane.camera_height,
    }


def cmd_eval(args) -> dict:
    cfg = _load_config(args)
    pred = _load_depth(args.pred)
    gt = _load_depth(args.gt)
    mask = gt.mask & (gt.values >= cfg.eval.min_depth) & (gt.values <= cfg.eval.max_depth)
    max_height = args.max_height if args.max_height is not None else cfg.eval.max_height
    if args.height_mask:
        hgrid = fileio.read_grid(args.height_mask)
        mask &= height_mask(hgrid, max_height if max_height is not None else np.inf)
    clamped = ScalarGrid(
        np.clip(pred.values, cfg.eval.min_depth, cfg.eval.max_depth), pred.mask
    )
    report = depth_metrics(clamped, gt, mask)
    return report.as_dict()


def cmd_loss(args) -> dict:
    cfg = _load_config(args)
    pred = fileio.read_grid(args.pred_gamma)
    gt = fileio.read_grid(args.gt_gamma)
    record = {"gamma_l1": gamma_l1_loss(pred, gt)}
    if args.plane and args.intrinsics:
        plane = fileio.read_plane(args.plane)
        K = fileio.read_intrinsics(args.intrinsics)
        ppe = ppe_map(K, plane, pred.width, pred.height)
        w = cfg.loss_weights
        pred_d = gamma_grid_to_depth(pred, ppe, plane.camera_height)
        gt_d = gamma_grid_to_depth(gt, ppe, plane.camera_height)
        record["silog"] = silog_loss(pred_d, gt_d, w)
        record["total"] = total_loss(pred, gt, ppe, plane.camera_height, w)
        record["weights"] = {
            "w_gamma": w.w_gamma,
            "w_depth": w.w_depth,
            "lambda": w.variance_factor,
            "alpha": w.scale,
        }
    return record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planarpx", description="Planar-parallax depth geometry toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="ToolConfig YAML file")
        p.add_argument("--seed", type=int, help="override RNG seed")
        p.add_argument("--json", help="write the machine-readable record here")

    p = sub.add_parser("synth", help="render oracle rasters for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--motion", help="pose line for source-to-target motion")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("warp", help="planar warp residual statistics")
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--motion", required=True)
    p.add_argument("--plane", required=True)
    p.add_argument("--height-grid", help="height raster to split ground vs objects")
    common(p)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("fit-plane", help="RANSAC plane from a depth map")
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_fit_plane)

    p = sub.add_parser("mean-plane", help="aggregate plane files")
    p.add_argument("--planes", nargs="+", required=True)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_mean_plane)

    p = sub.add_parser("icp-refine", help="point-to-plane ICP pose refinement")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--init", help="initial motion pose line")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_icp_refine)

    p = sub.add_parser("flow2gamma", help="invert residual flow to gamma")
    p.add_argument("--flow", required=True)
    p.add_argument("--motion", required=True)
    p.add_argument("--plane", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_flow2gamma)

    p = sub.add_parser("gamma2depth", help="convert a gamma raster to depth")
    p.add_argument("--gamma", required=True)
    p.add_argument("--plane", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gamma2depth)

    p = sub.add_parser("eval", help="depth evaluation metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--height-mask", help="height raster for low-structure masking")
    p.add_argument("--max-height", type=float)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="gamma / depth training losses")
    p.add_argument("--pred-gamma", required=True)
    p.add_argument("--gt-gamma", required=True)
    p.add_argument("--plane")
    p.add_argument("--intrinsics")
    common(p)
    p.set_defaults(func=cmd_loss)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        record = args.func(args)
    except ToolkitError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 2
    _emit(record, args.json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
