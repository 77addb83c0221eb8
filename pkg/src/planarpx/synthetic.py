"""Analytic synthetic scenes: ground plane plus axis-aligned boxes, ray cast in
closed form so depth / height / gamma / residual-flow rasters are exact oracles.

World frame: x right, y forward, z up, ground plane at z = 0. A camera pose is
a RigidMotion mapping world points into the camera frame (P_cam = R P_w + T).
Depth is camera-frame z of the hit point, not ray length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CameraIntrinsics,
    PlaneModel,
    RigidMotion,
    ScalarGrid,
    homography_from_motion,
    warp_points,
)
from .parallax import FlowField

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: center and full side lengths, meters, world frame."""

    center: np.ndarray
    extents: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        e = np.asarray(self.extents, dtype=float).reshape(3)
        if not np.all(e > 0):
            raise ValueError("box extents must be positive")
        if c[2] - e[2] / 2 < -1e-9:
            raise ValueError("box must sit on or above the ground")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "extents", e)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.extents / 2

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.extents / 2


@dataclass
class SyntheticScene:
    """Ground plane + boxes. `ground` is the reference plane as seen by a level
    camera at the scene's canonical height (normal (0,1,0) in camera frame)."""

    ground: PlaneModel
    objects: list[Box] = field(default_factory=list)
    sky_depth: float = None  # None / inf: sky pixels are masked invalid


@dataclass
class RenderedFrame:
    depth: ScalarGrid
    height: ScalarGrid
    gamma: ScalarGrid
    object_mask: np.ndarray


def level_camera_pose(
    height: float, position=(0.0, 0.0), yaw: float = 0.0, pitch: float = 0.0
) -> RigidMotion:
    """World->camera pose for a camera at the given height above the ground.

    yaw rotates the heading about the world up axis; pitch tilts about the
    camera x axis. Zero angles look along world +y with image y pointing down.
    """
    base = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    cz, sz = np.cos(yaw), np.sin(yaw)
    r_yaw = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    cp, sp = np.cos(pitch), np.sin(pitch)
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rot = r_pitch @ base @ r_yaw
    center = np.array([position[0], position[1], height])
    return RigidMotion(rot, -rot @ center)


def camera_center(pose: RigidMotion) -> np.ndarray:
    return -pose.rotation.T @ pose.translation


def plane_in_camera(pose: RigidMotion) -> PlaneModel:
    """Ground plane of the scene expressed in this camera's frame."""
    normal = pose.rotation @ (-WORLD_UP)
    h_c = camera_center(pose)[2]
    if h_c <= 0:
        raise ValueError("camera must be above the ground")
    return PlaneModel(normal, h_c)


def _ray_cast(scene: SyntheticScene, origin: np.ndarray, dirs: np.ndarray):
    """Nearest intersection along rays origin + t * dirs (t = camera depth).

    Returns (t, hit_object) with t = +inf where nothing is hit.
    """
    t_best = np.full(dirs.shape[:-1], np.inf)
    hit_obj = np.zeros(dirs.shape[:-1], dtype=bool)

    dz = dirs[..., 2]
    going_down = dz < -1e-15
    t_ground = np.where(going_down, -origin[2] / np.where(going_down, dz, 1.0), np.inf)
    ground_ok = going_down & (t_ground > 0)
    t_best = np.where(ground_ok, t_ground, t_best)

    for box in scene.objects:
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (box.lo - origin) * inv
            t2 = (box.hi - origin) * inv
        # parallel rays: hit iff origin inside the slab
        inside = (origin >= box.lo) & (origin <= box.hi)
        parallel = np.abs(dirs) < 1e-15
        t1 = np.where(parallel, np.where(inside, -np.inf, np.inf), t1)
        t2 = np.where(parallel, np.where(inside, np.inf, -np.inf), t2)
        tmin = np.max(np.minimum(t1, t2), axis=-1)
        tmax = np.min(np.maximum(t1, t2), axis=-1)
        hit = (tmax >= tmin) & (tmax > 0)
        t_hit = np.where(tmin > 0, tmin, tmax)
        closer = hit & (t_hit < t_best)
        t_best = np.where(closer, t_hit, t_best)
        hit_obj = hit_obj | closer
    return t_best, hit_obj


def render(
    scene: SyntheticScene,
    K: CameraIntrinsics,
    pose: RigidMotion,
    width: int,
    height: int,
) -> RenderedFrame:
    """Exact per-pixel depth / height / gamma for the scene. Sky pixels
    (no intersection) are masked invalid."""
    origin = camera_center(pose)
    if origin[2] <= 0:
        raise ValueError("camera must be above the ground")
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    dirs_cam = K.ray(u, v)
    dirs_world = dirs_cam @ pose.rotation  # R^T applied row-wise

    t, hit_obj = _ray_cast(scene, origin, dirs_world)
    valid = np.isfinite(t)

    t_safe = np.where(valid, t, 0.0)
    depth = t_safe
    h = np.where(valid, origin[2] + t_safe * dirs_world[..., 2], 0.0)
    h = np.where(hit_obj, h, 0.0)  # ground hits are exactly height 0
    h = np.where(np.abs(h) < 1e-12, 0.0, h)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(valid, h / np.where(valid, depth, 1.0), 0.0)

    return RenderedFrame(
        depth=ScalarGrid(depth, valid),
        height=ScalarGrid(h, valid),
        gamma=ScalarGrid(gamma, valid),
        object_mask=hit_obj,
    )


def residual_flow_from_depth(
    depth: ScalarGrid,
    K: CameraIntrinsics,
    motion: RigidMotion,
    plane: PlaneModel,
    source_size: tuple[int, int] = None,
) -> FlowField:
    """Geometric residual flow for a target-view depth map.

    motion maps source-camera to target-camera coordinates; plane is the
    reference plane in the source camera frame. Pixels whose source-frame
    point is behind the camera or projects outside the source image (size
    defaults to the depth raster's) are masked.
    """
    h_px, w_px = depth.values.shape
    src_w, src_h = source_size if source_size is not None else (w_px, h_px)
    u, v = np.meshgrid(np.arange(w_px, dtype=float), np.arange(h_px, dtype=float))
    p_t = np.stack([u, v], axis=-1)

    points_t = K.ray(u, v) * depth.values[..., None]
    inv = motion.inverse()
    points_s = points_t @ inv.rotation.T + inv.translation
    in_front = points_s[..., 2] > 1e-9
    safe = np.where(in_front[..., None], points_s, np.array([0.0, 0.0, 1.0]))
    p_s = K.project(safe)
    in_frame = (
        (p_s[..., 0] >= -0.5)
        & (p_s[..., 0] <= src_w - 0.5)
        & (p_s[..., 1] >= -0.5)
        & (p_s[..., 1] <= src_h - 0.5)
    )

    H = homography_from_motion(K, motion, plane)
    p_w, warp_ok = warp_points(H, p_s)
    valid = depth.mask & in_front & in_frame & warp_ok
    vectors = np.where(valid[..., None], p_w - p_t, 0.0)
    return FlowField(vectors, valid)


def render_residual_flow(
    scene: SyntheticScene,
    K: CameraIntrinsics,
    target_pose: RigidMotion,
    motion: RigidMotion,
    width: int,
    height: int,
) -> tuple[FlowField, RenderedFrame]:
    """Render the target view and derive its exact residual-flow field.

    motion maps source-camera to target-camera coordinates; the reference
    plane is the scene ground in the source camera frame.
    """
    frame = render(scene, K, target_pose, width, height)
    source_pose = motion.inverse().compose(target_pose)
    plane_src = plane_in_camera(source_pose)
    flow = residual_flow_from_depth(frame.depth, K, motion, plane_src)
    return flow, frame


def perturb_flow(flow: FlowField, noise_sigma: float, rng_seed: int = 0) -> FlowField:
    """Seeded isotropic Gaussian noise on valid pixels; sigma = 0 is a no-op copy."""
    if noise_sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if noise_sigma == 0:
        return FlowField(flow.vectors.copy(), flow.mask.copy())
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, noise_sigma, size=flow.vectors.shape)
    vectors = np.where(flow.mask[..., None], flow.vectors + noise, flow.vectors)
    return FlowField(vectors, flow.mask.copy())
