"""Reference-plane machinery: depth back-projection, RANSAC plane extraction,
mean-plane aggregation and point-to-plane ICP pose refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import CameraIntrinsics, PlaneModel, RigidMotion, ScalarGrid, orthonormalize
from .errors import (
    DegenerateCloudError,
    InsufficientInliersError,
    NoCorrespondenceError,
)

MIN_TRIANGLE_AREA = 1e-8  # m^2; colinearity rejection for 3-point samples


@dataclass
class PointCloud:
    """Camera-frame 3D points (N, 3), optionally with unit normals."""

    points: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if self.normals.shape != self.points.shape:
                raise ValueError("normals must match points")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 500
    inlier_threshold: float = 0.05
    min_inlier_fraction: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")


def backproject_depth(depth: ScalarGrid, K: CameraIntrinsics) -> PointCloud:
    """One camera-frame point z * K^-1 (u, v, 1) per valid depth pixel."""
    v, u = np.nonzero(depth.mask)
    z = depth.values[v, u]
    rays = K.ray(u.astype(float), v.astype(float))
    return PointCloud(rays * z[:, None])


def fit_plane_least_squares(points: np.ndarray) -> PlaneModel:
    """Total-least-squares plane through points; normal oriented so h_c > 0."""
    points = np.asarray(points, dtype=float)
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[1] < 1e-12:
        raise DegenerateCloudError("points are collinear; plane is undetermined")
    normal = vt[2]
    h_c = float(normal @ centroid)
    if h_c < 0:
        normal, h_c = -normal, -h_c
    if h_c <= 0:
        raise DegenerateCloudError("fitted plane passes through the camera center")
    return PlaneModel(normal, h_c)


def ransac_plane_fit(
    cloud: PointCloud, cfg: RansacConfig = RansacConfig()
) -> tuple[PlaneModel, np.ndarray]:
    """RANSAC plane fit: 3-point hypotheses, inlier count on |N.P - h_c|,
    least-squares refit on the winning inlier set.

    Deterministic for a fixed rng_seed; hypothesis ties break to the lowest
    hypothesis index. Returns (plane, boolean inlier mask).
    """
    pts = cloud.points
    n = len(pts)
    if n < 3:
        raise DegenerateCloudError("need at least 3 points")

    rng = np.random.default_rng(cfg.rng_seed)
    idx = rng.integers(0, n, size=(cfg.iterations, 3))
    a, b, c = pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]]
    cross = np.cross(b - a, c - a)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    norm = np.linalg.norm(cross, axis=1)
    ok = area > MIN_TRIANGLE_AREA
    normals = np.where(ok[:, None], cross / np.where(ok, norm, 1.0)[:, None], 0.0)
    offsets = np.einsum("ij,ij->i", normals, a)
    # orient toward positive camera height; planes through the origin stay rejected
    flip = offsets < 0
    normals[flip] *= -1.0
    offsets[flip] *= -1.0
    ok &= offsets > 1e-12

    dist = np.abs(pts @ normals.T - offsets[None, :])
    counts = np.where(ok, (dist <= cfg.inlier_threshold).sum(axis=0), -1)
    if counts.max() < 3:
        raise DegenerateCloudError("no valid plane hypothesis (collinear cloud?)")
    best = int(np.argmax(counts))

    inliers = dist[:, best] <= cfg.inlier_threshold
    if inliers.sum() < cfg.min_inlier_fraction * n:
        raise InsufficientInliersError(
            f"best hypothesis has {inliers.sum()}/{n} inliers, below "
            f"min_inlier_fraction={cfg.min_inlier_fraction}"
        )
    plane = fit_plane_least_squares(pts[inliers])
    final_inliers = (
        np.abs(pts @ plane.normal - plane.camera_height) <= cfg.inlier_threshold
    )
    return plane, final_inliers


def mean_plane(planes: list[PlaneModel]) -> PlaneModel:
    """Average plane: normalized mean of normals, arithmetic mean of heights."""
    if not planes:
        raise ValueError("need at least one plane")
    mean_n = np.mean([p.normal for p in planes], axis=0)
    norm = np.linalg.norm(mean_n)
    if norm < 1e-9:
        raise DegenerateCloudError("plane normals cancel; mean normal undefined")
    return PlaneModel(mean_n / norm, float(np.mean([p.camera_height for p in planes])))


def estimate_normals(cloud: PointCloud, k: int = 12) -> PointCloud:
    """Per-point normals from local PCA over k nearest neighbors,
    oriented toward the camera (origin)."""
    pts = cloud.points
    if len(pts) < 3:
        raise DegenerateCloudError("too few points for normal estimation")
    k = min(k, len(pts))
    tree = cKDTree(pts)
    _, nbrs = tree.query(pts, k=k)
    patches = pts[nbrs]
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    toward_camera = np.einsum("ij,ij->i", normals, pts) > 0
    normals[toward_camera] *= -1.0
    return PointCloud(pts, normals)


def icp_point_to_plane(
    source: PointCloud,
    target: PointCloud,
    init: RigidMotion = None,
    max_iters: int = 50,
    tol: float = 1e-8,
    max_correspondence_dist: float = 1.0,
) -> tuple[RigidMotion, list[float]]:
    """Point-to-plane ICP aligning source onto target (which carries normals).

    Each iteration: nearest-neighbor correspondences within the distance gate,
    small-angle least squares on sum(n . (R p + T - q))^2, SVD
    re-orthonormalization of the rotation update. Stops when the RMS residual
    improves by less than tol, never accepting an increase.

    Returns the refined motion and the RMS residual trace.
    """
    if target.normals is None:
        raise ValueError("target cloud must carry normals")
    if len(source) == 0 or len(target) == 0:
        raise NoCorrespondenceError("empty cloud")

    motion = init if init is not None else RigidMotion.identity()
    tree = cKDTree(target.points)

    def residual_terms(m: RigidMotion):
        moved = m.apply(source.points)
        dist, nn = tree.query(moved, distance_upper_bound=max_correspondence_dist)
        matched = np.isfinite(dist)
        if not matched.any():
            raise NoCorrespondenceError("no correspondences within the distance gate")
        moved = moved[matched]
        q = target.points[nn[matched]]
        n = target.normals[nn[matched]]
        r = np.einsum("ij,ij->i", n, moved - q)
        return moved, n, r

    moved, n, r = residual_terms(motion)
    trace = [float(np.sqrt(np.mean(r**2)))]

    for _ in range(max_iters):
        # rows [p x n | n] for the 6-vector (rotation omega, translation)
        jac = np.hstack([np.cross(moved, n), n])
        try:
            delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        omega, t_delta = delta[:3], delta[3:]
        wx = np.array(
            [
                [0.0, -omega[2], omega[1]],
                [omega[2], 0.0, -omega[0]],
                [-omega[1], omega[0], 0.0],
            ]
        )
        r_delta = orthonormalize(np.eye(3) + wx)
        candidate = RigidMotion(
            orthonormalize(r_delta @ motion.rotation),
            r_delta @ motion.translation + t_delta,
        )
        cand_moved, cand_n, cand_r = residual_terms(candidate)
        rms = float(np.sqrt(np.mean(cand_r**2)))
        if rms > trace[-1]:
            break
        motion, moved, n, r = candidate, cand_moved, cand_n, cand_r
        improved = trace[-1] - rms
        trace.append(rms)
        if improved < tol:
            break
    return motion, trace
