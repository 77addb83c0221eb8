"""Camera, plane and motion types plus the closed-form planar-parallax maps.

Conventions (fixed once, used everywhere):
  * camera frame is right-handed, x right, y down, z forward;
  * the reference-plane normal points from the camera toward the plane, so
    N.P = h_c holds for plane points and N.P = h_c - h for a point at
    height h above the plane;
  * pixels lift to homogeneous coordinates as (u, v, 1), pixel centers at
    integer coordinates;
  * the homography maps source pixels onto the target view (the previous
    frame is warped onto the current one).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    HorizonError,
    NonPositiveDepthError,
    PointAtInfinityError,
    SingularHomographyError,
    LateralMotionError,
)

EPS_SINGULAR = 1e-12
EPS_HORIZON = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. fx, fy, cx, cy in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def ray(self, u, v) -> np.ndarray:
        """Normalized ray K^-1 (u, v, 1); broadcasts over arrays, last axis 3."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.stack(
            [(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)],
            axis=-1,
        )

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project camera-frame points (..., 3) with z > 0 to pixels (..., 2)."""
        points = np.asarray(points, dtype=float)
        z = points[..., 2]
        u = self.fx * points[..., 0] / z + self.cx
        v = self.fy * points[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)


@dataclass(frozen=True)
class PlaneModel:
    """Reference plane: unit normal (camera frame, toward the plane) + camera height."""

    normal: np.ndarray
    camera_height: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        if not self.camera_height > 0:
            raise ValueError("camera height must be positive")
        object.__setattr__(self, "normal", n / norm)


@dataclass(frozen=True)
class RigidMotion:
    """Rigid transform P_target = R @ P_source + T."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if np.linalg.norm(r.T @ r - np.eye(3)) > 1e-8:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-8:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "RigidMotion":
        return RigidMotion(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, first: "RigidMotion") -> "RigidMotion":
        """Motion equivalent to applying `first`, then self."""
        return RigidMotion(
            orthonormalize(self.rotation @ first.rotation),
            self.rotation @ first.translation + self.translation,
        )


@dataclass(frozen=True)
class Homography:
    """Plane-induced 3x3 map from source homogeneous pixels to target pixels."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ValueError("pixel coordinates must be finite")

    @property
    def homogeneous(self) -> np.ndarray:
        return np.array([self.u, self.v, 1.0])

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass
class ScalarGrid:
    """Dense per-pixel scalar raster (depth, height, gamma, ppe) with validity mask."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("ScalarGrid values must be 2-D (height, width)")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise ValueError("mask shape must match values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) via SVD, keeping det = +1."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] *= -1.0
        rot = u @ vt
    return rot


def homography_from_motion(
    K: CameraIntrinsics, motion: RigidMotion, plane: PlaneModel
) -> Homography:
    """Plane-induced homography K (R + T N^T / h_c) K^-1.

    The plane is expressed in the source camera frame; the homography then
    aligns source pixels of plane points with their target pixels.
    """
    core = motion.rotation + np.outer(motion.translation, plane.normal) / plane.camera_height
    h = K.matrix @ core @ K.inverse
    if abs(np.linalg.det(h)) < EPS_SINGULAR:
        raise SingularHomographyError(
            "plane-induced homography is singular for this motion"
        )
    return Homography(h)


def warp_point(H: Homography, p: PixelPoint) -> PixelPoint:
    """Apply H to a pixel and renormalize: p_w = H p / (H_3 p)."""
    q = H.matrix @ p.homogeneous
    if abs(q[2]) < EPS_SINGULAR:
        raise PointAtInfinityError("warped point lies at infinity")
    return PixelPoint(q[0] / q[2], q[1] / q[2])


def warp_points(H: Homography, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized warp of an (..., 2) pixel array; returns (warped, valid)."""
    pixels = np.asarray(pixels, dtype=float)
    ones = np.ones(pixels.shape[:-1] + (1,))
    hom = np.concatenate([pixels, ones], axis=-1) @ H.matrix.T
    w = hom[..., 2]
    valid = np.abs(w) >= EPS_SINGULAR
    safe_w = np.where(valid, w, 1.0)
    return hom[..., :2] / safe_w[..., None], valid


def epipole(K: CameraIntrinsics, translation) -> PixelPoint:
    """Target-view epipole K T / t_z; fails for lateral motion (t_z = 0)."""
    t = K.matrix @ np.asarray(translation, dtype=float).reshape(3)
    if abs(t[2]) <= EPS_SINGULAR:
        raise LateralMotionError("epipole at infinity: t_z is zero")
    return PixelPoint(t[0] / t[2], t[1] / t[2])


def ppe_value(K: CameraIntrinsics, plane: PlaneModel, p: PixelPoint) -> float:
    """Planar position embedding N . (K^-1 p); equals (h_c - h)/z for the imaged point."""
    return float(plane.normal @ K.inverse @ p.homogeneous)


def ppe_map(K: CameraIntrinsics, plane: PlaneModel, width: int, height: int) -> ScalarGrid:
    """Dense planar position embedding at every integer pixel center."""
    if width < 1 or height < 1:
        raise ValueError("grid must be at least 1x1")
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    rays = np.stack(
        [(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1
    )
    values = rays @ plane.normal
    return ScalarGrid(values)


def gamma_to_depth(gamma: float, ppe: float, h_c: float) -> float:
    """Depth from gamma: z = h_c / (gamma + ppe)."""
    denom = gamma + ppe
    if denom <= EPS_HORIZON:
        raise HorizonError("gamma + ppe <= 0: depth unbounded or behind camera")
    return h_c / denom


def depth_to_gamma(z: float, ppe: float, h_c: float) -> float:
    """Inverse of gamma_to_depth: gamma = h_c / z - ppe."""
    if not z > 0:
        raise NonPositiveDepthError("depth must be positive")
    return h_c / z - ppe


def height_from_gamma(gamma: float, z: float) -> float:
    """Height above the plane: h = gamma * z."""
    if not z > 0:
        raise NonPositiveDepthError("depth must be positive")
    return gamma * z


def gamma_grid_to_depth(gamma: ScalarGrid, ppe: ScalarGrid, h_c: float) -> ScalarGrid:
    """Dense gamma -> depth; pixels at or beyond the horizon are masked out."""
    denom = gamma.values + ppe.values
    valid = gamma.mask & ppe.mask & (denom > EPS_HORIZON)
    depth = np.where(valid, h_c / np.where(valid, denom, 1.0), 0.0)
    return ScalarGrid(depth, valid)


def depth_grid_to_gamma(depth: ScalarGrid, ppe: ScalarGrid, h_c: float) -> ScalarGrid:
    """Dense depth -> gamma on valid positive-depth pixels."""
    valid = depth.mask & ppe.mask & (depth.values > 0)
    gamma = np.where(valid, h_c / np.where(valid, depth.values, 1.0) - ppe.values, 0.0)
    return ScalarGrid(gamma, valid)
