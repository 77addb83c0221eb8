"""Residual-flow geometry: the forward flow formula, its t_z = 0 branch, and
the inverse map recovering gamma from measured flow, with epipole-aware masking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    EPS_SINGULAR,
    Homography,
    PixelPoint,
    ScalarGrid,
    warp_points,
)
from .errors import (
    DegenerateFlowError,
    EpipoleProximityError,
    LateralMotionError,
    PoleError,
)


@dataclass
class FlowField:
    """Per-pixel 2-vector displacement field (pixels) with validity mask."""

    vectors: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 2:
            raise ValueError("FlowField vectors must have shape (height, width, 2)")
        if self.mask is None:
            self.mask = np.ones(self.vectors.shape[:2], dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.vectors.shape[:2]:
                raise ValueError("mask shape must match vectors")

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class EpipoleMaskPolicy:
    """Masking rules for the flow -> gamma inversion.

    Pixels closer than min_epipole_dist to the epipole, or whose implied
    |gamma * t_z / h_c| exceeds max_gamma_factor, are marked invalid instead
    of producing unstable values.
    """

    min_epipole_dist: float = 2.0
    max_gamma_factor: float = 0.9

    def __post_init__(self):
        if not self.min_epipole_dist > 0:
            raise ValueError("min_epipole_dist must be positive")
        if not 0 < self.max_gamma_factor < 1:
            raise ValueError("max_gamma_factor must lie in (0, 1)")


def _check_tz(t_z: float):
    if abs(t_z) <= EPS_SINGULAR:
        raise LateralMotionError("t_z is zero; use the lateral-motion branch")


def residual_flow_forward(
    gamma: float, p_t: PixelPoint, e_t: PixelPoint, t_z: float, h_c: float
):
    """Residual flow for t_z != 0:

        u_res = [g / (1 - g)] * (p_t - e_t),   g = gamma * t_z / h_c

    Always collinear with (p_t - e_t); zero exactly when gamma = 0.
    """
    _check_tz(t_z)
    g = gamma * t_z / h_c
    if abs(1.0 - g) < EPS_SINGULAR:
        raise PoleError("gamma * t_z / h_c == 1: residual flow diverges")
    return (g / (1.0 - g)) * (p_t.as_array() - e_t.as_array())


def residual_flow_forward_lateral(gamma: float, t, h_c: float):
    """Residual flow for t_z = 0: u_res = -(gamma / h_c) * (t_x', t_y')
    where t = K T is the pixel-space translation."""
    t = np.asarray(t, dtype=float).reshape(3)
    if abs(t[2]) > EPS_SINGULAR:
        raise ValueError("lateral branch requires t_z = 0")
    return -(gamma / h_c) * t[:2]


def gamma_from_flow(
    u_res,
    p_t: PixelPoint,
    e_t: PixelPoint,
    t_z: float,
    h_c: float,
    policy: EpipoleMaskPolicy = EpipoleMaskPolicy(),
) -> float:
    """Invert the forward flow formula at one pixel.

    The componentwise ratio (p_t - e_t) / u_res is resolved through the
    least-squares collinear scalar k = u_res.(p_t - e_t) / |p_t - e_t|^2,
    giving gamma = (h_c / t_z) * k / (1 + k). Exact on noiseless inputs.
    """
    _check_tz(t_z)
    u_res = np.asarray(u_res, dtype=float).reshape(2)
    r = p_t.as_array() - e_t.as_array()
    dist = np.linalg.norm(r)
    if dist < policy.min_epipole_dist:
        raise EpipoleProximityError(
            f"pixel within {policy.min_epipole_dist} px of the epipole"
        )
    if np.linalg.norm(u_res) == 0.0:
        return 0.0
    k = float(u_res @ r) / float(r @ r)
    if abs(1.0 + k) < EPS_SINGULAR:
        raise DegenerateFlowError("flow scalar k == -1: inversion undefined")
    return (h_c / t_z) * k / (1.0 + k)


def planar_warp_field(H: Homography, width: int, height: int) -> FlowField:
    """Dense displacement warp(H, p) - p; pixels mapped to infinity are masked."""
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    pixels = np.stack([u, v], axis=-1)
    warped, valid = warp_points(H, pixels)
    disp = np.where(valid[..., None], warped - pixels, 0.0)
    return FlowField(disp, valid)


def gamma_map_from_flow(
    flow: FlowField,
    e_t: PixelPoint,
    t_z: float,
    h_c: float,
    policy: EpipoleMaskPolicy = EpipoleMaskPolicy(),
) -> ScalarGrid:
    """Dense flow -> gamma inversion with policy masking.

    Masks pixels near the epipole, with implied |gamma t_z / h_c| beyond the
    policy bound, or with k == -1. Invalid pixels carry value 0.
    """
    _check_tz(t_z)
    u, v = np.meshgrid(
        np.arange(flow.width, dtype=float), np.arange(flow.height, dtype=float)
    )
    r = np.stack([u - e_t.u, v - e_t.v], axis=-1)
    r2 = np.einsum("...i,...i->...", r, r)
    far_enough = np.sqrt(r2) >= policy.min_epipole_dist
    k = np.einsum("...i,...i->...", flow.vectors, r) / np.where(r2 > 0, r2, 1.0)
    nondegenerate = np.abs(1.0 + k) >= EPS_SINGULAR
    g = np.where(nondegenerate, k / np.where(nondegenerate, 1.0 + k, 1.0), 0.0)
    bounded = np.abs(g) <= policy.max_gamma_factor
    valid = flow.mask & far_enough & nondegenerate & bounded
    gamma = np.where(valid, (h_c / t_z) * g, 0.0)
    return ScalarGrid(gamma, valid)
