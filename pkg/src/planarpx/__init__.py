"""Planar-parallax depth geometry toolkit.

Homography warping against a reference road plane, residual-flow <-> gamma
conversion, gamma <-> depth reconstruction, planar position embedding, plane
and pose estimation, training losses and depth evaluation metrics, verified
against an analytic synthetic-scene oracle.
"""

from .core import (
    CameraIntrinsics,
    Homography,
    PixelPoint,
    PlaneModel,
    RigidMotion,
    ScalarGrid,
    depth_to_gamma,
    epipole,
    gamma_to_depth,
    height_from_gamma,
    homography_from_motion,
    ppe_map,
    ppe_value,
    warp_point,
)
from .metrics import LossWeights, MetricReport, depth_metrics, gamma_l1_loss, silog_loss, total_loss
from .parallax import (
    EpipoleMaskPolicy,
    FlowField,
    gamma_from_flow,
    gamma_map_from_flow,
    planar_warp_field,
    residual_flow_forward,
    residual_flow_forward_lateral,
)
from .planefit import (
    PointCloud,
    RansacConfig,
    backproject_depth,
    icp_point_to_plane,
    mean_plane,
    ransac_plane_fit,
)
from .synthetic import Box, RenderedFrame, SyntheticScene, perturb_flow, render, render_residual_flow

__version__ = "0.1.0"
