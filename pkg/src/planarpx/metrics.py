"""Training losses (L1 on gamma, scale-invariant log depth loss, weighted total)
and the standard depth evaluation metric suite, all mask-respecting reductions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ScalarGrid, gamma_grid_to_depth
from .errors import EmptyMaskError, NonPositiveDepthError


@dataclass(frozen=True)
class LossWeights:
    w_gamma: float = 1.0
    w_depth: float = 0.01
    variance_factor: float = 0.85  # lambda in the SILog loss
    scale: float = 10.0  # alpha in the SILog loss

    def __post_init__(self):
        if min(self.w_gamma, self.w_depth, self.variance_factor, self.scale) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.variance_factor > 1:
            raise ValueError("variance factor must be <= 1")


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixel_count: int

    def as_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "sq_rel": self.sq_rel,
            "rmse": self.rmse,
            "rmse_log": self.rmse_log,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "pixel_count": self.pixel_count,
        }

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())


def _joint_mask(a: ScalarGrid, b: ScalarGrid, extra=None) -> np.ndarray:
    if a.values.shape != b.values.shape:
        raise ValueError("grids must share a shape")
    mask = a.mask & b.mask
    if extra is not None:
        mask = mask & extra
    if not mask.any():
        raise EmptyMaskError("no jointly valid pixels")
    return mask


def gamma_l1_loss(pred: ScalarGrid, gt: ScalarGrid) -> float:
    """Mean absolute gamma difference over jointly valid pixels."""
    mask = _joint_mask(pred, gt)
    return float(np.mean(np.abs(pred.values[mask] - gt.values[mask])))


def silog_loss(
    pred_depth: ScalarGrid, gt_depth: ScalarGrid, weights: LossWeights = LossWeights()
) -> float:
    """Scale-invariant log loss:

        alpha * sqrt(mean(d^2) - lambda * mean(d)^2),  d = ln(pred) - ln(gt)

    with the radicand clamped at zero against roundoff.
    """
    mask = _joint_mask(pred_depth, gt_depth)
    p = pred_depth.values[mask]
    g = gt_depth.values[mask]
    if np.any(p <= 0) or np.any(g <= 0):
        raise NonPositiveDepthError("depths must be positive on the joint mask")
    d = np.log(p) - np.log(g)
    # mean(d^2) - lambda*mean(d)^2, rewritten to avoid cancellation so the
    # lambda = 1 limit is exactly scale invariant
    mean = np.mean(d)
    var = np.mean((d - mean) ** 2)
    radicand = var + (1.0 - weights.variance_factor) * mean**2
    return float(weights.scale * np.sqrt(max(radicand, 0.0)))


def total_loss(
    pred_gamma: ScalarGrid,
    gt_gamma: ScalarGrid,
    ppe: ScalarGrid,
    h_c: float,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted sum w_gamma * L_gamma + w_depth * L_d, with the depth term
    computed on gamma converted to depth; pixels at or beyond the horizon are
    dropped from the depth term only."""
    loss = weights.w_gamma * gamma_l1_loss(pred_gamma, gt_gamma)
    if weights.w_depth > 0:
        pred_depth = gamma_grid_to_depth(pred_gamma, ppe, h_c)
        gt_depth = gamma_grid_to_depth(gt_gamma, ppe, h_c)
        loss += weights.w_depth * silog_loss(pred_depth, gt_depth, weights)
    return float(loss)


def depth_metrics(
    pred_depth: ScalarGrid, gt_depth: ScalarGrid, mask: np.ndarray = None
) -> MetricReport:
    """Abs Rel, Sq Rel, RMSE, RMSE log and delta_k accuracies over the mask.

    delta_k is the fraction of pixels with max(d/d*, d*/d) strictly below
    1.25^k.
    """
    joint = _joint_mask(pred_depth, gt_depth, extra=mask)
    p = pred_depth.values[joint]
    g = gt_depth.values[joint]
    if np.any(p <= 0) or np.any(g <= 0):
        raise NonPositiveDepthError("depths must be positive on the mask")
    err = p - g
    ratio = np.maximum(p / g, g / p)
    log_err = np.log(p) - np.log(g)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err**2 / g)),
        rmse=float(np.sqrt(np.mean(err**2))),
        rmse_log=float(np.sqrt(np.mean(log_err**2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        pixel_count=int(joint.sum()),
    )


def height_mask(height: ScalarGrid, threshold: float) -> np.ndarray:
    """Pixels with height below the threshold (and valid in the source grid)."""
    return height.mask & (height.values < threshold)
