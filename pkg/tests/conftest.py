import numpy as np
import pytest

from planarpx.core import CameraIntrinsics, PlaneModel, RigidMotion
from planarpx.synthetic import Box, SyntheticScene


def random_rotation(rng, max_angle=0.05):
    """Small random rotation (radians) about a random axis."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    wx = np.array(
        [
            [0, -axis[2], axis[1]],
            [axis[2], 0, -axis[0]],
            [-axis[1], axis[0], 0],
        ]
    )
    return (
        np.eye(3)
        + np.sin(angle) * wx
        + (1 - np.cos(angle)) * (wx @ wx)
    )


def random_motion(rng, t_z_range=(0.1, 2.0), max_angle=0.02):
    t = np.array(
        [
            rng.uniform(-0.1, 0.1),
            rng.uniform(-0.05, 0.05),
            rng.uniform(*t_z_range),
        ]
    )
    return RigidMotion(random_rotation(rng, max_angle), t)


def random_scene(rng, h_c=None, n_boxes=3):
    h_c = h_c if h_c is not None else rng.uniform(1.2, 2.0)
    boxes = []
    for _ in range(n_boxes):
        ez = rng.uniform(0.8, 2.2)
        boxes.append(
            Box(
                center=[rng.uniform(-4, 4), rng.uniform(6, 18), ez / 2 + rng.uniform(0, 0.4)],
                extents=[rng.uniform(0.8, 2.5), rng.uniform(0.8, 2.5), ez],
            )
        )
    return SyntheticScene(PlaneModel(np.array([0.0, 1.0, 0.0]), h_c), boxes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0)


@pytest.fixture
def K_small():
    """Intrinsics sized for 48x36 (or smaller) renders: horizon in frame."""
    return CameraIntrinsics(fx=45.0, fy=45.0, cx=24.0, cy=16.0)
