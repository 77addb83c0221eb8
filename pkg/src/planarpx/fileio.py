"""File formats: 16-bit PNG depth (raw / 256), Middlebury .flo flow, KITTI-style
pose text, a small binary raster for signed scalar grids (gamma / PPE), and
structured-text plane / scene / intrinsics / config files.

All writers are atomic (temp file + rename); all readers reject malformed input
with a categorized FormatError and never return partial grids.
"""

from __future__ import annotations

import ast
import io
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np
import yaml
from PIL import Image

from .core import CameraIntrinsics, PlaneModel, RigidMotion, ScalarGrid, orthonormalize
from .errors import FormatError, NonRigidPoseError
from .metrics import LossWeights
from .parallax import EpipoleMaskPolicy, FlowField
from .planefit import RansacConfig
from .synthetic import Box, SyntheticScene

FLO_MAGIC = 202021.25
FLO_UNKNOWN = 1e10  # sentinel for masked pixels; values > 1e9 read as invalid
GRID_MAGIC = b"PXGRID01"
SCENE_SCHEMA = "scene-v1"
POSE_ORTHO_TOL = 1e-3


def _atomic_write(path: str, data: bytes):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- depth PNG16


def write_depth_png16(path: str, depth: ScalarGrid):
    """16-bit PNG, raw = round(depth * 256); invalid pixels stored as raw 0."""
    raw = np.round(depth.values * 256.0)
    if np.any((raw[depth.mask] < 1) | (raw[depth.mask] > 65535)):
        raise ValueError("depth out of range for 16-bit PNG encoding")
    raw = np.where(depth.mask, raw, 0.0).astype(np.uint16)
    img = Image.fromarray(raw)  # uint16 array maps to mode I;16
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    _atomic_write(path, buf.getvalue())


def read_depth_png16(path: str) -> ScalarGrid:
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise FormatError(f"cannot read PNG: {exc}") from exc
    if img.mode not in ("I;16", "I;16B", "I"):
        raise FormatError(f"depth PNG must be 16-bit single channel, got {img.mode}")
    raw = np.asarray(img, dtype=np.uint32)
    if raw.ndim != 2 or raw.max() > 65535:
        raise FormatError("depth PNG must be 16-bit single channel")
    mask = raw > 0
    return ScalarGrid(raw.astype(np.float64) / 256.0, mask)


# ------------------------------------------------------------------ .flo flow


def write_flo(path: str, flow: FlowField):
    data = np.where(flow.mask[..., None], flow.vectors, FLO_UNKNOWN).astype("<f4")
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    _atomic_write(path, header + data.tobytes())


def read_flo(path: str) -> FlowField:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise FormatError("flo file truncated: missing header")
    magic, width, height = struct.unpack("<fii", blob[:12])
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"flo magic mismatch: {magic}")
    if width < 1 or height < 1:
        raise FormatError(f"flo size invalid: {width}x{height}")
    expected = 12 + width * height * 2 * 4
    if len(blob) != expected:
        raise FormatError(f"flo size mismatch: {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob[12:], dtype="<f4").reshape(height, width, 2)
    mask = np.all(np.abs(data) < 1e9, axis=-1)
    vectors = np.where(mask[..., None], data.astype(np.float64), 0.0)
    return FlowField(vectors, mask)


# ------------------------------------------------------------------ KITTI pose


def _parse_pose_line(line: str) -> RigidMotion:
    parts = line.split()
    if len(parts) != 12:
        raise FormatError(f"pose line must have 12 values, got {len(parts)}")
    try:
        vals = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise FormatError(f"pose line parse failure: {exc}") from exc
    if not np.all(np.isfinite(vals)):
        raise FormatError("pose line contains non-finite values")
    mat = vals.reshape(3, 4)
    r, t = mat[:, :3], mat[:, 3]
    drift = np.linalg.norm(r.T @ r - np.eye(3))
    if drift > POSE_ORTHO_TOL or np.linalg.det(r) < 0:
        raise NonRigidPoseError("pose rotation violates orthonormality tolerance")
    # keep an already-orthonormal matrix verbatim so round trips are bitwise
    if drift > 1e-12:
        r = orthonormalize(r)
    return RigidMotion(r, t)


def read_pose_kitti(path: str, line_index: int = 0) -> RigidMotion:
    """Row-major 3x4 [R|T] line from a KITTI-odometry style pose file."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if line_index >= len(lines):
        raise FormatError(f"pose file has {len(lines)} lines, wanted {line_index}")
    return _parse_pose_line(lines[line_index])


def write_pose_kitti(path: str, motions: list[RigidMotion]):
    lines = []
    for m in motions:
        mat = np.hstack([m.rotation, m.translation[:, None]])
        lines.append(" ".join(repr(float(x)) for x in mat.reshape(-1)))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def relative_motion(pose_a: RigidMotion, pose_b: RigidMotion) -> RigidMotion:
    """Motion mapping camera-a coordinates to camera-b coordinates, given both
    camera-to-world poses: P_b = R_b^T R_a P_a + R_b^T (t_a - t_b)."""
    rot = pose_b.rotation.T @ pose_a.rotation
    t = pose_b.rotation.T @ (pose_a.translation - pose_b.translation)
    return RigidMotion(orthonormalize(rot), t)


# ------------------------------------------------------- binary scalar raster


def write_grid(path: str, grid: ScalarGrid):
    """Signed float32 raster with packed validity bits; for gamma / PPE maps."""
    h, w = grid.values.shape
    payload = [GRID_MAGIC, struct.pack("<ii", w, h)]
    payload.append(grid.values.astype("<f4").tobytes())
    payload.append(np.packbits(grid.mask.reshape(-1)).tobytes())
    _atomic_write(path, b"".join(payload))


def read_grid(path: str) -> ScalarGrid:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise FormatError("grid file truncated: missing header")
    if blob[:8] != GRID_MAGIC:
        raise FormatError("grid magic mismatch")
    w, h = struct.unpack("<ii", blob[8:16])
    if w < 1 or h < 1:
        raise FormatError(f"grid size invalid: {w}x{h}")
    n = w * h
    expected = 16 + n * 4 + (n + 7) // 8
    if len(blob) != expected:
        raise FormatError(f"grid size mismatch: {len(blob)} bytes, expected {expected}")
    values = np.frombuffer(blob[16 : 16 + n * 4], dtype="<f4").astype(np.float64)
    mask = np.unpackbits(
        np.frombuffer(blob[16 + n * 4 :], dtype=np.uint8), count=n
    ).astype(bool)
    return ScalarGrid(values.reshape(h, w), mask.reshape(h, w))


# --------------------------------------------------------- structured text


def _parse_kv_text(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        try:
            out[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise FormatError(f"cannot parse value for {key.strip()!r}") from exc
    return out


def write_plane(path: str, plane: PlaneModel):
    n = [float(x) for x in plane.normal]
    text = (
        f"normal = [{n[0]!r}, {n[1]!r}, {n[2]!r}]\n"
        f"camera_height = {float(plane.camera_height)!r}\n"
    )
    _atomic_write(path, text.encode())


def read_plane(path: str) -> PlaneModel:
    with open(path) as f:
        kv = _parse_kv_text(f.read())
    try:
        return PlaneModel(np.array(kv["normal"], dtype=float), float(kv["camera_height"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad plane file: {exc}") from exc


def write_intrinsics(path: str, K: CameraIntrinsics):
    text = (f"fx = {float(K.fx)!r}\nfy = {float(K.fy)!r}\n"
            f"cx = {float(K.cx)!r}\ncy = {float(K.cy)!r}\n")
    _atomic_write(path, text.encode())


def read_intrinsics(path: str) -> CameraIntrinsics:
    with open(path) as f:
        kv = _parse_kv_text(f.read())
    try:
        return CameraIntrinsics(kv["fx"], kv["fy"], kv["cx"], kv["cy"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad intrinsics file: {exc}") from exc


def write_scene(path: str, scene: SyntheticScene):
    doc = {
        "schema": SCENE_SCHEMA,
        "camera_height": float(scene.ground.camera_height),
        "sky_depth": None if scene.sky_depth is None else float(scene.sky_depth),
        "boxes": [
            {"center": b.center.tolist(), "extents": b.extents.tolist()}
            for b in scene.objects
        ],
    }
    _atomic_write(path, yaml.safe_dump(doc, sort_keys=False).encode())


def read_scene(path: str) -> SyntheticScene:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise FormatError(f"bad scene file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCENE_SCHEMA:
        raise FormatError(f"scene schema tag missing or unsupported")
    try:
        ground = PlaneModel(np.array([0.0, 1.0, 0.0]), float(doc["camera_height"]))
        boxes = [Box(b["center"], b["extents"]) for b in doc.get("boxes", [])]
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad scene file: {exc}") from exc
    return SyntheticScene(ground, boxes, doc.get("sky_depth"))


# ------------------------------------------------------------------ config


@dataclass
class EvalConfig:
    min_depth: float = 1e-3
    max_depth: float = 80.0
    max_height: float = None  # no height masking by default


@dataclass
class ToolConfig:
    ransac: RansacConfig = field(default_factory=RansacConfig)
    epipole_policy: EpipoleMaskPolicy = field(default_factory=EpipoleMaskPolicy)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    eval: EvalConfig = field(default_factory=EvalConfig)


def read_config(path: str) -> ToolConfig:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise FormatError(f"bad config file: {exc}") from exc
    try:
        return ToolConfig(
            ransac=RansacConfig(**doc.get("ransac", {})),
            epipole_policy=EpipoleMaskPolicy(**doc.get("epipole_policy", {})),
            loss_weights=LossWeights(**doc.get("loss_weights", {})),
            eval=EvalConfig(**doc.get("eval", {})),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad config file: {exc}") from exc


@dataclass
class DatasetFrame:
    """One manifest entry tying together the rasters and pose for a frame."""

    image_id: str
    depth_path: str
    pose_path: str
    plane_path: str
    intrinsics: CameraIntrinsics


def read_manifest(path: str) -> list[DatasetFrame]:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise FormatError(f"bad manifest: {exc}") from exc
    if not isinstance(doc, list):
        raise FormatError("manifest must be a list of frame records")
    base = os.path.dirname(os.path.abspath(path))
    frames = []
    for rec in doc:
        try:
            k = rec["intrinsics"]
            frame = DatasetFrame(
                image_id=str(rec["image_id"]),
                depth_path=os.path.join(base, rec["depth"]),
                pose_path=os.path.join(base, rec["pose"]),
                plane_path=os.path.join(base, rec["plane"]),
                intrinsics=CameraIntrinsics(k["fx"], k["fy"], k["cx"], k["cy"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad manifest record: {exc}") from exc
        for p in (frame.depth_path, frame.pose_path, frame.plane_path):
            if not os.path.exists(p):
                raise FormatError(f"manifest references missing file: {p}")
        frames.append(frame)
    return frames
