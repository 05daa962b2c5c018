"""
Pinhole cameras in the OpenCV convention: camera looks down +z, x right, y down.
Pixel (row i, col j) has its center at image coordinates (j + 0.5, i + 0.5).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from avatar_fields.core import DatasetError, StructuralError
from avatar_fields.models import CameraRecord
from avatar_fields.rig.mesh import rigid_inverse


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray

    def __post_init__(self) -> None:
        w2c = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        if self.fx <= 0 or self.fy <= 0:
            raise StructuralError("Camera focal lengths must be positive")
        rot = w2c[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6):
            raise StructuralError("Camera rotation is not orthonormal")
        object.__setattr__(self, "world_to_camera", w2c)

    @property
    def camera_to_world(self) -> np.ndarray:
        return rigid_inverse(self.world_to_camera)

    @property
    def center(self) -> np.ndarray:
        return self.camera_to_world[:3, 3]

    @classmethod
    def from_record(cls, rec: CameraRecord) -> "Camera":
        return cls(rec.fx, rec.fy, rec.cx, rec.cy, rec.width, rec.height, np.array(rec.world_to_camera))

    @classmethod
    def look_at(
        cls, eye: np.ndarray, target: np.ndarray, up: np.ndarray, fx: float, fy: float,
        width: int, height: int,
    ) -> "Camera":
        """Camera at `eye` looking at `target`; `up` maps to image -y."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        w2c = np.eye(4)
        w2c[:3, :3] = rot
        w2c[:3, 3] = -rot @ eye
        return cls(fx, fy, width / 2.0, height / 2.0, width, height, w2c)


def all_pixels(camera: Camera) -> np.ndarray:
    """(H*W, 2) integer (row, col) pairs in row-major order."""
    rows, cols = np.meshgrid(np.arange(camera.height), np.arange(camera.width), indexing="ij")
    return np.stack([rows.reshape(-1), cols.reshape(-1)], axis=1)


def generate_rays(camera: Camera, pixels: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray origins and unit directions through pixel centers."""
    if pixels is None:
        pixels = all_pixels(camera)
    pixels = np.asarray(pixels).reshape(-1, 2)
    u = pixels[:, 1] + 0.5
    v = pixels[:, 0] + 0.5
    d_cam = np.stack([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, np.ones_like(u)], axis=1)
    c2w = camera.camera_to_world
    dirs = d_cam @ c2w[:3, :3].T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(c2w[:3, 3], dirs.shape).copy()
    return origins, dirs


def project(camera: Camera, points: np.ndarray) -> np.ndarray:
    """World points (N, 3) -> image coordinates (N, 2) as (u, v)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = p @ camera.world_to_camera[:3, :3].T + camera.world_to_camera[:3, 3]
    return np.stack(
        [camera.fx * cam[:, 0] / cam[:, 2] + camera.cx, camera.fy * cam[:, 1] / cam[:, 2] + camera.cy],
        axis=1,
    )


def ray_box(
    origins: np.ndarray, dirs: np.ndarray, box_min: np.ndarray, box_max: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slab test. Returns (near, far, hit); near is clamped at 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (box_min - origins) * inv
        t1 = (box_max - origins) * inv
    t_lo = np.nan_to_num(np.minimum(t0, t1), nan=-np.inf)
    t_hi = np.nan_to_num(np.maximum(t0, t1), nan=np.inf)
    near = np.maximum(t_lo.max(axis=1), 0.0)
    far = t_hi.min(axis=1)
    hit = far > near
    return near, far, hit


def load_cameras(path: str | Path) -> list[CameraRecord]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"Cannot read cameras file {path}: {e}") from e
    if not isinstance(data, list):
        raise DatasetError(f"Cameras file {path} must hold a JSON array")
    try:
        return [CameraRecord.model_validate(c) for c in data]
    except ValidationError as e:
        raise DatasetError(f"Invalid camera entry in {path}: {e.errors()[0]['msg']}") from e


def save_cameras(records: list[CameraRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([r.model_dump() for r in records], indent=1), encoding="utf-8")
