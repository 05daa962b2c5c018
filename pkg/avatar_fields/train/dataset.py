"""
Dataset directory reader.

    mesh.json  poses.json  cameras.json  probe.nfimg  manifest.json
    frames/%04d.png  frames/%04d.nfimg  masks/%04d.png
    gt_albedo/  gt_normal/  gt_shadow/   (%04d.nfimg, oracle buffers)

Training colors come from the linear frames/%04d.nfimg when present, otherwise from the
PNG through the inverse sRGB curve.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from avatar_fields.core import DatasetError
from avatar_fields.image_io import read_mask, read_nfimg, read_png, srgb_to_linear
from avatar_fields.models import CameraRecord, Manifest
from avatar_fields.render.camera import Camera, load_cameras
from avatar_fields.render.probe import LightProbe
from avatar_fields.rig.mesh import Pose, SkinnedMesh, load_mesh, load_poses

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "novel_pose")


@dataclass
class Frame:
    frame: int
    camera: Camera
    pose_index: int
    rgb: np.ndarray
    mask: np.ndarray


def frame_path(root: Path, kind: str, frame: int, ext: str) -> Path:
    return root / kind / f"{frame:04d}.{ext}"


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        return Manifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"Cannot read manifest {path}: {e}") from e
    except ValidationError as e:
        raise DatasetError(f"Invalid manifest {path}: {e.errors()[0]['msg']}") from e


def load_frame_rgb(root: Path, frame: int) -> np.ndarray:
    """Linear RGB (H, W, 3) float64 for `frame`."""
    raw = frame_path(root, "frames", frame, "nfimg")
    if raw.exists():
        return read_nfimg(raw)[:, :, :3].astype(np.float64)
    png = frame_path(root, "frames", frame, "png")
    if not png.exists():
        raise DatasetError(f"Frame {frame} is missing: neither {raw} nor {png} exists")
    return srgb_to_linear(read_png(png) / 255.0)


@dataclass
class Dataset:
    root: Path
    mesh: SkinnedMesh
    poses: list[Pose]
    cameras: dict[int, CameraRecord]
    manifest: Manifest
    probe: LightProbe | None = None
    _cache: dict[int, Frame] = field(default_factory=dict, repr=False)

    def split(self, name: str) -> list[int]:
        if name not in SPLITS:
            raise DatasetError(f"Unknown split: {name}. Available: {list(SPLITS)}")
        return list(getattr(self.manifest, name))

    def frame(self, frame: int) -> Frame:
        if frame not in self._cache:
            rec = self.cameras.get(frame)
            if rec is None:
                raise DatasetError(f"Frame {frame} has no camera entry")
            if rec.pose_index >= len(self.poses):
                raise DatasetError(f"Frame {frame} references missing pose {rec.pose_index}")
            mask_path = frame_path(self.root, "masks", frame, "png")
            if not mask_path.exists():
                raise DatasetError(f"Frame {frame} is missing its mask {mask_path}")
            rgb = load_frame_rgb(self.root, frame)
            mask = read_mask(mask_path)
            if rgb.shape[:2] != (rec.height, rec.width) or mask.shape != rgb.shape[:2]:
                raise DatasetError(f"Frame {frame} buffers do not match camera size {rec.width}x{rec.height}")
            self._cache[frame] = Frame(frame, Camera.from_record(rec), rec.pose_index, rgb, mask)
        return self._cache[frame]

    def training_frames(self, cameras: list[int] | None = None) -> list[int]:
        """Training frame ids, optionally restricted to a camera subset (monocular runs)."""
        frames = self.split("train")
        if cameras is not None:
            keep = set(cameras)
            frames = [f for f in frames if self.cameras[f].camera_index in keep]
        if not frames:
            raise DatasetError("No training frames left after camera selection")
        return frames

    def training_pose_indices(self, frames: list[int]) -> list[int]:
        """Distinct pose indices (ascending) of `frames`; duplicates by value are dropped."""
        seen: set[bytes] = set()
        out = []
        for idx in sorted({self.cameras[f].pose_index for f in frames}):
            key = self.poses[idx].flat().tobytes()
            if key not in seen:
                seen.add(key)
                out.append(idx)
        return out

    def pose_matrix(self, indices: list[int]) -> np.ndarray:
        return np.stack([self.poses[i].flat() for i in indices])


def load_dataset(root: str | Path) -> Dataset:
    """Read the dataset index files; frames load lazily."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"Dataset directory not found: {root}")
    for name in ("mesh.json", "poses.json", "cameras.json", "manifest.json"):
        if not (root / name).exists():
            raise DatasetError(f"Dataset {root} is missing {name}")
    mesh = load_mesh(root / "mesh.json")
    poses = load_poses(root / "poses.json")
    cameras = {rec.frame: rec for rec in load_cameras(root / "cameras.json")}
    manifest = load_manifest(root / "manifest.json")
    for split in SPLITS:
        for f in getattr(manifest, split):
            if f not in cameras:
                raise DatasetError(f"Manifest {split} frame {f} has no camera entry")
    probe_path = root / "probe.nfimg"
    probe = LightProbe.load(probe_path) if probe_path.exists() else None
    log.debug("Loaded dataset %s: %d frames, %d poses", root, len(cameras), len(poses))
    return Dataset(root, mesh, poses, cameras, manifest, probe)
