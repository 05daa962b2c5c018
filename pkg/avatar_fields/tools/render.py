"""
render tool: novel pose / novel view synthesis from a checkpoint, plus the shared frame
writer used by relight and edit.
"""

import logging
from pathlib import Path

from tqdm import tqdm

from avatar_fields.core import DatasetError
from avatar_fields.models import CameraRecord, RenderResult
from avatar_fields.render.camera import Camera, load_cameras
from avatar_fields.render.pipeline import RenderContext, Subject, render_image
from avatar_fields.rig.mesh import Pose, load_poses
from avatar_fields.train.checkpoint import load_checkpoint

log = logging.getLogger(__name__)


def load_context(checkpoint: Path) -> RenderContext:
    ckpt = load_checkpoint(checkpoint)
    return RenderContext(Subject(ckpt.model, ckpt.mesh))


def render_frames(
    ctx: RenderContext,
    poses: list[Pose],
    records: list[CameraRecord],
    out_dir: Path,
    progress: bool = True,
) -> RenderResult:
    """Render every camera record with its pose into out_dir (frames/ plus auxiliary buffers)."""
    out_dir = Path(out_dir)
    frames = []
    flagged = samples = 0
    for rec in tqdm(records, desc="render", disable=not progress):
        if rec.pose_index >= len(poses):
            raise DatasetError(f"Frame {rec.frame} references missing pose {rec.pose_index}")
        bufs = render_image(ctx, poses[rec.pose_index], Camera.from_record(rec))
        bufs.save(out_dir, rec.frame)
        flagged += bufs.degenerate_samples
        samples += bufs.samples
        frames.append(rec.frame)
    log.debug("Rendered %d frames into %s", len(frames), out_dir)
    return RenderResult(
        out_dir=out_dir,
        frames=frames,
        degenerate_fraction=flagged / samples if samples else 0.0,
        message=f"Rendered {len(frames)} frames to {out_dir}",
    )


def select(records: list[CameraRecord], frames: list[int] | None) -> list[CameraRecord]:
    if frames is None:
        return records
    by_id = {r.frame: r for r in records}
    missing = [f for f in frames if f not in by_id]
    if missing:
        raise DatasetError(f"Frame {missing[0]} has no camera entry")
    return [by_id[f] for f in frames]


def run(
    checkpoint: Path,
    poses_file: Path,
    cameras_file: Path,
    out_dir: Path,
    frames: list[int] | None = None,
    progress: bool = True,
) -> RenderResult:
    ctx = load_context(checkpoint)
    records = select(load_cameras(cameras_file), frames)
    return render_frames(ctx, load_poses(poses_file), records, out_dir, progress)
