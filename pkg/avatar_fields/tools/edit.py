"""
edit / relight tools: apply a post-training edit, then render the requested frames.
"""

import json
from pathlib import Path

from pydantic import ValidationError

from avatar_fields.core import ConfigError
from avatar_fields.customize import apply_edit, relight
from avatar_fields.models import EditSpec, RenderResult
from avatar_fields.render.camera import load_cameras
from avatar_fields.render.probe import LightProbe
from avatar_fields.rig.mesh import load_poses
from avatar_fields.tools.render import load_context, render_frames, select


def load_edit_spec(path: Path) -> EditSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read edit spec {path}: {e}") from e
    try:
        return EditSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid edit spec {path}: {e.errors()[0]['msg']}") from e


def run(
    checkpoint: Path,
    spec_file: Path,
    poses_file: Path,
    cameras_file: Path,
    out_dir: Path,
    frames: list[int] | None = None,
    progress: bool = True,
) -> RenderResult:
    spec = load_edit_spec(spec_file)
    ctx = apply_edit(load_context(checkpoint), spec, Path(spec_file).parent)
    records = select(load_cameras(cameras_file), frames)
    return render_frames(ctx, load_poses(poses_file), records, out_dir, progress)


def run_relight(
    checkpoint: Path,
    probe_file: Path,
    poses_file: Path,
    cameras_file: Path,
    out_dir: Path,
    frames: list[int] | None = None,
    progress: bool = True,
) -> RenderResult:
    ctx = relight(load_context(checkpoint), LightProbe.load(probe_file))
    records = select(load_cameras(cameras_file), frames)
    return render_frames(ctx, load_poses(poses_file), records, out_dir, progress)
