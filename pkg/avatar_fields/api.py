"""
Public API: run the pipeline from code.

    from avatar_fields import generate_dataset, train_avatar, render_avatar
    from avatar_fields.config import load_run_config

    config = load_run_config("configs/acceptance.json")
    generate_dataset(config, "data")
    result = train_avatar(config, "data", "outputs")
    render_avatar(result.checkpoint, "data/poses.json", "data/cameras.json", "outputs/render")
"""

from pathlib import Path

from avatar_fields.models import DatasetResult, EvalResult, RenderResult, RunConfig, TrainResult
from avatar_fields.tools import edit, evaluate, gen_data, render, train


def generate_dataset(
    config: RunConfig, out_dir: str | Path, *, backend: str = "bvh", progress: bool = False
) -> DatasetResult:
    """
    Render the synthetic capsule-person dataset.

    Writes mesh.json, poses.json, cameras.json, manifest.json, probe.nfimg, texture.nfimg,
    frames/, masks/, gt_albedo/, gt_normal/, gt_shadow/ and relight/<k>/ under out_dir.

    Args:
        config: Run configuration; `scene` and `render` sections drive generation.
        out_dir: Dataset directory.
        backend: Ray intersector ('bvh' default, 'brute').
        progress: Show a progress bar.

    Returns:
        DatasetResult with the frame count and the split manifest.
    """
    return gen_data.run(config, Path(out_dir), backend=backend, progress=progress)


def train_avatar(
    config: RunConfig,
    data_dir: str | Path,
    out_dir: str | Path,
    *,
    resume: str | Path | None = None,
    progress: bool = False,
) -> TrainResult:
    """
    Fit the avatar fields to a dataset.

    Args:
        config: Run configuration (ignored except `train.iterations` when resuming).
        data_dir: Dataset directory written by generate_dataset.
        out_dir: Receives NNNNNNNN.ckpt, latest.ckpt and train_log.jsonl.
        resume: Checkpoint to continue from.
        progress: Show a progress bar.

    Returns:
        TrainResult with the latest checkpoint and log paths.
    """
    return train.run(
        config, Path(data_dir), Path(out_dir),
        resume=Path(resume) if resume is not None else None, progress=progress,
    )


def render_avatar(
    checkpoint: str | Path,
    poses_file: str | Path,
    cameras_file: str | Path,
    out_dir: str | Path,
    *,
    frames: list[int] | None = None,
    progress: bool = False,
) -> RenderResult:
    """Render camera records (all, or the listed frame ids) for novel poses and views."""
    return render.run(
        Path(checkpoint), Path(poses_file), Path(cameras_file), Path(out_dir),
        frames=frames, progress=progress,
    )


def relight_avatar(
    checkpoint: str | Path,
    probe_file: str | Path,
    poses_file: str | Path,
    cameras_file: str | Path,
    out_dir: str | Path,
    *,
    frames: list[int] | None = None,
    progress: bool = False,
) -> RenderResult:
    """Render under a different light probe (same format as the dataset's probe.nfimg)."""
    return edit.run_relight(
        Path(checkpoint), Path(probe_file), Path(poses_file), Path(cameras_file), Path(out_dir),
        frames=frames, progress=progress,
    )


def edit_avatar(
    checkpoint: str | Path,
    spec_file: str | Path,
    poses_file: str | Path,
    cameras_file: str | Path,
    out_dir: str | Path,
    *,
    frames: list[int] | None = None,
    progress: bool = False,
) -> RenderResult:
    """Apply an edit-spec JSON (see EditSpec) and render."""
    return edit.run(
        Path(checkpoint), Path(spec_file), Path(poses_file), Path(cameras_file), Path(out_dir),
        frames=frames, progress=progress,
    )


def evaluate_renders(
    render_dir: str | Path,
    gt_dir: str | Path,
    *,
    manifest: str | Path | None = None,
    split: str = "val",
    out_dir: str | Path | None = None,
) -> EvalResult:
    """
    PSNR/SSIM of rendered frames against ground truth.

    Args:
        render_dir: Directory with frames/%04d.nfimg (or .png).
        gt_dir: Ground-truth directory with frames/ and masks/.
        manifest: Split manifest; defaults to gt_dir/manifest.json.
        split: 'train', 'val' or 'novel_pose'.
        out_dir: Where metrics.json and metrics.txt go (default render_dir).

    Returns:
        EvalResult with per-frame values and means.
    """
    return evaluate.run(
        Path(render_dir), Path(gt_dir),
        manifest=Path(manifest) if manifest is not None else None,
        split=split,
        out_dir=Path(out_dir) if out_dir is not None else None,
    )
