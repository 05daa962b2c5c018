"""
eval tool: PSNR/SSIM of rendered frames against ground truth over a manifest split,
cropped to the ground-truth mask's bounding box. Writes metrics.json and metrics.txt.
"""

import json
import logging
from pathlib import Path

import numpy as np

from avatar_fields.core import DatasetError
from avatar_fields.image_io import read_mask
from avatar_fields.models import EvalResult, FrameMetrics
from avatar_fields.oracle.metrics import mask_box, psnr, ssim
from avatar_fields.train.dataset import SPLITS, frame_path, load_frame_rgb, load_manifest

log = logging.getLogger(__name__)


def format_table(result: EvalResult) -> str:
    """Aligned text table: one row per frame plus the mean row."""
    lines = [f"{'frame':>6}  {'PSNR':>8}  {'SSIM':>7}"]
    lines += [f"{m.frame:>6}  {m.psnr:>8.3f}  {m.ssim:>7.4f}" for m in result.frames]
    lines.append(f"{'mean':>6}  {result.mean_psnr:>8.3f}  {result.mean_ssim:>7.4f}")
    return "\n".join(lines) + "\n"


def evaluate_frames(render_dir: Path, gt_dir: Path, frames: list[int]) -> list[FrameMetrics]:
    out = []
    for f in frames:
        gt = load_frame_rgb(gt_dir, f)
        pred = load_frame_rgb(render_dir, f)
        mask_path = frame_path(gt_dir, "masks", f, "png")
        box = mask_box(read_mask(mask_path)) if mask_path.exists() else None
        out.append(FrameMetrics(frame=f, psnr=psnr(pred, gt, box), ssim=ssim(pred, gt, box)))
    return out


def run(
    render_dir: Path,
    gt_dir: Path,
    manifest: Path | None = None,
    split: str = "val",
    out_dir: Path | None = None,
) -> EvalResult:
    """Manifest defaults to gt_dir/manifest.json; outputs go to out_dir (default render_dir)."""
    if split not in SPLITS:
        raise ValueError(f"Unknown split: {split}. Available: {list(SPLITS)}")
    render_dir, gt_dir = Path(render_dir), Path(gt_dir)
    manifest_path = Path(manifest) if manifest is not None else gt_dir / "manifest.json"
    frames = list(getattr(load_manifest(manifest_path), split))
    if not frames:
        raise DatasetError(f"Split {split} of {manifest_path} is empty")
    metrics = evaluate_frames(render_dir, gt_dir, frames)
    result = EvalResult(
        split=split,
        frames=metrics,
        mean_psnr=float(np.mean([m.psnr for m in metrics])),
        mean_ssim=float(np.mean([m.ssim for m in metrics])),
    )
    out_dir = Path(out_dir) if out_dir is not None else render_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    result.metrics_json = out_dir / "metrics.json"
    result.metrics_txt = out_dir / "metrics.txt"
    result.metrics_json.write_text(
        json.dumps(result.model_dump(mode="json", exclude={"metrics_json", "metrics_txt"}), indent=2) + "\n",
        encoding="utf-8",
    )
    result.metrics_txt.write_text(format_table(result), encoding="utf-8")
    log.info("Mean PSNR %.3f, SSIM %.4f over %d frames", result.mean_psnr, result.mean_ssim, len(metrics))
    return result
