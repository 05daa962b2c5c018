"""
Training loop: one frame per iteration, a batch of rays drawn mostly inside the dilated
mask bounding box, stratified depth samples, Adam with exponential lr decay.

All randomness for iteration i comes from rng_for(seed, i), so a run resumed from a
checkpoint written after iteration i replays exactly what an uninterrupted run does.
"""

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from avatar_fields.core import NonFiniteError, rng_for
from avatar_fields.fields.gradients import backward
from avatar_fields.fields.model import AvatarModel
from avatar_fields.models import RunConfig, TrainConfig, TrainResult
from avatar_fields.render.camera import generate_rays, ray_box
from avatar_fields.render.pipeline import (
    RayOutputs,
    RenderContext,
    Subject,
    render_samples,
    report_degenerate,
)
from avatar_fields.render.sampling import build_batch
from avatar_fields.train.checkpoint import load_checkpoint, save_checkpoint
from avatar_fields.train.dataset import Dataset, Frame
from avatar_fields.train.losses import (
    LossParts,
    loss_color,
    loss_eikonal,
    loss_mask,
    loss_normal_reg,
    total_loss,
)
from avatar_fields.train.optim import AdamState, lr_schedule, step_model

log = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
LATEST = "latest.ckpt"


def mask_bbox(mask: np.ndarray, dilation: int) -> tuple[int, int, int, int] | None:
    """(row0, row1, col0, col1) half-open, dilated and clipped; None for an empty mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    h, w = mask.shape
    return (
        max(int(rows[0]) - dilation, 0),
        min(int(rows[-1]) + 1 + dilation, h),
        max(int(cols[0]) - dilation, 0),
        min(int(cols[-1]) + 1 + dilation, w),
    )


def sample_pixels(frame: Frame, config: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """(N, 2) (row, col) pixels: a share inside the mask bbox, the rest anywhere; or one patch."""
    h, w = frame.mask.shape
    box = mask_bbox(frame.mask, config.mask_bbox_dilation) or (0, h, 0, w)
    if config.patch_size > 0:
        p = min(config.patch_size, h, w)
        r_lo, c_lo = min(box[0], h - p), min(box[2], w - p)
        r0 = int(rng.integers(r_lo, max(min(box[1] - p, h - p), r_lo) + 1))
        c0 = int(rng.integers(c_lo, max(min(box[3] - p, w - p), c_lo) + 1))
        rr, cc = np.meshgrid(np.arange(r0, r0 + p), np.arange(c0, c0 + p), indexing="ij")
        return np.stack([rr.reshape(-1), cc.reshape(-1)], axis=1)
    n = config.rays_per_batch
    n_in = int(round(n * config.inside_fraction))
    inside = np.stack(
        [rng.integers(box[0], box[1], n_in), rng.integers(box[2], box[3], n_in)], axis=1
    )
    anywhere = np.stack([rng.integers(0, h, n - n_in), rng.integers(0, w, n - n_in)], axis=1)
    return np.concatenate([inside, anywhere], axis=0)


def compute_losses(
    ctx: RenderContext,
    dataset: Dataset,
    frame_id: int,
    pixels: np.ndarray,
    rng: np.random.Generator | None,
    config: TrainConfig,
    n_samples: int,
) -> tuple[LossParts, RayOutputs | None]:
    """Loss parts over the rays of `pixels` that hit the posed sampling box."""
    frame = dataset.frame(frame_id)
    pose = dataset.poses[frame.pose_index]
    posed = ctx.frame(pose)
    origins, dirs = generate_rays(frame.camera, pixels)
    near, far, hit = ray_box(origins, dirs, posed.box_min, posed.box_max)
    dtype = ctx.model.dtype
    if not hit.any():
        zero = torch.zeros((), dtype=dtype)
        return LossParts(zero, zero, zero, zero), None
    batch = build_batch(
        origins, dirs, near, far, hit, n_samples, stratified=rng is not None, rng=rng
    )
    out = render_samples(ctx, posed, batch)
    px = pixels[batch.ray_index]
    gt = torch.as_tensor(frame.rgb[px[:, 0], px[:, 1]], dtype=dtype)
    m = torch.as_tensor(frame.mask[px[:, 0], px[:, 1]])
    parts = LossParts(
        color=loss_color(out.rgb, gt),
        mask=loss_mask(out.d_min, m, config.rho),
        eikonal=loss_eikonal(out.fields.grad),
        normal=loss_normal_reg(
            out.fields.normal, torch.as_tensor(out.geometry.template_normal, dtype=dtype)
        ),
    )
    return parts, out


@dataclass
class TrainState:
    model: AvatarModel
    adam: AdamState
    iteration: int


def init_state(dataset: Dataset, config: RunConfig, frames: list[int]) -> TrainState:
    poses = dataset.pose_matrix(dataset.training_pose_indices(frames))
    model = AvatarModel(config, dataset.mesh, poses)
    return TrainState(model, AdamState.zeros_like(model), 0)


def train_loop(
    dataset: Dataset,
    config: RunConfig,
    out_dir: str | Path,
    resume: str | Path | None = None,
    progress: bool = True,
) -> TrainResult:
    """
    Optimize from scratch (or from `resume`) up to config.train.iterations. Writes
    checkpoints/<iter>.ckpt at the configured cadence, checkpoints/latest.ckpt and a JSONL
    log. A resumed run keeps the checkpoint's config except for the iteration target.
    """
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    log_path = out_dir / LOG_NAME
    total = config.train.iterations

    if resume is not None:
        ckpt = load_checkpoint(resume)
        config = ckpt.config.model_copy(
            update={"train": ckpt.config.train.model_copy(update={"iterations": total})}
        )
        ckpt.model.config = config
        state = TrainState(ckpt.model, ckpt.adam, ckpt.iteration)
        mesh = ckpt.mesh
        log.info("Resuming from %s at iteration %d", resume, state.iteration)
    else:
        state = init_state(dataset, config, dataset.training_frames(config.train.train_cameras))
        mesh = dataset.mesh
    tc = config.train
    frames = dataset.training_frames(tc.train_cameras)

    ctx = RenderContext(Subject(state.model, mesh))
    latest = ckpt_dir / LATEST
    if resume is None:
        save_checkpoint(ckpt_dir / f"{0:08d}.ckpt", 0, state.model, mesh, state.adam)
        save_checkpoint(latest, 0, state.model, mesh, state.adam)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text("", encoding="utf-8")

    last_total: float | None = None
    start = state.iteration
    with open(log_path, "a", encoding="utf-8") as log_file:
        bar = tqdm(range(start, total), desc="train", disable=not progress)
        for it in bar:
            rng = rng_for(config.seed, it)
            frame_id = frames[int(rng.integers(len(frames)))]
            lr = lr_schedule(it, total, tc.lr_start, tc.lr_end)
            t0 = time.perf_counter()
            pixels = sample_pixels(dataset.frame(frame_id), tc, rng)
            parts, out = compute_losses(
                ctx, dataset, frame_id, pixels, rng, tc, config.render.samples_per_ray
            )
            loss = total_loss(parts, tc)
            try:
                grads = backward(loss, state.model)
            except NonFiniteError as e:
                raise NonFiniteError(
                    f"{e} at iteration {it}; last good checkpoint is {latest}"
                ) from e
            step_model(state.model, grads, state.adam, lr, tc)
            state.iteration = it + 1
            last_total = float(loss)
            degenerate = 0.0
            if out is not None:
                degenerate = report_degenerate(
                    out.degenerate_count, out.sample_count, f"iteration {state.iteration}"
                )
            record = {
                "iter": state.iteration,
                "lr": lr,
                **parts.as_floats(),
                "total": last_total,
                "degenerate_fraction": degenerate,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            }
            log_file.write(json.dumps(record) + "\n")
            bar.set_postfix(loss=f"{last_total:.4f}")
            if state.iteration % tc.checkpoint_every == 0 or state.iteration == total:
                log_file.flush()
                save_checkpoint(
                    ckpt_dir / f"{state.iteration:08d}.ckpt", state.iteration, state.model, mesh, state.adam
                )
                save_checkpoint(latest, state.iteration, state.model, mesh, state.adam)

    return TrainResult(
        iterations=state.iteration,
        checkpoint=latest,
        log_path=log_path,
        final_loss=last_total,
        message=f"Trained {state.iteration - start} iterations; checkpoint {latest}",
    )
