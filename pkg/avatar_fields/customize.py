"""
Post-training edits. Each edit returns a new RenderContext; the subject's parameters are
never touched, so any number of edited contexts can render from one trained subject.

    ctx = RenderContext(Subject(model, mesh))
    lit = relight(ctx, LightProbe.load("studio.nfimg"))
    flat = shadow_override(lit, "off")
    swapped = retexture(ctx, other_subject, load_uv_mask("torso.png"))
"""

import dataclasses
import logging
from pathlib import Path

import numpy as np
import torch

from avatar_fields.core import StructuralError
from avatar_fields.image_io import read_mask
from avatar_fields.models import EditSpec
from avatar_fields.render.pipeline import RenderContext, Subject, Substitution
from avatar_fields.render.probe import LightProbe
from avatar_fields.rig.mesh import SkinnedMesh, load_mesh
from avatar_fields.train.checkpoint import load_checkpoint

log = logging.getLogger(__name__)

SHADOW_MODES = ("off", "constant")


def relight(ctx: RenderContext, probe: LightProbe | torch.Tensor) -> RenderContext:
    """Render with `probe` instead of the learned one; geometry, albedo and shadow are unchanged."""
    texels = probe.tensor(ctx.model.dtype) if isinstance(probe, LightProbe) else probe.detach()
    if texels.ndim != 3 or texels.shape[2] not in (1, 3):
        raise StructuralError(f"Probe must be H x W x 1 or H x W x 3, got {tuple(texels.shape)}")
    return dataclasses.replace(ctx, probe=texels)


def shadow_override(ctx: RenderContext, mode: str, value: float = 1.0) -> RenderContext:
    """Replace the shadow factor by 1 ("off") or a constant k in [0, 1]."""
    if mode not in SHADOW_MODES:
        raise ValueError(f"Unknown shadow mode: {mode}. Available: {list(SHADOW_MODES)}")
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"Constant shadow value must lie in [0, 1], got {value}")
    return dataclasses.replace(ctx, shadow_mode=mode, shadow_value=float(value))


def shadow_transfer(ctx: RenderContext, source: Subject, uv_mask: np.ndarray | None = None) -> RenderContext:
    """Inside the UV mask, take the shadow factor from `source` at the box-aligned canonical point."""
    return dataclasses.replace(
        ctx, substitution=Substitution(source, uv_mask, albedo=False, shadow=True)
    )


def retexture(
    ctx: RenderContext,
    source: Subject,
    uv_mask: np.ndarray | None = None,
    swap_shadow: bool = False,
) -> RenderContext:
    """Inside the UV mask, take albedo (and optionally shadow) from `source`; density stays the target's."""
    return dataclasses.replace(
        ctx, substitution=Substitution(source, uv_mask, albedo=True, shadow=swap_shadow)
    )


def reshape(ctx: RenderContext, edited: SkinnedMesh) -> RenderContext:
    """
    Render the subject in the shape of `edited`, a mesh with the template's topology.
    Query points near the posed edited mesh are carried back to the original canonical
    mesh through tangent-space coordinates.
    """
    original = ctx.subject.mesh
    if not original.same_topology(edited) or edited.n_vertices != original.n_vertices:
        raise StructuralError("Edited mesh must share triangles and UVs with the template")
    if edited.n_joints != original.n_joints:
        raise StructuralError("Edited mesh must use the template's skeleton")
    if np.array_equal(edited.vertices, original.vertices):
        return dataclasses.replace(ctx, reshape_mesh=None)
    return dataclasses.replace(ctx, reshape_mesh=edited)


def load_uv_mask(path: str | Path) -> np.ndarray:
    """8-bit grayscale UV-space PNG thresholded at 128 (row 0 is v = 1)."""
    return read_mask(path, threshold=128)


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_source_subject(checkpoint: Path, mesh: Path | None) -> Subject:
    ckpt = load_checkpoint(checkpoint)
    return Subject(ckpt.model, load_mesh(mesh) if mesh is not None else ckpt.mesh)


def apply_edit(ctx: RenderContext, spec: EditSpec, base_dir: str | Path = ".") -> RenderContext:
    """Build the edited context described by `spec`; relative paths resolve against base_dir."""
    base = Path(base_dir)
    log.info("Applying %s edit", spec.kind)
    if spec.kind == "relight":
        return relight(ctx, LightProbe.load(_resolve(base, spec.probe)))
    if spec.kind == "shadow_override":
        return shadow_override(ctx, spec.shadow_mode, spec.shadow_value)
    if spec.kind == "reshape":
        return reshape(ctx, load_mesh(_resolve(base, spec.mesh)))
    source = load_source_subject(
        _resolve(base, spec.source_checkpoint),
        _resolve(base, spec.source_mesh) if spec.source_mesh else None,
    )
    mask = load_uv_mask(_resolve(base, spec.uv_mask)) if spec.uv_mask else None
    if spec.kind == "shadow_transfer":
        return shadow_transfer(ctx, source, mask)
    return retexture(ctx, source, mask, spec.swap_shadow)
