"""
Rendering pipeline: rays -> depth samples -> nearest posed surface -> inverse LBS ->
encodings -> fields -> probe shading -> compositing.

Geometry preprocessing (surface queries, skinning) runs in float64 numpy and carries no
parameters. Everything from the encodings on is torch, so the same code path serves
training (with autograd) and rendering (under no_grad). Post-training edits enter through
RenderContext.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from avatar_fields.core import StructuralError
from avatar_fields.encode.local import LocalCoordMode, alt_local_coord, local_tangent_coord
from avatar_fields.fields.model import AvatarModel, FieldInputs, FieldOutputs
from avatar_fields.image_io import write_nfimg, write_png
from avatar_fields.render.camera import Camera, generate_rays, ray_box
from avatar_fields.render.probe import shade
from avatar_fields.render.sampling import RaySampleBatch, build_batch
from avatar_fields.render.volume import composite, transform_normal
from avatar_fields.rig.mesh import Pose, SkinnedMesh
from avatar_fields.rig.skinning import (
    blend_transforms,
    forward_kinematics,
    inverse_lbs,
    lbs_deform,
    query_skin_weights,
)
from avatar_fields.rig.surface import MeshSurface, SurfaceSample

log = logging.getLogger(__name__)

BUFFERS = ("alpha", "normal", "albedo", "shadow", "depth")


@dataclass
class PosedFrame:
    """A mesh posed once: joint transforms, posed surface (with index) and sampling box."""

    mesh: SkinnedMesh
    pose: Pose
    transforms: np.ndarray
    surface: MeshSurface
    box_min: np.ndarray
    box_max: np.ndarray

    @classmethod
    def build(cls, mesh: SkinnedMesh, pose: Pose, dilation: float) -> "PosedFrame":
        transforms = forward_kinematics(mesh.skeleton, pose)
        posed = lbs_deform(mesh, pose)
        lo, hi = posed.min(axis=0), posed.max(axis=0)
        pad = (hi - lo) * dilation
        return cls(mesh, pose, transforms, MeshSurface(posed, mesh.triangles, mesh.uvs), lo - pad, hi + pad)


@dataclass
class Subject:
    """A trained (or initialized) model together with its template mesh."""

    model: AvatarModel
    mesh: SkinnedMesh
    canonical: MeshSurface = field(init=False)
    _frames: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        self.canonical = MeshSurface(self.mesh.vertices, self.mesh.triangles, self.mesh.uvs)

    def posed(self, pose: Pose, mesh: SkinnedMesh | None = None) -> PosedFrame:
        """Posed frame of the template (or of an edited mesh sharing its topology), cached."""
        mesh = mesh or self.mesh
        key = (pose.joint_rotations.tobytes(), pose.root_translation.tobytes(), id(mesh))
        if key not in self._frames:
            self._frames[key] = PosedFrame.build(mesh, pose, self.model.config.render.bounds_dilation)
        return self._frames[key]

    def canonical_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mesh.bbox()


@dataclass
class SampleGeometry:
    """Per-sample geometry shared by the fields and by edits."""

    x_c: np.ndarray
    local: np.ndarray
    tri_vertices: np.ndarray
    bary: np.ndarray
    template_normal: np.ndarray
    blend_rotation: np.ndarray
    uv: np.ndarray

    def inputs(self, view_dir: np.ndarray, pose: np.ndarray, dtype: torch.dtype) -> FieldInputs:
        def t(a: np.ndarray) -> torch.Tensor:
            return torch.as_tensor(a, dtype=dtype)

        return FieldInputs(
            x_c=t(self.x_c),
            local=t(self.local),
            tri_vertices=torch.as_tensor(self.tri_vertices, dtype=torch.long),
            bary=t(self.bary),
            view_dir=t(view_dir),
            template_normal=t(self.template_normal),
            pose=np.asarray(pose, dtype=np.float64).reshape(-1),
        )


def _nearest_vertex(tri_vertices: np.ndarray, bary: np.ndarray) -> np.ndarray:
    weights = np.concatenate([bary, 1.0 - bary.sum(axis=1, keepdims=True)], axis=1)
    return tri_vertices[np.arange(len(tri_vertices)), np.argmax(weights, axis=1)]


def query_geometry(subject: Subject, frame: PosedFrame, x_o: np.ndarray, mode: LocalCoordMode) -> SampleGeometry:
    """Warp observation-space samples to canonical space via the nearest posed surface point."""
    sample = frame.surface.nearest(x_o)
    weights = query_skin_weights(x_o, frame.mesh, frame.surface, sample)
    tri_vertices = subject.mesh.triangles[sample.tri_id]
    return SampleGeometry(
        x_c=inverse_lbs(x_o, weights, frame.transforms),
        local=alt_local_coord(mode, sample, x_o),
        tri_vertices=tri_vertices,
        bary=sample.bary,
        template_normal=subject.canonical.normals[_nearest_vertex(tri_vertices, sample.bary)],
        blend_rotation=blend_transforms(weights, frame.transforms)[:, :3, :3],
        uv=sample.uv,
    )


def map_reshape_points(
    original: MeshSurface, edited: MeshSurface, x_o: np.ndarray
) -> tuple[np.ndarray, SurfaceSample, SurfaceSample]:
    """
    Tangent-space transfer between shapes of one topology: nearest sample on `edited`,
    x_l = M'(x_o - x_s'), then x_c = x_s + M^-1 x_l at the same (triangle, barycentric)
    point of `original`. Returns (x_c, edited sample, original sample).
    """
    edited_sample = edited.nearest(x_o)
    x_l = local_tangent_coord(edited_sample, x_o)
    x_s = original.point_at(edited_sample.tri_id, edited_sample.bary)
    weights = np.concatenate(
        [edited_sample.bary, 1.0 - edited_sample.bary.sum(axis=1, keepdims=True)], axis=1
    )
    original_sample = original.sample(x_s, edited_sample.tri_id, weights, np.zeros(len(x_s)))
    x_c = x_s + np.linalg.solve(original_sample.tbn, x_l[..., None])[..., 0]
    return x_c, edited_sample, original_sample


def query_geometry_reshaped(
    subject: Subject, frame: PosedFrame, x_o: np.ndarray, mode: LocalCoordMode
) -> SampleGeometry:
    """Samples near a posed edited mesh mapped onto the original canonical mesh."""
    x_c, edited_sample, canon_sample = map_reshape_points(subject.canonical, frame.surface, x_o)
    weights = query_skin_weights(x_o, frame.mesh, frame.surface, edited_sample)
    tri_vertices = subject.mesh.triangles[edited_sample.tri_id]
    return SampleGeometry(
        x_c=x_c,
        local=alt_local_coord(mode, canon_sample, x_c),
        tri_vertices=tri_vertices,
        bary=edited_sample.bary,
        template_normal=subject.canonical.normals[_nearest_vertex(tri_vertices, edited_sample.bary)],
        blend_rotation=blend_transforms(weights, frame.transforms)[:, :3, :3],
        uv=edited_sample.uv,
    )


@dataclass(frozen=True)
class Substitution:
    """Evaluate albedo and/or shadow with another subject inside a UV-space region."""

    source: Subject
    uv_mask: np.ndarray | None = None
    albedo: bool = True
    shadow: bool = False

    def is_empty(self) -> bool:
        return (self.uv_mask is not None and not bool(np.any(self.uv_mask))) or not (self.albedo or self.shadow)

    def selects(self, uv: np.ndarray) -> np.ndarray:
        """Samples whose surface UV falls inside the mask; no mask selects everything."""
        if self.uv_mask is None:
            return np.ones(len(uv), dtype=bool)
        h, w = self.uv_mask.shape
        cols = np.clip(np.floor(uv[:, 0] * w).astype(np.int64), 0, w - 1)
        rows = np.clip(np.floor((1.0 - uv[:, 1]) * h).astype(np.int64), 0, h - 1)
        return self.uv_mask[rows, cols]


@dataclass(frozen=True)
class RenderContext:
    """Subject plus optional edits; immutable so several edits can share one subject."""

    subject: Subject
    probe: torch.Tensor | None = None
    shadow_mode: str | None = None
    shadow_value: float = 1.0
    substitution: Substitution | None = None
    reshape_mesh: SkinnedMesh | None = None

    @property
    def model(self) -> AvatarModel:
        return self.subject.model

    @property
    def mode(self) -> LocalCoordMode:
        return LocalCoordMode(self.model.config.encoding.local_mode)

    def texels(self) -> torch.Tensor:
        return self.model.probe if self.probe is None else self.probe.to(self.model.dtype)

    def frame(self, pose: Pose) -> PosedFrame:
        return self.subject.posed(pose, self.reshape_mesh)

    def geometry(self, frame: PosedFrame, x_o: np.ndarray) -> SampleGeometry:
        if self.reshape_mesh is None:
            return query_geometry(self.subject, frame, x_o, self.mode)
        return query_geometry_reshaped(self.subject, frame, x_o, self.mode)


def remap_box(x: np.ndarray, src: tuple[np.ndarray, np.ndarray], dst: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Per-axis affine map of box `src` onto box `dst`; identical boxes return x unchanged."""
    if np.array_equal(src[0], dst[0]) and np.array_equal(src[1], dst[1]):
        return x
    return dst[0] + (x - src[0]) * (dst[1] - dst[0]) / (src[1] - src[0])


def _source_outputs(
    ctx: RenderContext, geom: SampleGeometry, inputs: FieldInputs
) -> FieldOutputs:
    sub = ctx.substitution
    src = sub.source
    target = ctx.subject
    if src.model.poses.poses.shape[1] != inputs.pose.shape[0]:
        raise StructuralError("Source subject uses a different skeleton")
    same_shape = (
        src.mesh is target.mesh
        or (
            np.array_equal(src.mesh.vertices, target.mesh.vertices)
            and np.array_equal(src.mesh.triangles, target.mesh.triangles)
            and np.array_equal(src.mesh.uvs, target.mesh.uvs)
        )
    )
    if same_shape:
        return src.model(inputs)
    x_src = remap_box(geom.x_c, target.canonical_box(), src.canonical_box())
    sample = src.canonical.nearest(x_src)
    tri_vertices = src.mesh.triangles[sample.tri_id]
    src_geom = SampleGeometry(
        x_c=x_src,
        local=alt_local_coord(LocalCoordMode(src.model.config.encoding.local_mode), sample, x_src),
        tri_vertices=tri_vertices,
        bary=sample.bary,
        template_normal=src.canonical.normals[_nearest_vertex(tri_vertices, sample.bary)],
        blend_rotation=geom.blend_rotation,
        uv=sample.uv,
    )
    return src.model(src_geom.inputs(inputs.view_dir.numpy(), inputs.pose, src.model.dtype))


@dataclass
class RayOutputs:
    """Composited per-ray values plus the per-sample tensors the losses need."""

    rgb: torch.Tensor
    alpha: torch.Tensor
    weights: torch.Tensor
    normal: torch.Tensor
    albedo: torch.Tensor
    shadow: torch.Tensor
    depth: torch.Tensor
    d_min: torch.Tensor
    fields: FieldOutputs
    geometry: SampleGeometry

    @property
    def degenerate_count(self) -> int:
        """Samples whose SDF gradient vanished and took the template normal."""
        return int(self.fields.degenerate.sum())

    @property
    def sample_count(self) -> int:
        return int(self.fields.degenerate.numel())


def render_samples(ctx: RenderContext, frame: PosedFrame, batch: RaySampleBatch) -> RayOutputs:
    """Evaluate fields at every sample of `batch` and composite per ray."""
    model = ctx.model
    r, n = batch.n_rays, batch.n_samples
    x_o = batch.positions()
    view = np.repeat(batch.dirs, n, axis=0)
    geom = ctx.geometry(frame, x_o)
    inputs = geom.inputs(view, frame.pose.flat(), model.dtype)
    out = model(inputs)

    albedo, shadow, normal = out.albedo, out.shadow, out.normal
    sub = ctx.substitution
    if sub is not None and not sub.is_empty():
        pick = sub.selects(geom.uv)
        if pick.any():
            src = _source_outputs(ctx, geom, inputs)
            pick_t = torch.as_tensor(pick)
            if sub.albedo:
                albedo = torch.where(pick_t[:, None], src.albedo.to(albedo.dtype), albedo)
            if sub.shadow:
                shadow = torch.where(pick_t, src.shadow.to(shadow.dtype), shadow)
    if ctx.shadow_mode == "off":
        shadow = torch.ones_like(shadow)
    elif ctx.shadow_mode == "constant":
        shadow = torch.full_like(shadow, ctx.shadow_value)

    n_o = transform_normal(normal, torch.as_tensor(geom.blend_rotation))
    color = shade(albedo, shadow, n_o, ctx.texels())
    sigma = model.density(out.d).view(r, n)
    deltas = torch.as_tensor(batch.deltas, dtype=model.dtype)
    rgb, alpha, weights = composite(sigma, deltas, color.view(r, n, 3))
    w = weights[..., None]
    t = torch.as_tensor(batch.t, dtype=model.dtype)
    return RayOutputs(
        rgb=rgb,
        alpha=alpha,
        weights=weights,
        normal=(w * n_o.view(r, n, 3)).sum(dim=1),
        albedo=(w * albedo.view(r, n, 3)).sum(dim=1),
        shadow=(weights * shadow.view(r, n)).sum(dim=1),
        depth=(weights * t).sum(dim=1),
        d_min=out.d.view(r, n).min(dim=1).values,
        fields=out,
        geometry=geom,
    )


@dataclass
class Framebuffers:
    """Linear float buffers of one rendered view; each is H x W x C."""

    rgb: np.ndarray
    alpha: np.ndarray
    normal: np.ndarray
    albedo: np.ndarray
    shadow: np.ndarray
    depth: np.ndarray
    degenerate_samples: int = 0
    samples: int = 0

    @property
    def degenerate_fraction(self) -> float:
        return self.degenerate_samples / self.samples if self.samples else 0.0

    def save(self, out_dir: str | Path, frame: int) -> None:
        """frames/%04d.{png,nfimg} plus <buffer>/%04d.nfimg for every auxiliary buffer."""
        out_dir = Path(out_dir)
        name = f"{frame:04d}"
        write_png(out_dir / "frames" / f"{name}.png", self.rgb)
        write_nfimg(out_dir / "frames" / f"{name}.nfimg", self.rgb)
        for buf in BUFFERS:
            write_nfimg(out_dir / buf / f"{name}.nfimg", getattr(self, buf))


def report_degenerate(flagged: int, samples: int, where: str) -> float:
    """Log flagged zero-gradient samples at WARNING and return their fraction."""
    fraction = flagged / samples if samples else 0.0
    if flagged:
        log.warning(
            "%s: %d of %d samples (%.4f) have a zero SDF gradient and use the template normal",
            where, flagged, samples, fraction,
        )
    return fraction


def _guard(name: str, t: torch.Tensor) -> torch.Tensor:
    bad = ~torch.isfinite(t)
    if bool(bad.any()):
        log.warning("%d non-finite values in %s clamped to 0", int(bad.sum()), name)
        return torch.nan_to_num(t, nan=0.0, posinf=0.0, neginf=0.0)
    return t


@torch.no_grad()
def render_image(
    ctx: RenderContext, pose: Pose, camera: Camera, progress: bool = False
) -> Framebuffers:
    """Render every pixel of `camera` with unstratified samples; background is black."""
    rc = ctx.model.config.render
    frame = ctx.frame(pose)
    origins, dirs = generate_rays(camera)
    near, far, hit = ray_box(origins, dirs, frame.box_min, frame.box_max)
    n_pix = camera.width * camera.height
    bufs = {
        "rgb": np.zeros((n_pix, 3)),
        "alpha": np.zeros((n_pix, 1)),
        "normal": np.zeros((n_pix, 3)),
        "albedo": np.zeros((n_pix, 3)),
        "shadow": np.zeros((n_pix, 1)),
        "depth": np.zeros((n_pix, 1)),
    }
    rays = np.flatnonzero(hit)
    flagged = samples = 0
    chunks = range(0, len(rays), rc.chunk_rays)
    for s in tqdm(chunks, desc="render", disable=not progress, leave=False):
        idx = rays[s : s + rc.chunk_rays]
        mask = np.zeros(n_pix, dtype=bool)
        mask[idx] = True
        batch = build_batch(origins, dirs, near, far, mask, rc.samples_per_ray)
        out = render_samples(ctx, frame, batch)
        flagged += out.degenerate_count
        samples += out.sample_count
        for key in bufs:
            val = _guard(key, getattr(out, key)).double().numpy()
            bufs[key][batch.ray_index] = val.reshape(len(batch.ray_index), -1)
    report_degenerate(flagged, samples, "render")
    h, w = camera.height, camera.width
    return Framebuffers(
        **{k: v.reshape(h, w, -1) for k, v in bufs.items()}, degenerate_samples=flagged, samples=samples
    )
