"""Cameras, ray sampling, probe shading, compositing and the full rendering pipeline."""

from avatar_fields.render.camera import Camera, generate_rays, load_cameras, project, ray_box, save_cameras
from avatar_fields.render.pipeline import (
    Framebuffers,
    PosedFrame,
    RayOutputs,
    RenderContext,
    Subject,
    Substitution,
    map_reshape_points,
    query_geometry,
    remap_box,
    render_image,
    render_samples,
)
from avatar_fields.render.probe import LightProbe, irradiance, probe_geometry, shade
from avatar_fields.render.sampling import RaySampleBatch, build_batch, sample_points
from avatar_fields.render.volume import composite, transform_normal, transmittance

__all__ = [
    "Camera",
    "Framebuffers",
    "LightProbe",
    "PosedFrame",
    "RayOutputs",
    "RaySampleBatch",
    "RenderContext",
    "Subject",
    "Substitution",
    "build_batch",
    "composite",
    "generate_rays",
    "irradiance",
    "load_cameras",
    "map_reshape_points",
    "probe_geometry",
    "project",
    "query_geometry",
    "ray_box",
    "remap_box",
    "render_image",
    "render_samples",
    "sample_points",
    "save_cameras",
    "shade",
    "transform_normal",
    "transmittance",
]
