"""Ground truth: procedural capsule person, reference ray tracer, datasets and image metrics."""

from avatar_fields.oracle.capsule import make_albedo_texture, make_capsule_person, sample_texture
from avatar_fields.oracle.dataset import gen_dataset, make_cameras, make_poses
from avatar_fields.oracle.intersect import REGISTRY, get_intersector
from avatar_fields.oracle.metrics import mask_box, psnr, ssim
from avatar_fields.oracle.probes import make_probe
from avatar_fields.oracle.raytrace import GroundTruthFrame, PosedScene, reference_render

__all__ = [
    "GroundTruthFrame",
    "PosedScene",
    "REGISTRY",
    "gen_dataset",
    "get_intersector",
    "make_albedo_texture",
    "make_cameras",
    "make_capsule_person",
    "make_poses",
    "make_probe",
    "mask_box",
    "psnr",
    "reference_render",
    "sample_texture",
    "ssim",
]
