"""Pose-aware (tri-plane) and subject-level (local coordinate + UV code) features."""

from avatar_fields.encode.local import (
    LocalCoordMode,
    alt_local_coord,
    encoded_width,
    local_tangent_coord,
    positional_encoding,
    subject_feature,
    uv_latent,
)
from avatar_fields.encode.triplane import (
    FactorizedTriPlane,
    PoseDictionary,
    count_triplane_parameters,
    dense_plane_parameters,
    domain_box,
    pose_feature,
    sample_triplane,
)

__all__ = [
    "FactorizedTriPlane",
    "LocalCoordMode",
    "PoseDictionary",
    "alt_local_coord",
    "count_triplane_parameters",
    "dense_plane_parameters",
    "domain_box",
    "encoded_width",
    "local_tangent_coord",
    "pose_feature",
    "positional_encoding",
    "sample_triplane",
    "subject_feature",
    "uv_latent",
]
