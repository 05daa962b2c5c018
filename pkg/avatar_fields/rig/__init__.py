"""Skinned template: mesh records, skinning and surface queries."""

from avatar_fields.rig.mesh import Pose, Skeleton, SkinnedMesh, load_mesh, load_poses, save_mesh, save_poses
from avatar_fields.rig.skinning import (
    axis_angle_to_matrix,
    forward_kinematics,
    inverse_lbs,
    lbs_deform,
    query_skin_weights,
)
from avatar_fields.rig.surface import (
    MeshSurface,
    SurfaceSample,
    compute_tbn,
    nearest_surface,
    vertex_normals,
)

__all__ = [
    "MeshSurface",
    "Pose",
    "Skeleton",
    "SkinnedMesh",
    "SurfaceSample",
    "axis_angle_to_matrix",
    "compute_tbn",
    "forward_kinematics",
    "inverse_lbs",
    "lbs_deform",
    "load_mesh",
    "load_poses",
    "nearest_surface",
    "query_skin_weights",
    "save_mesh",
    "save_poses",
    "vertex_normals",
]
