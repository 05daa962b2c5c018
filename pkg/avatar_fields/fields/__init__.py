"""Geometry, shadow and albedo fields, density conversion and gradients."""

from avatar_fields.fields.gradients import backward, finite_difference_gradient, max_relative_error
from avatar_fields.fields.mlp import Mlp, MlpSpec, interpret_mlp, sdf_to_density, sphere_init
from avatar_fields.fields.model import (
    AvatarModel,
    FieldInputs,
    FieldOutputs,
    init_params,
    sdf_normal,
    sdf_normal_from_gradient,
)

__all__ = [
    "AvatarModel",
    "FieldInputs",
    "FieldOutputs",
    "Mlp",
    "MlpSpec",
    "backward",
    "finite_difference_gradient",
    "init_params",
    "interpret_mlp",
    "max_relative_error",
    "sdf_normal",
    "sdf_normal_from_gradient",
    "sdf_to_density",
    "sphere_init",
]
