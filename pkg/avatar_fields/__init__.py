"""avatar_fields: skinned-mesh-anchored neural fields for relightable, editable human avatars."""

from avatar_fields.api import (
    edit_avatar,
    evaluate_renders,
    generate_dataset,
    relight_avatar,
    render_avatar,
    train_avatar,
)
from avatar_fields.core import AvatarFieldsError
from avatar_fields.models import RunConfig

__all__ = [
    "AvatarFieldsError",
    "RunConfig",
    "edit_avatar",
    "evaluate_renders",
    "generate_dataset",
    "relight_avatar",
    "render_avatar",
    "train_avatar",
]
__version__ = "0.1.0"
