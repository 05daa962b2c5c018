"""
Forward kinematics and linear blend skinning.

B_j maps rest-pose (canonical) points to the posed (observation) space for joint j:
    B_root = T(t) * rest_root * R_root * rest_root^-1
    B_j    = B_parent * rest_j * R_j * rest_j^-1
which equals G_j * rest_j^-1 for the usual global joint transform G_j. A zero rotation
contributes an exact identity factor, so the identity pose yields B_j == I bit-for-bit.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from avatar_fields.core import StructuralError
from avatar_fields.rig.mesh import Pose, Skeleton, SkinnedMesh, rigid_inverse
from avatar_fields.rig.surface import MeshSurface, SurfaceSample


def axis_angle_to_matrix(rotvecs: np.ndarray) -> np.ndarray:
    """(N, 3) axis-angle -> (N, 3, 3) rotation matrices; zero vectors give exact identities."""
    rotvecs = np.asarray(rotvecs, dtype=np.float64).reshape(-1, 3)
    mats = Rotation.from_rotvec(rotvecs).as_matrix().reshape(-1, 3, 3)
    zero = ~np.any(rotvecs != 0.0, axis=1)
    mats[zero] = np.eye(3)
    return mats


def forward_kinematics(skeleton: Skeleton | SkinnedMesh, pose: Pose) -> np.ndarray:
    """Per-joint rigid transforms B_j, shape (N_j, 4, 4)."""
    if isinstance(skeleton, SkinnedMesh):
        skeleton = skeleton.skeleton
    n = skeleton.n_joints
    if pose.n_joints != n:
        raise StructuralError(f"Pose has {pose.n_joints} joints, skeleton has {n}")
    rots = axis_angle_to_matrix(pose.joint_rotations)
    rest_inv = skeleton.rest_inverse
    identity = np.eye(4)
    out = np.empty((n, 4, 4))
    for j in skeleton.order:
        if np.any(pose.joint_rotations[j] != 0.0):
            local = identity.copy()
            local[:3, :3] = rots[j]
            conj = skeleton.rest[j] @ local @ rest_inv[j]
        else:
            conj = identity
        p = int(skeleton.parents[j])
        if p == -1:
            if np.any(pose.root_translation != 0.0):
                translate = identity.copy()
                translate[:3, 3] = pose.root_translation
                out[j] = translate @ conj
            else:
                out[j] = conj
        else:
            out[j] = out[p] if conj is identity else out[p] @ conj
    return out


def global_joint_transforms(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """Posed global joint frames G_j = B_j * rest_j."""
    return forward_kinematics(skeleton, pose) @ skeleton.rest


def _apply(transforms: np.ndarray, points: np.ndarray) -> np.ndarray:
    """transforms (..., 4, 4) applied to points (..., 3)."""
    return (
        np.einsum("...ij,...j->...i", transforms[..., :3, :3], points) + transforms[..., :3, 3]
    )


def blend_transforms(weights: np.ndarray, transforms: np.ndarray) -> np.ndarray:
    """Sum_b W_b B_b per row of weights: (N, N_j) x (N_j, 4, 4) -> (N, 4, 4)."""
    return np.einsum("nb,bij->nij", weights, transforms)


def _blended_displacement(
    points: np.ndarray, weights: np.ndarray, transforms: np.ndarray
) -> np.ndarray:
    # Sum_b W_b (B_b x - x). Identity transforms add exactly zero.
    out = points.copy()
    for b in range(transforms.shape[0]):
        w = weights[:, b]
        active = w != 0.0
        if not np.any(active):
            continue
        moved = _apply(transforms[b], points[active])
        out[active] += w[active, None] * (moved - points[active])
    return out


def lbs_deform(mesh: SkinnedMesh, pose: Pose) -> np.ndarray:
    """Posed vertex positions Sum_b W_vb B_b x_rest(v)."""
    transforms = forward_kinematics(mesh.skeleton, pose)
    return _blended_displacement(mesh.vertices, mesh.skin_weights, transforms)


def inverse_lbs(x_o: np.ndarray, weights: np.ndarray, transforms: np.ndarray) -> np.ndarray:
    """Approximate un-posing x_c = Sum_b W_b B_b^-1 x_o for (N, 3) points and (N, N_j) weights."""
    x_o = np.asarray(x_o, dtype=np.float64)
    single = x_o.ndim == 1
    points = x_o.reshape(-1, 3)
    weights = np.asarray(weights, dtype=np.float64).reshape(points.shape[0], -1)
    rot = transforms[:, :3, :3]
    if not np.allclose(np.einsum("bji,bjk->bik", rot, rot), np.eye(3), atol=1e-6):
        raise AssertionError("inverse_lbs requires rigid transforms")
    out = _blended_displacement(points, weights, rigid_inverse(transforms))
    return out[0] if single else out


def query_skin_weights(
    x_o: np.ndarray, mesh: SkinnedMesh, posed: MeshSurface, sample: SurfaceSample | None = None
) -> np.ndarray:
    """
    Skin weights for free-space points: barycentric blend of the three vertex weight rows
    at the nearest point of the posed surface. Pass `sample` to reuse a query already made.
    """
    if mesh.n_triangles == 0:
        raise StructuralError("Skin-weight query on an empty mesh")
    if sample is None:
        sample = posed.nearest(x_o)
    weights = posed.interpolate(mesh.skin_weights, sample.tri_id, sample.bary)
    return weights / weights.sum(axis=1, keepdims=True)
