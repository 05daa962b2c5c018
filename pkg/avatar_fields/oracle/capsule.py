"""
Procedural "capsule person": a ten-joint skeleton in T-pose with one closed capsule (or
sphere) per body part, per-part UV charts, collar-blended skin weights and a checkered
albedo texture.

Joints: 0 pelvis (root, owns the torso), 1 neck (head), 2/3 left shoulder/elbow,
4/5 right shoulder/elbow, 6/7 left hip/knee, 8/9 right hip/knee. +y is up, the figure
faces +z.
"""

import logging
from dataclasses import dataclass

import numpy as np

from avatar_fields.core import StructuralError
from avatar_fields.models import SceneConfig
from avatar_fields.rig.mesh import Skeleton, SkinnedMesh

log = logging.getLogger(__name__)

JOINT_NAMES = (
    "pelvis", "neck",
    "l_shoulder", "l_elbow", "r_shoulder", "r_elbow",
    "l_hip", "l_knee", "r_hip", "r_knee",
)
PARENTS = np.array([-1, 0, 0, 2, 0, 4, 0, 6, 0, 8])
CHART_COLUMNS = 4
CHART_MARGIN = 0.05


@dataclass(frozen=True)
class Part:
    """Capsule from `start` along unit `axis` for `length` with `radius`, owned by `joint`."""

    name: str
    joint: int
    start: np.ndarray
    axis: np.ndarray
    length: float
    radius: float
    blend_parent: bool
    child: int


def _layout(scene: SceneConfig) -> tuple[np.ndarray, list[Part]]:
    for key in ("upper_arm_length", "forearm_length", "thigh_length", "shin_length"):
        if getattr(scene, key) <= 0.0:
            raise StructuralError(f"scene.{key} must be positive to build a capsule person")
    tl, tr = scene.torso_length, scene.torso_radius
    ar, lr = scene.arm_radius, scene.leg_radius
    up, down = np.array([0.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.0])
    left, right = np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0])

    shoulder_y = tl - ar
    joints = np.zeros((10, 3))
    joints[1] = [0.0, tl, 0.0]
    joints[2] = [tr + ar, shoulder_y, 0.0]
    joints[3] = joints[2] + left * scene.upper_arm_length
    joints[4] = [-(tr + ar), shoulder_y, 0.0]
    joints[5] = joints[4] + right * scene.upper_arm_length
    hip_x = max(tr - lr, lr)
    joints[6] = [hip_x, -lr, 0.0]
    joints[7] = joints[6] + down * scene.thigh_length
    joints[8] = [-hip_x, -lr, 0.0]
    joints[9] = joints[8] + down * scene.thigh_length

    head_center = joints[1] + up * (tr + 0.8 * scene.head_radius)
    parts = [
        Part("torso", 0, joints[0], up, tl, tr, False, -1),
        Part("head", 1, head_center, up, 0.0, scene.head_radius, False, -1),
        Part("l_upper_arm", 2, joints[2], left, scene.upper_arm_length, ar, True, 3),
        Part("l_forearm", 3, joints[3], left, scene.forearm_length, ar, True, -1),
        Part("r_upper_arm", 4, joints[4], right, scene.upper_arm_length, ar, True, 5),
        Part("r_forearm", 5, joints[5], right, scene.forearm_length, ar, True, -1),
        Part("l_thigh", 6, joints[6], down, scene.thigh_length, lr, True, 7),
        Part("l_shin", 7, joints[7], down, scene.shin_length, lr, True, -1),
        Part("r_thigh", 8, joints[8], down, scene.thigh_length, lr, True, 9),
        Part("r_shin", 9, joints[9], down, scene.shin_length, lr, True, -1),
    ]
    return joints, parts


def _profile(length: float, radius: float, rings: int) -> tuple[np.ndarray, np.ndarray]:
    """Axial offsets and ring radii from the start pole to the end pole (poles included)."""
    h = max(rings // 2, 2)
    phi = np.linspace(0.0, np.pi / 2.0, h + 1)
    start_a = -radius * np.cos(phi)
    start_r = radius * np.sin(phi)
    if length > 0.0:
        m = max(rings // 2, 1)
        cyl_a = np.linspace(0.0, length, m + 1)[1:]
        cyl_r = np.full(m, radius)
    else:
        cyl_a = cyl_r = np.zeros(0)
    end_a = length + radius * np.cos(phi[::-1][1:])
    end_r = radius * np.sin(phi[::-1][1:])
    return np.concatenate([start_a, cyl_a, end_a]), np.concatenate([start_r, cyl_r, end_r])


def _basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def _capsule(part: Part, rings: int, segments: int, chart: tuple[float, float, float, float]):
    """
    Vertices, triangles, uvs and axial coordinates of one closed capsule. Each ring repeats
    its first vertex at u = 1 so the chart stays a rectangle; the copy has the exact same
    position, and vertex normals weld the pair.
    """
    a, r = _profile(part.length, part.radius, rings)
    inner = len(a) - 2
    e1, e2 = _basis(part.axis)
    psi = np.linspace(0.0, 2.0 * np.pi, segments + 1)
    u0, v0, du, dv = chart

    verts = [part.start + a[0] * part.axis]
    uvs = [(u0 + 0.5 * du, v0)]
    axial = [a[0]]
    for i in range(1, inner + 1):
        for j in range(segments + 1):
            radial = np.cos(psi[j % segments]) * e1 + np.sin(psi[j % segments]) * e2
            verts.append(part.start + a[i] * part.axis + r[i] * radial)
            uvs.append((u0 + du * j / segments, v0 + dv * i / (inner + 1)))
            axial.append(a[i])
    verts.append(part.start + a[-1] * part.axis)
    uvs.append((u0 + 0.5 * du, v0 + dv))
    axial.append(a[-1])

    def ring(i: int, j: int) -> int:
        return 1 + (i - 1) * (segments + 1) + j

    tris = []
    south, north = 0, len(verts) - 1
    for j in range(segments):
        tris.append((south, ring(1, j + 1), ring(1, j)))
        tris.append((north, ring(inner, j), ring(inner, j + 1)))
    for i in range(1, inner):
        for j in range(segments):
            p, q, s, t = ring(i, j), ring(i, j + 1), ring(i + 1, j + 1), ring(i + 1, j)
            tris.append((p, q, s))
            tris.append((p, s, t))
    return np.array(verts), np.array(tris, dtype=np.int64), np.array(uvs), np.array(axial)


def _weights(part: Part, axial: np.ndarray, n_joints: int, collar: float) -> np.ndarray:
    """One-hot to the owning joint, blended linearly toward parent/child over the collars."""
    w = np.zeros((len(axial), n_joints))
    own = np.ones(len(axial))
    if collar > 0.0 and part.blend_parent:
        to_parent = np.clip(0.5 - 0.5 * axial / collar, 0.0, 0.5)
        to_parent = np.where(axial < collar, to_parent, 0.0)
        w[:, PARENTS[part.joint]] += to_parent
        own -= to_parent
    if collar > 0.0 and part.child >= 0:
        to_child = np.clip(0.5 + 0.5 * (axial - part.length) / collar, 0.0, 0.5)
        to_child = np.where(axial > part.length - collar, to_child, 0.0)
        w[:, part.child] += to_child
        own -= to_child
    w[:, part.joint] += own
    return w


def chart_rect(index: int, n_parts: int) -> tuple[float, float, float, float]:
    """(u0, v0, du, dv) of part `index` in a CHART_COLUMNS-wide atlas grid."""
    rows = (n_parts + CHART_COLUMNS - 1) // CHART_COLUMNS
    cw, ch = 1.0 / CHART_COLUMNS, 1.0 / rows
    col, row = index % CHART_COLUMNS, index // CHART_COLUMNS
    return (col * cw + CHART_MARGIN * cw, row * ch + CHART_MARGIN * ch,
            cw * (1 - 2 * CHART_MARGIN), ch * (1 - 2 * CHART_MARGIN))


def make_capsule_person(scene: SceneConfig) -> SkinnedMesh:
    """Build and validate the rest-pose capsule person described by `scene`."""
    joints, parts = _layout(scene)
    rest = np.tile(np.eye(4), (len(joints), 1, 1))
    rest[:, :3, 3] = joints
    skeleton = Skeleton(parents=PARENTS.copy(), rest=rest, names=JOINT_NAMES)

    all_v, all_t, all_uv, all_w = [], [], [], []
    offset = 0
    for k, part in enumerate(parts):
        v, t, uv, axial = _capsule(part, scene.rings, scene.segments, chart_rect(k, len(parts)))
        all_v.append(v)
        all_t.append(t + offset)
        all_uv.append(uv)
        all_w.append(_weights(part, axial, len(joints), scene.collar))
        offset += len(v)
    mesh = SkinnedMesh(
        vertices=np.concatenate(all_v),
        triangles=np.concatenate(all_t),
        uvs=np.concatenate(all_uv),
        skin_weights=np.concatenate(all_w),
        skeleton=skeleton,
    )
    log.debug("Capsule person: %d vertices, %d triangles", mesh.n_vertices, mesh.n_triangles)
    return mesh.validate()


def part_of_uv(uv: np.ndarray, n_parts: int = len(JOINT_NAMES)) -> np.ndarray:
    """Part index of each UV inside a chart, -1 in the gaps between charts."""
    rows = (n_parts + CHART_COLUMNS - 1) // CHART_COLUMNS
    col = np.clip(np.floor(uv[:, 0] * CHART_COLUMNS).astype(np.int64), 0, CHART_COLUMNS - 1)
    row = np.clip(np.floor(uv[:, 1] * rows).astype(np.int64), 0, rows - 1)
    idx = row * CHART_COLUMNS + col
    lu = uv[:, 0] * CHART_COLUMNS - col
    lv = uv[:, 1] * rows - row
    inside = (lu >= CHART_MARGIN) & (lu <= 1 - CHART_MARGIN) & (lv >= CHART_MARGIN) & (lv <= 1 - CHART_MARGIN)
    return np.where(inside & (idx < n_parts), idx, -1)


def make_albedo_texture(scene: SceneConfig) -> np.ndarray:
    """(T, T, 3) texture in [0, 1]; row 0 is v = 1. Each chart is a two-tone checker."""
    size = scene.texture_size
    cols, rows = np.meshgrid(np.arange(size), np.arange(size))
    uv = np.stack([(cols + 0.5) / size, 1.0 - (rows + 0.5) / size], axis=-1).reshape(-1, 2)
    part = part_of_uv(uv)
    n_parts = len(JOINT_NAMES)
    grid_rows = (n_parts + CHART_COLUMNS - 1) // CHART_COLUMNS
    local = np.stack(
        [uv[:, 0] * CHART_COLUMNS % 1.0, uv[:, 1] * grid_rows % 1.0], axis=1
    )
    cell = np.floor(local * scene.checker_cells).astype(np.int64).sum(axis=1) % 2
    colors = np.array(scene.part_colors, dtype=np.float64)
    base = colors[np.maximum(part, 0) % len(colors)]
    tex = np.where(cell[:, None] == 0, base, 0.5 * base + 0.25)
    tex = np.where(part[:, None] >= 0, tex, 0.5)
    # Stored textures are float32; keep the in-memory copy on the same grid.
    return tex.reshape(size, size, 3).astype(np.float32).astype(np.float64)


def sample_texture(texture: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Nearest-texel lookup; uv outside [0, 1] clamps to the border."""
    h, w = texture.shape[:2]
    cols = np.clip(np.floor(uv[:, 0] * w).astype(np.int64), 0, w - 1)
    rows = np.clip(np.floor((1.0 - uv[:, 1]) * h).astype(np.int64), 0, h - 1)
    return texture[rows, cols]
