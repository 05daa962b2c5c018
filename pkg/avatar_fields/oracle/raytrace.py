"""
Reference surface renderer with true visibility.

Per camera ray: closest hit on the posed mesh, smooth shading normal, albedo from the
texture, and for every probe texel a shadow ray toward it. The pixel color is
a * Sum_i V_i I_i max(n . w_i, 0) dw_i; the shadow buffer holds the ratio of the
visibility-weighted to the unweighted irradiance (channel mean), set to 1 where the
unweighted irradiance is below 1e-6.
"""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from avatar_fields.oracle.capsule import sample_texture
from avatar_fields.oracle.intersect import Intersector, get_intersector
from avatar_fields.oracle.intersect.base import SHADOW_EPS
from avatar_fields.render.camera import Camera, generate_rays
from avatar_fields.render.probe import LightProbe, irradiance
from avatar_fields.rig.mesh import Pose, SkinnedMesh
from avatar_fields.rig.skinning import lbs_deform
from avatar_fields.rig.surface import vertex_normals

log = logging.getLogger(__name__)

SHADOW_GUARD = 1e-6


@dataclass
class GroundTruthFrame:
    """Linear H x W buffers of one reference view."""

    rgb: np.ndarray
    mask: np.ndarray
    albedo: np.ndarray
    normal: np.ndarray
    shadow: np.ndarray
    depth: np.ndarray


@dataclass
class PosedScene:
    """A posed mesh ready for ray queries."""

    vertices: np.ndarray
    triangles: np.ndarray
    uvs: np.ndarray
    normals: np.ndarray
    intersector: Intersector

    @classmethod
    def build(cls, mesh: SkinnedMesh, pose: Pose, backend: str = "bvh") -> "PosedScene":
        verts = lbs_deform(mesh, pose)
        return cls(
            verts,
            mesh.triangles,
            mesh.uvs,
            vertex_normals(verts, mesh.triangles),
            get_intersector(backend)(verts, mesh.triangles),
        )


def visibility(scene: PosedScene, points: np.ndarray, normals: np.ndarray, probe: LightProbe) -> np.ndarray:
    """(N, H*W) 0/1 visibility toward every texel that could light the point."""
    h, w, _ = probe.shape
    dirs, _ = probe.geometry()
    dirs = dirs.reshape(-1, 3)
    lit = probe.texels.reshape(h * w, -1).max(axis=1) > 0.0
    facing = (normals @ dirs.T > 0.0) & lit[None, :]
    vis = np.zeros(facing.shape)
    rows, cols = np.nonzero(facing)
    if rows.size:
        origins = points[rows] + SHADOW_EPS * normals[rows]
        blocked = scene.intersector.occluded(origins, dirs[cols])
        vis[rows, cols] = np.where(blocked, 0.0, 1.0)
    return vis


def reference_render(
    scene: PosedScene,
    camera: Camera,
    probe: LightProbe,
    texture: np.ndarray,
    shadows: bool = True,
) -> GroundTruthFrame:
    """Render one view of a posed scene. `shadows=False` sets every V_i to 1."""
    h, w = camera.height, camera.width
    origins, dirs = generate_rays(camera)
    hits = scene.intersector.intersect(origins, dirs)
    idx = np.flatnonzero(hits.hit)
    n_pix = h * w
    rgb = np.zeros((n_pix, 3))
    albedo = np.zeros((n_pix, 3))
    normal = np.zeros((n_pix, 3))
    shadow = np.zeros((n_pix, 1))
    depth = np.zeros((n_pix, 1))
    if idx.size:
        tri = scene.triangles[hits.tri_id[idx]]
        bw = hits.weights()[idx]
        points = origins[idx] + hits.t[idx, None] * dirs[idx]
        n = np.einsum("nk,nkd->nd", bw, scene.normals[tri])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        uv = np.einsum("nk,nkd->nd", bw, scene.uvs[tri])
        a = sample_texture(texture, uv)

        texels = probe.tensor(torch.float64)
        n_t = torch.as_tensor(n, dtype=torch.float64)
        bare = irradiance(n_t, texels).numpy()
        if shadows:
            vis = torch.as_tensor(visibility(scene, points, n, probe))
            lit = irradiance(n_t, texels, vis).numpy()
        else:
            lit = bare
        lit3 = np.broadcast_to(lit, (len(idx), 3)) if lit.shape[1] == 1 else lit
        rgb[idx] = a * lit3
        denom = bare.mean(axis=1)
        ratio = np.where(denom < SHADOW_GUARD, 1.0, lit.mean(axis=1) / np.maximum(denom, SHADOW_GUARD))
        shadow[idx, 0] = ratio
        albedo[idx] = a
        normal[idx] = n
        depth[idx, 0] = hits.t[idx]
    mask = np.zeros(n_pix, dtype=bool)
    mask[idx] = True
    return GroundTruthFrame(
        rgb=rgb.reshape(h, w, 3),
        mask=mask.reshape(h, w),
        albedo=albedo.reshape(h, w, 3),
        normal=normal.reshape(h, w, 3),
        shadow=shadow.reshape(h, w, 1),
        depth=depth.reshape(h, w, 1),
    )
