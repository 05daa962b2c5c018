"""Ground-truth side: intersectors, capsule person, probes, metrics and dataset generation."""

import json

import numpy as np
import pytest

from avatar_fields.core import ConfigError
from avatar_fields.models import ProbeRecipe, RunConfig
from avatar_fields.oracle.capsule import (
    JOINT_NAMES,
    _capsule,
    _layout,
    chart_rect,
    make_albedo_texture,
    make_capsule_person,
    part_of_uv,
    sample_texture,
)
from avatar_fields.oracle.dataset import frame_plan, gen_dataset, make_cameras, make_poses
from avatar_fields.oracle.intersect import (
    BruteForceIntersector,
    BvhIntersector,
    get_intersector,
    ray_triangle,
)
from avatar_fields.oracle.metrics import PSNR_CAP, mask_box, psnr, ssim
from avatar_fields.oracle.probes import key_direction, make_probe
from avatar_fields.oracle.raytrace import PosedScene, reference_render
from avatar_fields.render.camera import Camera, generate_rays, project
from avatar_fields.render.probe import LightProbe
from avatar_fields.rig.mesh import Pose


def _rays_at(center: np.ndarray, n: int, seed: int, radius: float = 2.0):
    """Rays from a sphere around `center` toward jittered points near it."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    origins = center + radius * d
    targets = center + rng.uniform(-0.3, 0.3, size=(n, 3))
    dirs = targets - origins
    return origins, dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def test_ray_triangle_hit_and_miss():
    a, b, c = np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    origins = np.array([[0.25, 0.25, 1.0], [0.9, 0.9, 1.0], [0.25, 0.25, -1.0]])
    dirs = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, -1.0], [0.0, 0.0, -1.0]])
    t, u, v = ray_triangle(origins, dirs, a, b, c)
    assert t[0] == pytest.approx(1.0)
    assert (u[0], v[0]) == pytest.approx((0.25, 0.25))
    assert np.isinf(t[1])
    assert np.isinf(t[2])


def test_bvh_matches_brute_force(capsule):
    lo, hi = capsule.bbox()
    origins, dirs = _rays_at((lo + hi) / 2.0, 400, seed=5, radius=1.5)
    brute = BruteForceIntersector(capsule.vertices, capsule.triangles).intersect(origins, dirs)
    bvh = BvhIntersector(capsule.vertices, capsule.triangles).intersect(origins, dirs)
    assert brute.hit.any()
    np.testing.assert_array_equal(bvh.tri_id, brute.tri_id)
    np.testing.assert_array_equal(bvh.t, brute.t)
    np.testing.assert_allclose(bvh.weights().sum(axis=1), 1.0)


def test_occlusion_agrees_and_respects_t_max(capsule):
    lo, hi = capsule.bbox()
    origins, dirs = _rays_at((lo + hi) / 2.0, 200, seed=6, radius=1.5)
    brute = BruteForceIntersector(capsule.vertices, capsule.triangles)
    bvh = BvhIntersector(capsule.vertices, capsule.triangles, leaf_size=2)
    np.testing.assert_array_equal(bvh.occluded(origins, dirs), brute.occluded(origins, dirs))
    np.testing.assert_array_equal(bvh.occluded(origins, dirs), brute.intersect(origins, dirs).hit)
    assert not bvh.occluded(origins, dirs, t_max=1e-3).any()


def test_unknown_intersector():
    assert get_intersector("bvh") is BvhIntersector
    with pytest.raises(KeyError, match="Unknown intersector"):
        get_intersector("embree")


def test_capsule_person_structure(capsule, tiny_config):
    assert capsule.n_joints == len(JOINT_NAMES)
    np.testing.assert_allclose(capsule.skin_weights.sum(axis=1), 1.0, atol=1e-12)
    assert capsule.skin_weights.min() >= 0.0
    assert capsule.uvs.min() >= 0.0 and capsule.uvs.max() <= 1.0
    again = make_capsule_person(tiny_config.scene)
    np.testing.assert_array_equal(again.vertices, capsule.vertices)


def test_capsule_vertices_lie_on_capsule(tiny_config):
    scene = tiny_config.scene
    _, parts = _layout(scene)
    for k, part in enumerate(parts):
        verts, tris, uvs, _ = _capsule(part, scene.rings, scene.segments, chart_rect(k, len(parts)))
        rel = verts - part.start
        s = np.clip(rel @ part.axis, 0.0, part.length)
        dist = np.linalg.norm(rel - s[:, None] * part.axis, axis=1)
        np.testing.assert_allclose(dist, part.radius, atol=1e-12)
        assert tris.max() < len(verts)
        u0, v0, du, dv = chart_rect(k, len(parts))
        assert uvs[:, 0].min() >= u0 - 1e-12 and uvs[:, 0].max() <= u0 + du + 1e-12
        assert uvs[:, 1].min() >= v0 - 1e-12 and uvs[:, 1].max() <= v0 + dv + 1e-12
        centre = np.array([[u0 + 0.5 * du, v0 + 0.5 * dv]])
        assert part_of_uv(centre)[0] == k


def test_texture_and_lookup(tiny_config):
    tex = make_albedo_texture(tiny_config.scene)
    size = tiny_config.scene.texture_size
    assert tex.shape == (size, size, 3)
    assert tex.min() >= 0.0 and tex.max() <= 1.0
    np.testing.assert_array_equal(sample_texture(tex, np.array([[0.0, 1.0]])), tex[:1, 0])
    np.testing.assert_array_equal(sample_texture(tex, np.array([[2.0, -1.0]])), tex[-1:, -1])
    assert part_of_uv(np.array([[0.0, 0.0]]))[0] == -1


def test_make_poses_and_cameras(capsule, tiny_config):
    scene = tiny_config.scene
    poses = make_poses(scene, capsule, seed=3)
    assert len(poses) == scene.n_poses
    np.testing.assert_array_equal(poses[0].joint_rotations, 0.0)
    limit = np.radians(scene.max_joint_angle_deg) + 1e-12
    for pose in poses[1:]:
        assert np.linalg.norm(pose.joint_rotations, axis=1).max() <= limit
        np.testing.assert_array_equal(pose.joint_rotations[0], 0.0)
    target = np.array([0.0, 0.2, 0.0])
    for cam in make_cameras(scene, target):
        assert isinstance(cam, Camera)
        uv = project(cam, target[None])[0]
        assert uv == pytest.approx((scene.image_size / 2.0, scene.image_size / 2.0), abs=1e-9)


def test_frame_plan_splits(tiny_config):
    plan, manifest = frame_plan(tiny_config.scene)
    assert plan == [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (1, 3), (2, 1)]
    assert manifest.train == [0, 2, 3, 4, 6, 7]
    assert manifest.val == [1, 5]
    assert manifest.novel_pose == [8]


def test_frame_plan_rejects_bad_references():
    scene = RunConfig().scene.model_copy(update={"n_poses": 2, "train_poses": [0, 2]})
    with pytest.raises(ConfigError, match="train_poses"):
        frame_plan(scene)
    scene = RunConfig().scene.model_copy(update={"n_cameras": 4, "val_cameras": [4]})
    with pytest.raises(ConfigError, match="val_cameras"):
        frame_plan(scene)


@pytest.mark.parametrize("kind", ["uniform", "smooth_random", "key_light"])
def test_probe_recipes_non_negative(kind):
    probe = make_probe(ProbeRecipe(kind=kind, channels=3, intensity=2.0, seed=4), 8, 16)
    assert probe.shape == (8, 16, 3)
    assert probe.texels.min() >= 0.0
    np.testing.assert_array_equal(probe.texels, probe.texels.astype(np.float32))


def test_probe_recipe_values():
    uniform = make_probe(ProbeRecipe(kind="uniform", intensity=1.5), 4, 8)
    np.testing.assert_allclose(uniform.texels, 1.5)
    smooth = make_probe(ProbeRecipe(kind="smooth_random", intensity=2.0, seed=9), 8, 16)
    assert smooth.texels.mean() == pytest.approx(2.0, rel=1e-6)
    key = make_probe(ProbeRecipe(kind="key_light", azimuth_deg=0.0, elevation_deg=0.0), 16, 32)
    dirs, _ = key.geometry()
    brightest = dirs.reshape(-1, 3)[np.argmax(key.texels.reshape(-1))]
    assert brightest @ key_direction(0.0, 0.0) > 0.9


def test_metrics():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(16, 16, 3))
    assert psnr(img, img) == PSNR_CAP
    assert psnr(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.1)) == pytest.approx(20.0)
    assert ssim(img, img) == pytest.approx(1.0)
    noisy = np.clip(img + rng.normal(scale=0.2, size=img.shape), 0.0, 1.0)
    assert ssim(noisy, img) < 0.95
    assert ssim(img, img, box=(2, 5, 3, 7)) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="shapes differ"):
        psnr(img, img[:8])


def _windowed_ssim(x: np.ndarray, y: np.ndarray, size: int = 11, sigma: float = 1.5) -> float:
    g = np.exp(-((np.arange(size) - (size - 1) / 2.0) ** 2) / (2.0 * sigma**2))
    win = np.outer(g, g) / np.outer(g, g).sum()

    def filt(img: np.ndarray) -> np.ndarray:
        views = np.lib.stride_tricks.sliding_window_view(img, (size, size))
        return np.einsum("ijkl,kl->ij", views, win)

    c1, c2 = 0.01**2, 0.03**2
    out = []
    for c in range(x.shape[2]):
        a, b = x[..., c], y[..., c]
        mu_a, mu_b = filt(a), filt(b)
        saa = filt(a * a) - mu_a**2
        sbb = filt(b * b) - mu_b**2
        sab = filt(a * b) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
        out.append(np.mean(num / den))
    return float(np.mean(out))


def test_ssim_matches_gaussian_window_average():
    rng = np.random.default_rng(4)
    img = rng.uniform(size=(40, 40, 3))
    noisy = np.clip(img + rng.normal(scale=0.1, size=img.shape), 0.0, 1.0)
    assert ssim(noisy, img) == pytest.approx(_windowed_ssim(noisy, img), abs=1e-10)
    assert -1.0 <= ssim(noisy, img, box=(10, 12, 10, 12)) <= 1.0


def test_metrics_crop_ignores_outside():
    a = np.zeros((8, 8, 3))
    b = a.copy()
    b[0, 0] = 1.0
    box = (2, 8, 2, 8)
    assert psnr(a, b, box) == PSNR_CAP
    assert mask_box(np.zeros((4, 4), dtype=bool)) is None
    mask = np.zeros((6, 6), dtype=bool)
    mask[1:3, 2:5] = True
    assert mask_box(mask) == (1, 3, 2, 5)


def test_reference_render_buffers(capsule):
    lo, hi = capsule.bbox()
    target = (lo + hi) / 2.0
    cam = Camera.look_at(target + np.array([0.0, 0.0, 3.0]), target, np.array([0.0, 1.0, 0.0]), 14.0, 14.0, 10, 10)
    scene = PosedScene.build(capsule, Pose.identity(capsule.n_joints))
    probe = LightProbe(np.ones((4, 8, 1)))
    texture = np.full((8, 8, 3), 0.5)
    shadowed = reference_render(scene, cam, probe, texture)
    bare = reference_render(scene, cam, probe, texture, shadows=False)
    assert shadowed.mask.any() and not shadowed.mask.all()
    np.testing.assert_array_equal(shadowed.mask, bare.mask)
    np.testing.assert_array_equal(bare.shadow[bare.mask], 1.0)
    assert shadowed.shadow.min() >= 0.0 and shadowed.shadow.max() <= 1.0 + 1e-12
    assert np.all(shadowed.rgb <= bare.rgb + 1e-12)
    np.testing.assert_array_equal(shadowed.rgb[~shadowed.mask], 0.0)
    np.testing.assert_allclose(np.linalg.norm(bare.normal[bare.mask], axis=1), 1.0)
    origins, dirs = generate_rays(cam)
    assert (bare.depth[bare.mask] > 0.0).all()
    assert origins.shape == (100, 3) and dirs.shape == (100, 3)


def test_gen_dataset_layout(tiny_dataset, tiny_config):
    root = tiny_dataset
    for name in ("mesh.json", "poses.json", "cameras.json", "probe.nfimg", "texture.nfimg", "config.json"):
        assert (root / name).exists(), name
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest == {"train": [0, 2, 3, 4, 6, 7], "val": [1, 5], "novel_pose": [8]}
    for f in range(9):
        assert (root / "frames" / f"{f:04d}.png").exists()
        assert (root / "masks" / f"{f:04d}.png").exists()
        assert (root / "gt_shadow" / f"{f:04d}.nfimg").exists()
    cameras = json.loads((root / "cameras.json").read_text())
    assert [c["pose_index"] for c in cameras] == [0, 0, 0, 0, 1, 1, 1, 1, 2]


def test_gen_dataset_deterministic(tiny_dataset, tiny_config, tmp_path):
    gen_dataset(tiny_config, tmp_path, backend="bvh", progress=False)
    first = sorted(p.relative_to(tiny_dataset) for p in tiny_dataset.rglob("*") if p.is_file())
    second = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    assert first == second
    for rel in first:
        assert (tiny_dataset / rel).read_bytes() == (tmp_path / rel).read_bytes(), rel
