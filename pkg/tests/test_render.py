import math

import numpy as np
import pytest
import torch

from avatar_fields.core import DatasetError, StructuralError
from avatar_fields.encode.local import LocalCoordMode
from avatar_fields.oracle.dataset import make_cameras
from avatar_fields.render.camera import Camera, generate_rays, project, ray_box
from avatar_fields.render.pipeline import RenderContext, Subject, query_geometry, render_image
from avatar_fields.render.probe import LightProbe, irradiance, probe_geometry, shade
from avatar_fields.render.sampling import build_batch, sample_points
from avatar_fields.render.volume import composite, transform_normal, transmittance
from avatar_fields.rig.mesh import Pose
from tests.conftest import random_pose

F64 = torch.float64


def _camera() -> Camera:
    return Camera(10.0, 10.0, 2.5, 2.5, 5, 5, np.eye(4))


def test_principal_pixel_looks_down_plus_z():
    origins, dirs = generate_rays(_camera(), np.array([[2, 2]]))
    np.testing.assert_allclose(origins, [[0.0, 0.0, 0.0]])
    np.testing.assert_allclose(dirs, [[0.0, 0.0, 1.0]])


def test_symmetric_pixels_mirror():
    _, dirs = generate_rays(_camera(), np.array([[2, 0], [2, 4], [0, 2], [4, 2]]))
    np.testing.assert_allclose(dirs[0] * [-1, 1, 1], dirs[1], atol=1e-15)
    np.testing.assert_allclose(dirs[2] * [1, -1, 1], dirs[3], atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_ray_projection_round_trip():
    cam = Camera.look_at(np.array([1.0, 2.0, 3.0]), np.zeros(3), np.array([0.0, 1.0, 0.0]), 40.0, 45.0, 32, 24)
    rng = np.random.default_rng(0)
    pixels = np.stack([rng.integers(0, 24, 50), rng.integers(0, 32, 50)], axis=1)
    origins, dirs = generate_rays(cam, pixels)
    uv = project(cam, origins + rng.uniform(0.5, 5.0, (50, 1)) * dirs)
    np.testing.assert_allclose(uv, pixels[:, ::-1] + 0.5, atol=1e-4)
    np.testing.assert_allclose(cam.center, [1.0, 2.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(project(cam, np.zeros((1, 3))), [[16.0, 12.0]], atol=1e-12)


def test_camera_rejects_bad_rotation():
    w2c = np.eye(4)
    w2c[0, 0] = 2.0
    with pytest.raises(StructuralError):
        Camera(1.0, 1.0, 0.0, 0.0, 1, 1, w2c)


def test_ray_box():
    origins = np.array([[0.0, 0.0, -5.0], [0.0, 3.0, -5.0], [0.0, 0.0, 0.0]])
    dirs = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    near, far, hit = ray_box(origins, dirs, -np.ones(3), np.ones(3))
    assert hit.tolist() == [True, False, True]
    assert (near[0], far[0]) == (4.0, 6.0)
    assert (near[2], far[2]) == (0.0, 1.0)


def test_sample_points_uniform_bins():
    t, deltas = sample_points(np.array([2.0]), np.array([4.0]), 1)
    assert t.tolist() == [[3.0]] and deltas.tolist() == [[1.0]]
    t, deltas = sample_points(np.array([0.0]), np.array([1.0]), 4)
    np.testing.assert_allclose(t, [[0.125, 0.375, 0.625, 0.875]])
    np.testing.assert_allclose(deltas, [[0.25, 0.25, 0.25, 0.125]])


def test_stratified_samples_stay_in_their_bins():
    near, far = np.zeros(100), np.linspace(1.0, 3.0, 100)
    t, deltas = sample_points(near, far, 8, stratified=True, rng=np.random.default_rng(3))
    again, _ = sample_points(near, far, 8, stratified=True, rng=np.random.default_rng(3))
    assert np.array_equal(t, again)
    bins = np.floor(t / far[:, None] * 8)
    assert np.array_equal(bins, np.tile(np.arange(8.0), (100, 1)))
    assert np.all(np.diff(t, axis=1) > 0)
    np.testing.assert_allclose(deltas[:, -1], far - t[:, -1])
    with pytest.raises(ValueError):
        sample_points(near, far, 8, stratified=True)


def test_build_batch_drops_missing_rays():
    origins = np.zeros((3, 3))
    dirs = np.tile([0.0, 0.0, 1.0], (3, 1))
    batch = build_batch(origins, dirs, np.zeros(3), np.ones(3), np.array([True, False, True]), 4)
    assert batch.ray_index.tolist() == [0, 2]
    assert batch.positions().shape == (8, 3)


def test_probe_geometry():
    dirs, solid = probe_geometry(16, 32)
    assert solid.sum() == pytest.approx(4 * math.pi, abs=1e-12)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0)
    np.testing.assert_allclose(dirs[0, 0], -dirs[15, 16], atol=1e-12)
    assert dirs[0, 0, 1] > 0.99
    # the two rows next to the equator approximate the equatorial cell 2 pi^2 / (H W)
    assert solid[7, 0] == pytest.approx(2 * math.pi**2 / (16 * 32), rel=1e-2)


def test_shade_zero_shadow_and_single_texel():
    dirs, solid = probe_geometry(16, 32)
    texels = torch.zeros(16, 32, 1, dtype=F64)
    texels[5, 9, 0] = 1.0
    n = torch.as_tensor(dirs[5, 9][None], dtype=F64)
    ones = torch.ones(1, 3, dtype=F64)
    c = shade(ones, torch.ones(1, dtype=F64), n, texels)
    torch.testing.assert_close(c, torch.full((1, 3), solid[5, 9], dtype=F64))
    assert torch.equal(shade(ones, torch.zeros(1, dtype=F64), n, texels), torch.zeros(1, 3, dtype=F64))


def test_uniform_probe_gives_pi():
    n = torch.tensor([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.3, -0.4, 0.866]], dtype=F64)
    n = n / n.norm(dim=-1, keepdim=True)
    c = shade(torch.ones(3, 3, dtype=F64), torch.ones(3, dtype=F64), n, torch.ones(16, 32, 1, dtype=F64))
    torch.testing.assert_close(c, torch.full((3, 3), math.pi, dtype=F64), rtol=0.02, atol=0)


def test_shading_linear_and_rotation_symmetric():
    gen = torch.Generator().manual_seed(0)
    texels = torch.rand(16, 32, 3, generator=gen, dtype=F64)
    a = torch.rand(20, 3, generator=gen, dtype=F64)
    v = torch.rand(20, generator=gen, dtype=F64)
    n = torch.randn(20, 3, generator=gen, dtype=F64)
    n = n / n.norm(dim=-1, keepdim=True)
    base = shade(a, v, n, texels)
    assert torch.equal(shade(a, v, n, 2.0 * texels), 2.0 * base)
    torch.testing.assert_close(shade(a, v, n, 0.37 * texels), 0.37 * base)
    flipped = n * torch.tensor([-1.0, 1.0, -1.0], dtype=F64)
    torch.testing.assert_close(shade(a, v, flipped, torch.roll(texels, 16, dims=1)), base)


def test_irradiance_visibility_mask():
    texels = torch.ones(4, 8, 1, dtype=F64)
    n = torch.tensor([[0.0, 1.0, 0.0]], dtype=F64)
    blocked = irradiance(n, texels, torch.zeros(1, 32, dtype=F64))
    assert torch.equal(blocked, torch.zeros(1, 1, dtype=F64))


def test_light_probe_validation(tmp_path):
    with pytest.raises(DatasetError, match="non-negative"):
        LightProbe(-np.ones((2, 4, 1)))
    probe = LightProbe(np.random.default_rng(0).uniform(size=(4, 8, 3)).astype(np.float32))
    probe.save(tmp_path / "probe.nfimg")
    assert np.array_equal(LightProbe.load(tmp_path / "probe.nfimg").texels, probe.texels)


def test_composite_limits():
    deltas = torch.full((2, 4), 0.25, dtype=F64)
    colors = torch.rand(2, 4, 3, dtype=F64)
    rgb, alpha, _ = composite(torch.zeros(2, 4, dtype=F64), deltas, colors)
    assert torch.equal(rgb, torch.zeros(2, 3, dtype=F64)) and torch.equal(alpha, torch.zeros(2, dtype=F64))
    sigma = torch.zeros(2, 4, dtype=F64)
    sigma[:, 0] = 40.0 / 0.25
    rgb, alpha, _ = composite(sigma, deltas, colors)
    torch.testing.assert_close(rgb, colors[:, 0], rtol=0, atol=1e-15)
    torch.testing.assert_close(alpha, torch.ones(2, dtype=F64), rtol=0, atol=1e-15)


def _smooth_ray(n: int) -> tuple[torch.Tensor, torch.Tensor]:
    t, deltas = sample_points(np.zeros(1), np.ones(1), n)
    t_t = torch.as_tensor(t)
    sigma = 5.0 * torch.exp(-(((t_t - 0.5) / 0.1) ** 2))
    colors = torch.stack([0.6 + 0.1 * t_t, 0.4 - 0.1 * t_t, torch.full_like(t_t, 0.8)], dim=-1)
    rgb, alpha, _ = composite(sigma, torch.as_tensor(deltas), colors)
    return rgb, alpha


def test_composite_converges_to_fine_quadrature():
    coarse, coarse_alpha = _smooth_ray(64)
    fine, fine_alpha = _smooth_ray(4096)
    assert torch.all((coarse - fine).abs() / fine < 0.01)
    assert abs(float(coarse_alpha - fine_alpha)) < 0.01


def test_transmittance_and_alpha_bounds():
    gen = torch.Generator().manual_seed(1)
    sigma = torch.rand(50, 16, generator=gen, dtype=F64) * 20
    deltas = torch.rand(50, 16, generator=gen, dtype=F64) * 0.1
    trans = transmittance(sigma, deltas)
    assert torch.all(trans[:, 1:] <= trans[:, :-1])
    _, alpha, _ = composite(sigma, deltas, torch.rand(50, 16, 3, generator=gen, dtype=F64))
    assert torch.all((alpha >= 0) & (alpha <= 1))


def test_transform_normal():
    n = torch.tensor([[1.0, 0.0, 0.0]], dtype=F64)
    assert torch.equal(transform_normal(n, torch.eye(3, dtype=F64)[None]), n)
    rot_z = torch.tensor([[[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]], dtype=F64)
    torch.testing.assert_close(transform_normal(n, rot_z), torch.tensor([[0.0, 1.0, 0.0]], dtype=F64))
    blend = 0.3 * torch.eye(3, dtype=F64) + 0.7 * rot_z[0]
    got = transform_normal(n, blend[None])
    expected = blend @ n[0]
    torch.testing.assert_close(got[0], expected / expected.norm())


def test_identity_pose_keeps_samples_in_place(tiny_model, capsule):
    subject = Subject(tiny_model, capsule)
    frame = subject.posed(Pose.identity(capsule.n_joints))
    assert subject.posed(Pose.identity(capsule.n_joints)) is frame
    x_o = np.random.default_rng(0).normal(scale=0.3, size=(40, 3))
    geom = query_geometry(subject, frame, x_o, LocalCoordMode.TANGENT)
    assert np.array_equal(geom.x_c, x_o)
    np.testing.assert_allclose(geom.blend_rotation, np.tile(np.eye(3), (40, 1, 1)))


def test_posed_samples_unwarp_to_template(tiny_model, capsule):
    subject = Subject(tiny_model, capsule)
    pose = random_pose(capsule.n_joints, 0.4, seed=3)
    frame = subject.posed(pose)
    one_hot = np.flatnonzero(capsule.skin_weights.max(axis=1) == 1.0)[:20]
    geom = query_geometry(subject, frame, frame.surface.vertices[one_hot], LocalCoordMode.TANGENT)
    np.testing.assert_allclose(geom.x_c, capsule.vertices[one_hot], atol=1e-9)


def _view(tiny_config, capsule):
    lo, hi = capsule.bbox()
    return make_cameras(tiny_config.scene, (lo + hi) / 2.0)[0]


def test_render_image_buffers(tiny_model, capsule, tiny_config):
    ctx = RenderContext(Subject(tiny_model, capsule))
    bufs = render_image(ctx, Pose.identity(capsule.n_joints), _view(tiny_config, capsule))
    assert bufs.rgb.shape == (12, 12, 3) and bufs.depth.shape == (12, 12, 1)
    assert np.all(np.isfinite(bufs.rgb)) and np.all(bufs.rgb >= 0)
    assert np.all((bufs.alpha >= 0) & (bufs.alpha <= 1 + 1e-12))


def test_empty_scene_renders_black(tiny_model, capsule, tiny_config, monkeypatch):
    def far_away(x_c, s_o, p_o):
        return torch.full((x_c.shape[0],), 100.0, dtype=x_c.dtype), x_c.new_zeros((x_c.shape[0], 8))

    monkeypatch.setattr(tiny_model, "geometry_forward", far_away)
    bufs = render_image(RenderContext(Subject(tiny_model, capsule)), Pose.identity(capsule.n_joints), _view(tiny_config, capsule))
    np.testing.assert_allclose(bufs.rgb, 0.0, atol=1e-30)
    np.testing.assert_allclose(bufs.alpha, 0.0, atol=1e-30)


def test_doubling_probe_doubles_rgb(tiny_model, capsule, tiny_config, tmp_path):
    subject = Subject(tiny_model, capsule)
    pose = random_pose(capsule.n_joints, 0.3, seed=1)
    cam = _view(tiny_config, capsule)
    probe = torch.rand(4, 8, 3, dtype=F64, generator=torch.Generator().manual_seed(2))
    once = render_image(RenderContext(subject, probe=probe), pose, cam)
    twice = render_image(RenderContext(subject, probe=2.0 * probe), pose, cam)
    assert np.array_equal(twice.rgb, 2.0 * once.rgb)
    assert np.array_equal(twice.alpha, once.alpha)
    once.save(tmp_path, 3)
    assert (tmp_path / "frames" / "0003.png").exists()
    assert (tmp_path / "shadow" / "0003.nfimg").exists()


def test_zero_sdf_gradient_falls_back_and_is_reported(
    tiny_model, capsule, tiny_config, monkeypatch, caplog
):
    def flat(x_c, s_o, p_o):
        return torch.full((x_c.shape[0],), 0.01, dtype=x_c.dtype), x_c.new_zeros((x_c.shape[0], 8))

    monkeypatch.setattr(tiny_model, "geometry_forward", flat)
    subject = Subject(tiny_model, capsule)
    pose = Pose.identity(capsule.n_joints)
    frame = subject.posed(pose)
    x_o = capsule.vertices[:20] * 1.05
    geom = query_geometry(subject, frame, x_o, LocalCoordMode.TANGENT)
    out = tiny_model(geom.inputs(np.tile([0.0, 0.0, 1.0], (20, 1)), pose.flat(), F64))
    assert bool(out.degenerate.all())
    np.testing.assert_allclose(out.normal.detach().numpy(), geom.template_normal)

    with caplog.at_level("WARNING"):
        bufs = render_image(RenderContext(subject), pose, _view(tiny_config, capsule))
    assert bufs.samples > 0
    assert bufs.degenerate_fraction == 1.0
    assert "zero SDF gradient" in caplog.text


def test_sphere_init_reports_no_degenerate_normals(tiny_model, capsule, tiny_config):
    ctx = RenderContext(Subject(tiny_model, capsule))
    bufs = render_image(ctx, Pose.identity(capsule.n_joints), _view(tiny_config, capsule))
    assert bufs.samples > 0
    assert bufs.degenerate_fraction == 0.0
