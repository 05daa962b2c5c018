import numpy as np
import pytest
import torch
from pydantic import ValidationError

from avatar_fields.core import StructuralError
from avatar_fields.customize import (
    apply_edit,
    load_uv_mask,
    relight,
    reshape,
    retexture,
    shadow_override,
    shadow_transfer,
)
from avatar_fields.fields.model import AvatarModel
from avatar_fields.image_io import write_mask_png
from avatar_fields.models import EditSpec
from avatar_fields.oracle.dataset import make_cameras
from avatar_fields.render.pipeline import RenderContext, Subject, Substitution, map_reshape_points, render_image
from avatar_fields.render.probe import LightProbe
from avatar_fields.rig.mesh import SkinnedMesh
from avatar_fields.rig.surface import MeshSurface
from tests.conftest import random_pose


@pytest.fixture
def scene(tiny_model, capsule, tiny_config):
    lo, hi = capsule.bbox()
    camera = make_cameras(tiny_config.scene, (lo + hi) / 2.0)[1]
    return RenderContext(Subject(tiny_model, capsule)), random_pose(capsule.n_joints, 0.3, seed=5), camera


def _rgb(ctx, pose, camera) -> np.ndarray:
    return render_image(ctx, pose, camera).rgb


def test_relight_with_learned_probe_is_identity(scene):
    ctx, pose, cam = scene
    base = _rgb(ctx, pose, cam)
    assert np.array_equal(_rgb(relight(ctx, ctx.model.probe), pose, cam), base)
    probe = LightProbe(ctx.model.probe.detach().numpy())
    assert np.array_equal(_rgb(relight(ctx, probe.scaled(2.0)), pose, cam), 2.0 * base)


def test_red_probe_leaves_green_and_blue_dark(scene):
    ctx, pose, cam = scene
    texels = np.zeros((4, 8, 3))
    texels[1, 2] = [5.0, 0.0, 0.0]
    rgb = _rgb(relight(ctx, LightProbe(texels)), pose, cam)
    assert np.all(rgb[..., 1:] == 0.0)


def test_relight_rejects_bad_probe(scene):
    ctx, _, _ = scene
    with pytest.raises(StructuralError):
        relight(ctx, torch.ones(4, 8, 2))


def test_shadow_override_modes(scene):
    ctx, pose, cam = scene
    off = _rgb(shadow_override(ctx, "off"), pose, cam)
    assert np.array_equal(_rgb(shadow_override(ctx, "constant", 1.0), pose, cam), off)
    assert np.all(_rgb(shadow_override(ctx, "constant", 0.0), pose, cam) == 0.0)
    with pytest.raises(ValueError, match="Unknown shadow mode"):
        shadow_override(ctx, "soft")
    with pytest.raises(ValueError):
        shadow_override(ctx, "constant", 1.5)


def test_shadow_off_divides_out_the_shadow_for_opaque_rays(scene):
    ctx, pose, cam = scene
    raw = render_image(ctx, pose, cam)
    off = render_image(shadow_override(ctx, "off"), pose, cam)
    np.testing.assert_allclose(off.shadow, raw.alpha, atol=1e-12)


def test_substitutions_with_no_effect_are_identity(scene):
    ctx, pose, cam = scene
    base = _rgb(ctx, pose, cam)
    same = ctx.subject
    empty = np.zeros((8, 8), dtype=bool)
    full = np.ones((8, 8), dtype=bool)
    assert np.array_equal(_rgb(shadow_transfer(ctx, same, empty), pose, cam), base)
    assert np.array_equal(_rgb(shadow_transfer(ctx, same, full), pose, cam), base)
    assert np.array_equal(_rgb(retexture(ctx, same), pose, cam), base)
    assert np.array_equal(_rgb(retexture(ctx, same, empty, swap_shadow=True), pose, cam), base)


def test_retexture_from_another_subject_changes_only_color(scene, tiny_config, capsule):
    ctx, pose, cam = scene
    other_config = tiny_config.model_copy(update={"seed": 99})
    other = Subject(AvatarModel(other_config, capsule, ctx.model.poses.poses), capsule)
    base = render_image(ctx, pose, cam)
    swapped = render_image(retexture(ctx, other), pose, cam)
    assert np.array_equal(swapped.alpha, base.alpha)
    assert np.array_equal(swapped.depth, base.depth)
    assert not np.array_equal(swapped.albedo, base.albedo)


def test_uv_mask_selection():
    mask = np.zeros((4, 4), dtype=bool)
    mask[:, :2] = True
    mask[0, 3] = True
    sub = Substitution(source=None, uv_mask=mask)  # type: ignore[arg-type]
    uv = np.array([[0.1, 0.5], [0.9, 0.5], [0.9, 0.95], [0.9, 0.05]])
    assert sub.selects(uv).tolist() == [True, False, True, False]
    assert Substitution(source=None, uv_mask=np.zeros((2, 2), dtype=bool)).is_empty()  # type: ignore[arg-type]


def test_reshape_identity_and_topology_check(scene, capsule):
    ctx, pose, cam = scene
    assert reshape(ctx, capsule).reshape_mesh is None
    assert np.array_equal(_rgb(reshape(ctx, capsule), pose, cam), _rgb(ctx, pose, cam))
    other = SkinnedMesh(
        capsule.vertices, capsule.triangles[::-1].copy(), capsule.uvs, capsule.skin_weights, capsule.skeleton
    )
    with pytest.raises(StructuralError, match="share triangles"):
        reshape(ctx, other)


def _on_surface_points(surface: MeshSurface, n: int, seed: int):
    rng = np.random.default_rng(seed)
    tri = rng.integers(0, len(surface.triangles), n)
    bary = rng.dirichlet([1.0, 1.0, 1.0], n)[:, :2]
    return tri, bary, surface.point_at(tri, bary)


@pytest.mark.parametrize("edit", ["scale", "inflate"])
def test_reshape_maps_surface_points_back(capsule, edit):
    original = MeshSurface(capsule.vertices, capsule.triangles, capsule.uvs)
    if edit == "scale":
        center = capsule.vertices.mean(axis=0)
        verts = center + 1.2 * (capsule.vertices - center)
    else:
        verts = capsule.vertices + 0.02 * original.normals
    edited = MeshSurface(verts, capsule.triangles, capsule.uvs)
    tri, bary, points = _on_surface_points(edited, 200, seed=1)
    x_c, edited_sample, _ = map_reshape_points(original, edited, points)
    assert np.all(edited_sample.distance < 1e-9)
    expected = original.point_at(edited_sample.tri_id, edited_sample.bary)
    assert np.abs(x_c - expected).max() < 1e-5 * capsule.diameter()



def test_apply_edit_from_spec(scene, tmp_path):
    ctx, pose, cam = scene
    LightProbe(np.ones((4, 8, 1))).save(tmp_path / "probe.nfimg")
    lit = apply_edit(ctx, EditSpec(kind="relight", probe="probe.nfimg"), tmp_path)
    assert torch.equal(lit.texels(), torch.ones(4, 8, 1, dtype=torch.float64))
    flat = apply_edit(ctx, EditSpec(kind="shadow_override", shadow_mode="constant", shadow_value=0.5))
    assert (flat.shadow_mode, flat.shadow_value) == ("constant", 0.5)
    write_mask_png(tmp_path / "torso.png", np.ones((8, 8), dtype=bool))
    assert load_uv_mask(tmp_path / "torso.png").all()
    with pytest.raises(ValidationError, match="requires 'probe'"):
        EditSpec(kind="relight")