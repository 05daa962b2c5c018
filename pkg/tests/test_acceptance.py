"""
End-to-end checks on the acceptance configuration: dataset, 5k-iteration fit, novel views,
novel pose and relighting. Run with `pytest --runslow`.
"""

from pathlib import Path

import numpy as np
import pytest

from avatar_fields.config import load_run_config
from avatar_fields.image_io import read_mask, read_nfimg
from avatar_fields.oracle.dataset import gen_dataset
from avatar_fields.render.camera import load_cameras
from avatar_fields.render.probe import LightProbe
from avatar_fields.rig.mesh import load_poses
from avatar_fields.tools import evaluate
from avatar_fields.tools.edit import run_relight
from avatar_fields.tools.render import load_context, render_frames
from avatar_fields.train.dataset import load_dataset, load_manifest
from avatar_fields.train.loop import compute_losses, train_loop

pytestmark = pytest.mark.slow

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "acceptance.json"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    config = load_run_config(CONFIG)
    root = tmp_path_factory.mktemp("acceptance")
    data, run = root / "data", root / "run"
    gen_dataset(config, data, progress=False)
    result = train_loop(load_dataset(data), config, run, progress=False)
    return config, data, run, result


@pytest.fixture(scope="module")
def rendered(trained):
    _, data, run, result = trained
    manifest = load_manifest(data / "manifest.json")
    wanted = set(manifest.train[::10]) | set(manifest.val) | set(manifest.novel_pose)
    records = [r for r in load_cameras(data / "cameras.json") if r.frame in wanted]
    out = run / "renders"
    render_frames(load_context(result.checkpoint), load_poses(data / "poses.json"), records, out, progress=False)
    return out


def _mean_psnr(render_dir: Path, gt_dir: Path, frames: list[int]) -> float:
    return float(np.mean([m.psnr for m in evaluate.evaluate_frames(render_dir, gt_dir, frames)]))


def test_training_and_held_out_views(trained, rendered):
    _, data, _, _ = trained
    manifest = load_manifest(data / "manifest.json")
    assert _mean_psnr(rendered, data, manifest.train[::10]) > 24.0
    assert _mean_psnr(rendered, data, manifest.val) > 20.0


def test_novel_pose(trained, rendered):
    _, data, _, _ = trained
    assert _mean_psnr(rendered, data, load_manifest(data / "manifest.json").novel_pose) > 18.0


def test_albedo_recovery(trained, rendered):
    _, data, _, _ = trained
    pred, gt = [], []
    for f in load_manifest(data / "manifest.json").val:
        mask = read_mask(data / "masks" / f"{f:04d}.png")
        pred.append(read_nfimg(rendered / "albedo" / f"{f:04d}.nfimg")[mask])
        gt.append(read_nfimg(data / "gt_albedo" / f"{f:04d}.nfimg")[mask])
    pred, gt = np.concatenate(pred).reshape(-1), np.concatenate(gt).reshape(-1)
    assert np.corrcoef(pred, gt)[0, 1] > 0.85


def test_sdf_is_distance_like_near_surface(trained):
    config, data, _, result = trained
    dataset = load_dataset(data)
    ctx = load_context(result.checkpoint)
    frame_id = dataset.split("val")[0]
    mask = dataset.frame(frame_id).mask
    rows, cols = np.nonzero(mask)
    pixels = np.stack([rows, cols], axis=1)[::4]
    _, out = compute_losses(ctx, dataset, frame_id, pixels, None, config.train, config.render.samples_per_ray)
    weights = out.weights.detach().numpy().reshape(-1)
    norms = np.linalg.norm(out.fields.grad.detach().numpy().reshape(-1, 3), axis=1)
    surface = weights > 0.05
    assert surface.any()
    assert np.abs(norms[surface] - 1.0).mean() < 0.1


def test_relighting(trained, tmp_path):
    _, data, _, result = trained
    relit = tmp_path / "relit"
    run_relight(
        result.checkpoint, data / "relight" / "0" / "probe.nfimg", data / "poses.json",
        data / "cameras.json", relit, frames=load_manifest(data / "manifest.json").val, progress=False,
    )
    metrics = evaluate.run(relit, data / "relight" / "0", manifest=data / "manifest.json", out_dir=tmp_path)
    assert metrics.mean_psnr > 18.0
    assert metrics.mean_ssim > 0.7
    assert LightProbe.load(data / "relight" / "0" / "probe.nfimg").shape[2] == 3


def test_runs_are_byte_identical(trained, tmp_path):
    config, data, _, result = trained
    again = train_loop(load_dataset(data), config, tmp_path / "again", progress=False)
    assert again.checkpoint.read_bytes() == result.checkpoint.read_bytes()
