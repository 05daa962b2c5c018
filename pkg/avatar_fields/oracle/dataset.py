"""
Synthetic multi-view dataset of the capsule person.

Training poses are seen from every camera; validation cameras of training poses form the
`val` split, and held-out poses are rendered from the validation cameras only
(`novel_pose`). Each relighting probe re-renders the val and novel-pose frames into
relight/<k>/.
"""

import json
import logging
from pathlib import Path

import numpy as np
from tqdm import tqdm

from avatar_fields.config import dump_run_config
from avatar_fields.core import ConfigError, rng_for
from avatar_fields.image_io import write_mask_png, write_nfimg, write_png
from avatar_fields.models import CameraRecord, DatasetResult, Manifest, RunConfig, SceneConfig
from avatar_fields.oracle.capsule import make_albedo_texture, make_capsule_person
from avatar_fields.oracle.probes import make_probe
from avatar_fields.oracle.raytrace import GroundTruthFrame, PosedScene, reference_render
from avatar_fields.render.camera import Camera, save_cameras
from avatar_fields.rig.mesh import Pose, SkinnedMesh, save_mesh, save_poses

log = logging.getLogger(__name__)

# Joints that move in generated poses; the pelvis stays put so the body stays in frame.
POSED_JOINTS = range(1, 10)


def make_poses(scene: SceneConfig, mesh: SkinnedMesh, seed: int) -> list[Pose]:
    """Pose 0 is the rest pose; the others rotate every non-root joint by up to the max angle."""
    poses = [Pose.identity(mesh.n_joints)]
    max_angle = np.radians(scene.max_joint_angle_deg)
    for p in range(1, scene.n_poses):
        rng = rng_for(seed, 1000, p)
        rots = np.zeros((mesh.n_joints, 3))
        for j in POSED_JOINTS:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            rots[j] = axis * rng.uniform(0.3, 1.0) * max_angle
        poses.append(Pose(rots, np.zeros(3)))
    return poses


def make_cameras(scene: SceneConfig, target: np.ndarray) -> list[Camera]:
    """Ring of cameras around +y looking at `target`."""
    size = scene.image_size
    focal = scene.focal_scale * size
    el = np.radians(scene.camera_elevation_deg)
    cams = []
    for c in range(scene.n_cameras):
        az = 2.0 * np.pi * c / scene.n_cameras
        eye = target + scene.camera_radius * np.array(
            [np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)]
        )
        cams.append(Camera.look_at(eye, target, np.array([0.0, 1.0, 0.0]), focal, focal, size, size))
    return cams


def frame_plan(scene: SceneConfig) -> tuple[list[tuple[int, int]], Manifest]:
    """(pose, camera) per frame id, and the split manifest."""
    for p in scene.train_poses:
        if p >= scene.n_poses:
            raise ConfigError(f"scene.train_poses references pose {p} but n_poses is {scene.n_poses}")
    for c in scene.val_cameras:
        if c >= scene.n_cameras:
            raise ConfigError(f"scene.val_cameras references camera {c} but n_cameras is {scene.n_cameras}")
    plan: list[tuple[int, int]] = []
    manifest = Manifest()
    val = set(scene.val_cameras)
    train_poses = set(scene.train_poses)
    for p in range(scene.n_poses):
        for c in range(scene.n_cameras):
            if p in train_poses:
                (manifest.val if c in val else manifest.train).append(len(plan))
            elif c in val:
                manifest.novel_pose.append(len(plan))
            else:
                continue
            plan.append((p, c))
    return plan, manifest


def _write_frame(root: Path, frame: int, gt: GroundTruthFrame, buffers: bool) -> None:
    name = f"{frame:04d}"
    write_png(root / "frames" / f"{name}.png", gt.rgb)
    write_nfimg(root / "frames" / f"{name}.nfimg", gt.rgb)
    write_mask_png(root / "masks" / f"{name}.png", gt.mask)
    if buffers:
        write_nfimg(root / "gt_albedo" / f"{name}.nfimg", gt.albedo)
        write_nfimg(root / "gt_normal" / f"{name}.nfimg", gt.normal)
        write_nfimg(root / "gt_shadow" / f"{name}.nfimg", gt.shadow)


def gen_dataset(
    config: RunConfig, out_dir: str | Path, backend: str = "bvh", progress: bool = True
) -> DatasetResult:
    """Generate the full dataset under out_dir; byte-identical for a given config."""
    scene = config.scene
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    mesh = make_capsule_person(scene)
    texture = make_albedo_texture(scene)
    poses = make_poses(scene, mesh, config.seed)
    lo, hi = mesh.bbox()
    cameras = make_cameras(scene, (lo + hi) / 2.0)
    rc = config.render
    probe = make_probe(scene.probe, rc.probe_height, rc.probe_width)
    plan, manifest = frame_plan(scene)

    save_mesh(mesh, root / "mesh.json")
    save_poses(poses, root / "poses.json")
    probe.save(root / "probe.nfimg")
    write_nfimg(root / "texture.nfimg", texture)
    (root / "config.json").write_text(dump_run_config(config), encoding="utf-8")

    records = []
    relight_probes = [make_probe(r, rc.probe_height, rc.probe_width) for r in scene.relight_probes]
    relight_frames = set(manifest.val) | set(manifest.novel_pose)
    for k, rp in enumerate(relight_probes):
        rp.save(root / "relight" / str(k) / "probe.nfimg")

    scenes: dict[int, PosedScene] = {}
    for frame, (p, c) in enumerate(tqdm(plan, desc="gen-data", disable=not progress)):
        if p not in scenes:
            scenes = {p: PosedScene.build(mesh, poses[p], backend)}
        cam = cameras[c]
        gt = reference_render(scenes[p], cam, probe, texture)
        _write_frame(root, frame, gt, buffers=True)
        if frame in relight_frames:
            for k, rp in enumerate(relight_probes):
                _write_frame(root / "relight" / str(k), frame, reference_render(scenes[p], cam, rp, texture), False)
        records.append(
            CameraRecord(
                frame=frame,
                pose_index=p,
                camera_index=c,
                fx=cam.fx,
                fy=cam.fy,
                cx=cam.cx,
                cy=cam.cy,
                width=cam.width,
                height=cam.height,
                world_to_camera=cam.world_to_camera.reshape(-1).tolist(),
            )
        )
    save_cameras(records, root / "cameras.json")
    (root / "manifest.json").write_text(
        json.dumps(manifest.model_dump(), indent=1) + "\n", encoding="utf-8"
    )
    log.info("Wrote %d frames to %s", len(plan), root)
    return DatasetResult(
        out_dir=root,
        frame_count=len(plan),
        manifest=manifest,
        message=f"Generated {len(plan)} frames in {root}",
    )
