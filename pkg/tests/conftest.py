"""Shared fixtures: a coarse capsule person and a tiny float64 configuration."""

import numpy as np
import pytest

from avatar_fields.config import config_from_dict
from avatar_fields.fields.model import AvatarModel
from avatar_fields.models import RunConfig
from avatar_fields.oracle.capsule import make_capsule_person
from avatar_fields.oracle.dataset import gen_dataset
from avatar_fields.rig.mesh import Pose, Skeleton, SkinnedMesh

TINY = {
    "seed": 7,
    "dtype": "float64",
    "triplane": {"res_x": 8, "res_y": 8, "res_z": 6, "features": 4, "components": 2},
    "encoding": {"freq_local": 2, "freq_canonical": 2, "freq_direction": 1, "code_dim": 4},
    "fields": {
        "geometry_depth": 3,
        "geometry_width": 16,
        "skip_layer": 1,
        "latent_width": 8,
        "shadow_depth": 1,
        "shadow_width": 8,
        "albedo_depth": 1,
        "albedo_width": 8,
    },
    "render": {"samples_per_ray": 8, "probe_height": 4, "probe_width": 8, "chunk_rays": 64},
    "train": {"iterations": 3, "rays_per_batch": 32, "checkpoint_every": 2},
    "scene": {
        "rings": 4,
        "segments": 6,
        "texture_size": 32,
        "n_cameras": 4,
        "val_cameras": [1],
        "image_size": 12,
        "n_poses": 3,
        "train_poses": [0, 1],
    },
}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end checks, skipped without --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny_config() -> RunConfig:
    return config_from_dict(TINY)


@pytest.fixture
def capsule(tiny_config) -> SkinnedMesh:
    return make_capsule_person(tiny_config.scene)


@pytest.fixture
def tiny_model(tiny_config, capsule) -> AvatarModel:
    rng = np.random.default_rng(3)
    poses = np.stack([np.zeros(3 * capsule.n_joints), rng.normal(scale=0.2, size=3 * capsule.n_joints)])
    return AvatarModel(tiny_config, capsule, poses)


def single_triangle_mesh() -> SkinnedMesh:
    """One triangle in the z = 0 plane, two joints, weights split by x."""
    rest = np.tile(np.eye(4), (2, 1, 1))
    rest[1, :3, 3] = [1.0, 0.0, 0.0]
    return SkinnedMesh(
        vertices=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        triangles=np.array([[0, 1, 2]]),
        uvs=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        skin_weights=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
        skeleton=Skeleton(parents=np.array([-1, 0]), rest=rest),
    ).validate()


def tetrahedron_mesh() -> SkinnedMesh:
    """Closed outward-wound tetrahedron with one joint."""
    verts = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return SkinnedMesh(
        vertices=verts,
        triangles=tris,
        uvs=np.array([[0.1, 0.1], [0.9, 0.1], [0.5, 0.9], [0.5, 0.5]]),
        skin_weights=np.ones((4, 1)),
        skeleton=Skeleton(parents=np.array([-1]), rest=np.eye(4)[None]),
    ).validate()


def random_pose(n_joints: int, max_angle: float, seed: int) -> Pose:
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(n_joints, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return Pose(axes * rng.uniform(0.0, max_angle, size=(n_joints, 1)), np.zeros(3))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Capsule-person dataset generated once per session from the tiny config."""
    root = tmp_path_factory.mktemp("tiny_data")
    gen_dataset(config_from_dict(TINY), root, progress=False)
    return root
