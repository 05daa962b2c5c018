"""
Skinned template mesh and pose records, plus their JSON file formats.

Mesh file: one JSON object with `vertices` (N_v x 3), `triangles` (N_f x 3), `uvs` (N_v x 2),
`skin_weights` (N_v x N_j), `skeleton` (array of {parent, rest: 16 numbers row-major}) and an
optional `vertex_codes` (N_v x C). `rest` is the joint's global rest-pose transform.
Poses file: JSON array of {joint_rotations: N_j x 3 axis-angle, root_translation: 3}.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from avatar_fields.core import StructuralError

log = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-6
# Triangles whose doubled area is below this fraction of (mesh scale)^2 are degenerate
DEGENERATE_AREA_FRACTION = 1e-14


def topological_order(parents: np.ndarray) -> list[int]:
    """Joint order with parents before children. Raises StructuralError on bad indices or cycles."""
    n = len(parents)
    state = [0] * n  # 0 = unvisited, 1 = on stack, 2 = done
    order: list[int] = []
    for start in range(n):
        chain = []
        j = start
        while j != -1 and state[j] == 0:
            p = int(parents[j])
            if p < -1 or p >= n:
                raise StructuralError(f"Joint {j} has parent index {p} out of range")
            state[j] = 1
            chain.append(j)
            j = p
        if j != -1 and state[j] == 1:
            raise StructuralError(f"Skeleton has a cycle through joint {j}")
        for k in reversed(chain):
            state[k] = 2
            order.append(k)
    return order


@dataclass(frozen=True)
class Skeleton:
    """N_j joints: parent index (-1 for roots) and global rest transform per joint."""

    parents: np.ndarray
    rest: np.ndarray
    names: tuple[str, ...] = ()
    order: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        parents = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        rest = np.asarray(self.rest, dtype=np.float64).reshape(-1, 4, 4)
        if len(parents) == 0:
            raise StructuralError("Skeleton has no joints")
        if rest.shape[0] != parents.shape[0]:
            raise StructuralError(
                f"Skeleton has {parents.shape[0]} parents but {rest.shape[0]} rest transforms"
            )
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest", rest)
        object.__setattr__(self, "order", tuple(topological_order(parents)))

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def rest_inverse(self) -> np.ndarray:
        return rigid_inverse(self.rest)


def rigid_inverse(transforms: np.ndarray) -> np.ndarray:
    """Inverse of (..., 4, 4) rigid transforms: [R t] -> [R^T, -R^T t]."""
    rot = transforms[..., :3, :3]
    trans = transforms[..., :3, 3]
    out = np.zeros_like(transforms)
    rot_t = np.swapaxes(rot, -1, -2)
    out[..., :3, :3] = rot_t
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", rot_t, trans)
    out[..., 3, 3] = 1.0
    return out


@dataclass(frozen=True)
class Pose:
    """Axis-angle rotation per joint (radians) and a root translation."""

    joint_rotations: np.ndarray
    root_translation: np.ndarray

    def __post_init__(self) -> None:
        rots = np.asarray(self.joint_rotations, dtype=np.float64).reshape(-1, 3)
        trans = np.asarray(self.root_translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rots)) and np.all(np.isfinite(trans))):
            raise StructuralError("Pose has non-finite entries")
        if np.any(np.linalg.norm(rots, axis=1) >= 2 * math.pi):
            raise StructuralError("Pose axis-angle magnitude must be below 2*pi")
        object.__setattr__(self, "joint_rotations", rots)
        object.__setattr__(self, "root_translation", trans)

    @classmethod
    def identity(cls, n_joints: int) -> "Pose":
        return cls(np.zeros((n_joints, 3)), np.zeros(3))

    @property
    def n_joints(self) -> int:
        return self.joint_rotations.shape[0]

    def flat(self) -> np.ndarray:
        """Flattened joint rotations (the pose vector used for similarity and feature appending)."""
        return self.joint_rotations.reshape(-1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "joint_rotations": self.joint_rotations.tolist(),
            "root_translation": self.root_translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Pose":
        try:
            return cls(data["joint_rotations"], data["root_translation"])
        except KeyError as e:
            raise StructuralError(f"Pose entry missing key {e}") from e


@dataclass(frozen=True)
class SkinnedMesh:
    """Rest-pose triangle mesh with skeleton, skinning weights, UVs and per-vertex latent codes."""

    vertices: np.ndarray
    triangles: np.ndarray
    uvs: np.ndarray
    skin_weights: np.ndarray
    skeleton: Skeleton
    vertex_codes: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "uvs", np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2))
        weights = np.asarray(self.skin_weights, dtype=np.float64)
        object.__setattr__(self, "skin_weights", weights.reshape(weights.shape[0], -1))
        if self.vertex_codes is not None:
            codes = np.asarray(self.vertex_codes, dtype=np.float64)
            object.__setattr__(self, "vertex_codes", codes.reshape(codes.shape[0], -1))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_joints(self) -> int:
        return self.skeleton.n_joints

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def diameter(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def with_vertices(self, vertices: np.ndarray) -> "SkinnedMesh":
        """Same topology, skinning and UVs with new vertex positions (posed or edited shapes)."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise StructuralError(
                f"Vertex array shape {vertices.shape} does not match mesh {self.vertices.shape}"
            )
        return replace(self, vertices=vertices)

    def same_topology(self, other: "SkinnedMesh") -> bool:
        return (
            self.triangles.shape == other.triangles.shape
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.uvs, other.uvs)
        )

    def validate(self) -> "SkinnedMesh":
        """Check the mesh invariants. Returns self; raises StructuralError on the first violation."""
        nv = self.n_vertices
        if nv == 0 or self.n_triangles == 0:
            raise StructuralError("Mesh is empty")
        if self.uvs.shape[0] != nv:
            raise StructuralError(f"Expected {nv} uvs, got {self.uvs.shape[0]}")
        if self.skin_weights.shape != (nv, self.n_joints):
            raise StructuralError(
                f"skin_weights shape {self.skin_weights.shape} != ({nv}, {self.n_joints})"
            )
        if self.vertex_codes is not None and self.vertex_codes.shape[0] != nv:
            raise StructuralError(f"Expected {nv} vertex codes, got {self.vertex_codes.shape[0]}")
        if not np.all(np.isfinite(self.vertices)):
            raise StructuralError("Mesh has non-finite vertices")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise StructuralError("Triangle index out of range")
        if np.any(self.skin_weights < 0):
            raise StructuralError("Negative skin weight")
        sums = self.skin_weights.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > WEIGHT_SUM_TOL)
        if bad.size:
            raise StructuralError(f"Skin weights of vertex {bad[0]} sum to {sums[bad[0]]!r}, not 1")
        degenerate = degenerate_triangles(self.vertices, self.triangles)
        if degenerate.size:
            raise StructuralError(f"Degenerate (zero-area) triangle {degenerate[0]}")
        return self

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "uvs": self.uvs.tolist(),
            "skin_weights": self.skin_weights.tolist(),
            "skeleton": [
                {"parent": int(p), "rest": self.skeleton.rest[j].reshape(-1).tolist()}
                | ({"name": self.skeleton.names[j]} if self.skeleton.names else {})
                for j, p in enumerate(self.skeleton.parents)
            ],
        }
        if self.vertex_codes is not None:
            data["vertex_codes"] = self.vertex_codes.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SkinnedMesh":
        try:
            joints = data["skeleton"]
            names = tuple(str(j["name"]) for j in joints) if all("name" in j for j in joints) else ()
            skeleton = Skeleton(
                parents=np.array([int(j["parent"]) for j in joints]),
                rest=np.array([j["rest"] for j in joints], dtype=np.float64).reshape(-1, 4, 4),
                names=names,
            )
            return cls(
                vertices=np.array(data["vertices"], dtype=np.float64),
                triangles=np.array(data["triangles"], dtype=np.int64),
                uvs=np.array(data["uvs"], dtype=np.float64),
                skin_weights=np.array(data["skin_weights"], dtype=np.float64),
                skeleton=skeleton,
                vertex_codes=(
                    np.array(data["vertex_codes"], dtype=np.float64)
                    if data.get("vertex_codes") is not None
                    else None
                ),
            )
        except (KeyError, TypeError) as e:
            raise StructuralError(f"Malformed mesh document: {e}") from e


def degenerate_triangles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Ids of triangles with (near) zero area relative to the mesh scale."""
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    doubled_area = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    scale = float(np.ptp(vertices, axis=0).max()) if len(vertices) else 0.0
    return np.flatnonzero(doubled_area <= DEGENERATE_AREA_FRACTION * max(scale, 1e-300) ** 2)


def load_mesh(path: str | Path) -> SkinnedMesh:
    """Read and validate a mesh JSON file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise StructuralError(f"Cannot read mesh file {path}: {e}") from e
    return SkinnedMesh.from_dict(data).validate()


def save_mesh(mesh: SkinnedMesh, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(mesh.to_dict(), f)


def load_poses(path: str | Path) -> list[Pose]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise StructuralError(f"Cannot read poses file {path}: {e}") from e
    if not isinstance(data, list):
        raise StructuralError(f"Poses file {path} must hold a JSON array")
    return [Pose.from_dict(p) for p in data]


def save_poses(poses: list[Pose], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump([p.to_dict() for p in poses], f)
