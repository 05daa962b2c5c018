"""
Pose-aware features: CP-factorized tri-planes and the pose dictionary that blends them.

Each plane mn in (XY, XZ, YZ) stores R components: a line along m (length L_m), a line
along n (length L_n) and a feature vector of width D. A plane feature at grid coordinate
(a, b) is Sum_r lin(v_r^m, a) * lin(v_r^n, b) * v_r^mn, where lin is 1-D linear
interpolation with align-corners grid coordinates. Points outside the domain box clamp
to its boundary.
"""

import logging
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from avatar_fields.core import StructuralError

log = logging.getLogger(__name__)

PLANES: tuple[tuple[str, int, int], ...] = (("xy", 0, 1), ("xz", 0, 2), ("yz", 1, 2))


def count_triplane_parameters(res_m: int, res_n: int, features: int, components: int) -> int:
    """Stored scalars for one factorized plane: R * (L_m + L_n + D)."""
    return components * (res_m + res_n + features)


def dense_plane_parameters(res_m: int, res_n: int, features: int) -> int:
    """Scalars of the same plane stored densely: L_m * L_n * D."""
    return res_m * res_n * features


def _line_lookup(line: torch.Tensor, coord: torch.Tensor) -> torch.Tensor:
    """line (R, L), coord in [-1, 1] of shape (N,) -> (N, R) linear interpolation."""
    grid = torch.stack([torch.zeros_like(coord), coord], dim=-1).view(1, -1, 1, 2)
    out = F.grid_sample(line[None, :, :, None], grid, mode="bilinear", align_corners=True)
    return out.view(line.shape[0], -1).T


class FactorizedTriPlane(nn.Module):
    """One pose's tri-plane. `resolution` is (L_x, L_y, L_z)."""

    def __init__(
        self,
        box_min: Sequence[float],
        box_max: Sequence[float],
        resolution: Sequence[int],
        features: int,
        components: int,
        init_std: float = 0.1,
        dtype: torch.dtype = torch.float32,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        if components < 1:
            raise StructuralError("Tri-plane needs at least one component")
        self.resolution = tuple(int(r) for r in resolution)
        self.features = features
        self.components = components
        self.register_buffer("box_min", torch.tensor(box_min, dtype=dtype))
        self.register_buffer("box_max", torch.tensor(box_max, dtype=dtype))
        for name, m, n in PLANES:
            for suffix, shape in (
                ("m", (components, self.resolution[m])),
                ("n", (components, self.resolution[n])),
                ("f", (components, features)),
            ):
                init = torch.randn(shape, generator=generator, dtype=dtype) * init_std
                self.register_parameter(f"{name}_{suffix}", nn.Parameter(init))

    @property
    def out_features(self) -> int:
        return 3 * self.features

    def factors(self, plane: str) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return getattr(self, f"{plane}_m"), getattr(self, f"{plane}_n"), getattr(self, f"{plane}_f")

    def normalized(self, x_c: torch.Tensor) -> torch.Tensor:
        """Canonical points -> [-1, 1]^3 grid space, clamped to the box."""
        unit = (x_c - self.box_min) / (self.box_max - self.box_min)
        return (unit * 2.0 - 1.0).clamp(-1.0, 1.0)

    def sample(self, x_c: torch.Tensor) -> torch.Tensor:
        """(N, 3) canonical points -> (N, 3D) concatenated XY, XZ, YZ features."""
        g = self.normalized(x_c)
        out = []
        for name, m, n in PLANES:
            line_m, line_n, feat = self.factors(name)
            coeff = _line_lookup(line_m, g[:, m]) * _line_lookup(line_n, g[:, n])
            out.append(coeff @ feat)
        return torch.cat(out, dim=-1)

    def reconstruct_plane(self, plane: str) -> torch.Tensor:
        """Dense L_m x L_n x D plane: T[a, b, :] = Sum_r v_r^m[a] v_r^n[b] v_r^mn."""
        line_m, line_n, feat = self.factors(plane)
        return torch.einsum("ra,rb,rd->abd", line_m, line_n, feat)

    def parameter_count(self) -> int:
        return sum(
            count_triplane_parameters(self.resolution[m], self.resolution[n], self.features, self.components)
            for _, m, n in PLANES
        )


def sample_triplane(tp: FactorizedTriPlane, x_c: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
    """p_o = features(XY) + features(XZ) + features(YZ) + flattened pose, concatenated."""
    feats = tp.sample(x_c)
    return torch.cat([feats, theta.to(feats.dtype).expand(feats.shape[0], -1)], dim=-1)


def mean_pairwise_sq_distance(poses: np.ndarray) -> float:
    """Mean squared distance over distinct pairs of flattened poses; 1.0 if undefined."""
    k = poses.shape[0]
    if k < 2:
        return 1.0
    diff = poses[:, None, :] - poses[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    mean = float(sq[np.triu_indices(k, 1)].mean())
    return mean if mean > 0 else 1.0


class PoseDictionary(nn.Module):
    """Training poses (flattened joint rotations) each owning a FactorizedTriPlane."""

    def __init__(
        self,
        poses: np.ndarray,
        planes: Sequence[FactorizedTriPlane],
        top_k: int = 5,
        temperature: float | None = None,
    ):
        super().__init__()
        if len(planes) == 0:
            raise StructuralError("Pose dictionary is empty")
        poses = np.asarray(poses, dtype=np.float64).reshape(len(planes), -1)
        if len({p.tobytes() for p in poses}) != len(poses):
            raise StructuralError("Pose dictionary entries must be unique")
        self.poses = poses
        self.planes = nn.ModuleList(planes)
        self.top_k = top_k
        self.temperature = float(temperature) if temperature else mean_pairwise_sq_distance(poses)

    def __len__(self) -> int:
        return len(self.planes)

    def weights(self, theta: np.ndarray) -> list[tuple[int, float]]:
        """(index, weight) pairs; exact match returns that entry alone, else normalized top-k kernel."""
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.poses.shape[1]:
            raise StructuralError(f"Pose vector has {theta.shape[0]} entries, dictionary uses {self.poses.shape[1]}")
        diff = self.poses - theta
        sq = np.sum(diff * diff, axis=1)
        exact = np.flatnonzero(np.all(self.poses == theta, axis=1))
        if exact.size:
            return [(int(exact[0]), 1.0)]
        top = np.argsort(sq, kind="stable")[: self.top_k]
        # Shift by the smallest distance so the kernel never underflows to all zeros.
        logits = -(sq[top] - sq[top].min()) / self.temperature
        w = np.exp(logits)
        w = w / w.sum()
        return [(int(i), float(wi)) for i, wi in zip(top, w)]

    def index_of(self, theta: np.ndarray) -> int | None:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        exact = np.flatnonzero(np.all(self.poses == theta, axis=1))
        return int(exact[0]) if exact.size else None

    def feature(self, theta: np.ndarray, x_c: torch.Tensor) -> torch.Tensor:
        """Similarity-weighted tri-plane feature with theta (the query pose) appended."""
        blend = self.weights(theta)
        feats = None
        for i, w in blend:
            f = self.planes[i].sample(x_c)
            feats = f * w if feats is None else feats + f * w
        theta_t = torch.as_tensor(np.asarray(theta).reshape(1, -1), dtype=feats.dtype)
        return torch.cat([feats, theta_t.expand(feats.shape[0], -1)], dim=-1)

    @property
    def out_features(self) -> int:
        return self.planes[0].out_features + self.poses.shape[1]


def pose_feature(dictionary: PoseDictionary, theta: np.ndarray, x_c: torch.Tensor) -> torch.Tensor:
    return dictionary.feature(theta, x_c)


def domain_box(vertices: np.ndarray, dilation: float) -> tuple[np.ndarray, np.ndarray]:
    """Canonical-mesh AABB dilated by `dilation` of its extent on every side."""
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    pad = (hi - lo) * dilation
    pad = np.where(pad > 0, pad, max(float(np.max(hi - lo)) * dilation, 1e-3))
    return lo - pad, hi + pad


def plane_memory_ratio(res_m: int, res_n: int, features: int, components: int) -> float:
    return dense_plane_parameters(res_m, res_n, features) / count_triplane_parameters(
        res_m, res_n, features, components
    )


__all__ = [
    "FactorizedTriPlane",
    "PLANES",
    "PoseDictionary",
    "count_triplane_parameters",
    "dense_plane_parameters",
    "domain_box",
    "mean_pairwise_sq_distance",
    "plane_memory_ratio",
    "pose_feature",
    "sample_triplane",
]
