"""
Subject-level features: a local coordinate of the query relative to its nearest surface
sample, positionally encoded, concatenated with the barycentric blend of per-vertex codes.
"""

from enum import Enum

import numpy as np
import torch

from avatar_fields.core import ConfigError
from avatar_fields.rig.surface import SurfaceSample


class LocalCoordMode(str, Enum):
    TANGENT = "tangent"
    RELATIVE = "relative"
    DIRECTION = "direction"
    UVH = "uvh"


def local_tangent_coord(sample: SurfaceSample, x_o: np.ndarray) -> np.ndarray:
    """x_l = M(x_s) (x_o - x_s) with M rows [t, b, n]."""
    return np.einsum("nij,nj->ni", sample.tbn, np.asarray(x_o).reshape(-1, 3) - sample.point)


def alt_local_coord(mode: LocalCoordMode | str, sample: SurfaceSample, x_o: np.ndarray) -> np.ndarray:
    """Local coordinate for any mode; tangent defers to local_tangent_coord."""
    mode = LocalCoordMode(mode)
    x_o = np.asarray(x_o, dtype=np.float64).reshape(-1, 3)
    offset = x_o - sample.point
    if mode is LocalCoordMode.TANGENT:
        return local_tangent_coord(sample, x_o)
    if mode is LocalCoordMode.RELATIVE:
        return offset
    if mode is LocalCoordMode.DIRECTION:
        norm = np.linalg.norm(offset, axis=1, keepdims=True)
        return np.where(norm > 0, offset / np.where(norm > 0, norm, 1.0), 0.0)
    height = np.sum(offset * sample.normal, axis=1, keepdims=True)
    return np.concatenate([sample.bary, height], axis=1)


def parse_local_mode(name: str) -> LocalCoordMode:
    try:
        return LocalCoordMode(name)
    except ValueError as e:
        raise ConfigError(f"Unknown local coordinate mode {name!r}") from e


def encoded_width(dim: int, n_freq: int) -> int:
    return dim * (1 + 2 * n_freq)


def positional_encoding(x: torch.Tensor, n_freq: int) -> torch.Tensor:
    """[x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(K-1) pi x), cos(2^(K-1) pi x)]."""
    if n_freq < 0:
        raise ConfigError("n_freq must be >= 0")
    parts = [x]
    for k in range(n_freq):
        scaled = x * (float(2**k) * torch.pi)
        parts.append(torch.sin(scaled))
        parts.append(torch.cos(scaled))
    return torch.cat(parts, dim=-1)


def uv_latent(codes: torch.Tensor, tri_vertices: torch.Tensor, bary: torch.Tensor) -> torch.Tensor:
    """g_s = u C_a + v C_b + (1 - u - v) C_c for each sample's triangle (a, b, c)."""
    u = bary[:, 0:1]
    v = bary[:, 1:2]
    return (
        u * codes[tri_vertices[:, 0]]
        + v * codes[tri_vertices[:, 1]]
        + (1.0 - u - v) * codes[tri_vertices[:, 2]]
    )


def subject_feature(local: torch.Tensor, g_s: torch.Tensor, n_freq: int) -> torch.Tensor:
    """s_o = gamma(local coordinate) concatenated with g_s."""
    return torch.cat([positional_encoding(local, n_freq), g_s], dim=-1)
