"""
Lat-long light probe of distant illumination. Row 0 is the north pole (+y). Texel
(i, j) has polar angle theta_i = (i + 0.5) pi / H from +y and azimuth
phi_j = (j + 0.5) 2 pi / W and direction (sin theta cos phi, cos theta, sin theta sin phi).
Its solid angle is the exact area of its latitude band cell, (2 pi / W)(cos(i pi / H) -
cos((i + 1) pi / H)), so the texels tile the sphere to 4 pi.
"""

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

from avatar_fields.core import DatasetError
from avatar_fields.image_io import read_nfimg, write_nfimg


@lru_cache(maxsize=8)
def _geometry(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    theta = (np.arange(h) + 0.5) * np.pi / h
    phi = (np.arange(w) + 0.5) * 2.0 * np.pi / w
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(th) * np.cos(ph), np.cos(th), np.sin(th) * np.sin(ph)], axis=-1)
    edges = np.cos(np.arange(h + 1) * np.pi / h)
    band = (2.0 * np.pi / w) * (edges[:-1] - edges[1:])
    solid = np.broadcast_to(band[:, None], (h, w)).copy()
    dirs.setflags(write=False)
    solid.setflags(write=False)
    return dirs, solid


def probe_geometry(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-texel unit directions (H, W, 3) and solid angles (H, W)."""
    return _geometry(int(h), int(w))


@dataclass(frozen=True)
class LightProbe:
    """H x W x C non-negative texels (C = 1 gray or 3 RGB)."""

    texels: np.ndarray

    def __post_init__(self) -> None:
        tex = np.asarray(self.texels, dtype=np.float64)
        if tex.ndim == 2:
            tex = tex[:, :, None]
        if tex.ndim != 3 or tex.shape[2] not in (1, 3):
            raise DatasetError(f"Probe must be H x W x 1 or H x W x 3, got {tex.shape}")
        if np.any(tex < 0) or not np.all(np.isfinite(tex)):
            raise DatasetError("Probe texels must be finite and non-negative")
        object.__setattr__(self, "texels", tex)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.texels.shape  # type: ignore[return-value]

    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        return probe_geometry(self.shape[0], self.shape[1])

    def scaled(self, s: float) -> "LightProbe":
        return LightProbe(self.texels * s)

    def tensor(self, dtype: torch.dtype) -> torch.Tensor:
        return torch.as_tensor(self.texels, dtype=dtype)

    @classmethod
    def load(cls, path: str | Path) -> "LightProbe":
        return cls(read_nfimg(path).astype(np.float64))

    def save(self, path: str | Path) -> None:
        write_nfimg(path, self.texels)


def irradiance(normals: torch.Tensor, texels: torch.Tensor, visibility: torch.Tensor | None = None) -> torch.Tensor:
    """
    Sum_i V_i I_i max(n . w_i, 0) dw_i per normal: (N, 3) x (H, W, C) -> (N, C).
    `visibility` is an optional (N, H*W) 0/1 mask.
    """
    h, w, c = texels.shape
    dirs, solid = probe_geometry(h, w)
    dirs_t = torch.as_tensor(dirs.reshape(-1, 3), dtype=normals.dtype)
    solid_t = torch.as_tensor(solid.reshape(-1), dtype=normals.dtype)
    cos = torch.clamp(normals @ dirs_t.T, min=0.0) * solid_t
    if visibility is not None:
        cos = cos * visibility.to(cos.dtype)
    return cos @ texels.reshape(-1, c).to(normals.dtype)


def shade(
    albedo: torch.Tensor, shadow: torch.Tensor, normals: torch.Tensor, texels: torch.Tensor
) -> torch.Tensor:
    """c = a * v * irradiance(n); gray probes broadcast to RGB."""
    irr = irradiance(normals, texels)
    return albedo * shadow[:, None] * irr.expand(-1, 3) if irr.shape[1] == 1 else albedo * shadow[:, None] * irr


def shade_numpy(albedo: np.ndarray, shadow: np.ndarray, normals: np.ndarray, probe: LightProbe) -> np.ndarray:
    """float64 numpy convenience wrapper around shade()."""
    out = shade(
        torch.as_tensor(albedo, dtype=torch.float64),
        torch.as_tensor(shadow, dtype=torch.float64),
        torch.as_tensor(normals, dtype=torch.float64),
        probe.tensor(torch.float64),
    )
    return out.numpy()
