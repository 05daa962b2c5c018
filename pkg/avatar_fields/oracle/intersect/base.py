"""Abstract interface for ray/triangle-mesh intersectors."""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

# Shadow rays start this far from the surface along the normal.
SHADOW_EPS = 1e-4


@dataclass
class Hits:
    """Closest hit per ray. Misses have t = inf and tri_id = -1."""

    t: np.ndarray
    tri_id: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.tri_id >= 0

    def weights(self) -> np.ndarray:
        """(N, 3) barycentric weights of triangle vertices (a, b, c)."""
        return np.stack([1.0 - self.u - self.v, self.u, self.v], axis=1)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def ray_triangle(
    origins: np.ndarray,
    dirs: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    eps: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Moller-Trumbore, elementwise over broadcast inputs. Returns (t, u, v) with t = inf where
    the ray misses or the hit lies behind the origin. Both intersectors call this so their
    distances agree bit for bit.
    """
    e1 = b - a
    e2 = c - a
    p = _cross(dirs, e2)
    det = _dot(e1, p)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origins - a
    u = _dot(s, p) * inv
    q = _cross(s, e1)
    v = _dot(dirs, q) * inv
    t = _dot(e2, q) * inv
    valid = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
    return np.where(valid, t, np.inf), u, v


class Intersector(ABC):
    """Closest-hit and any-hit queries against a fixed triangle mesh."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.triangles = np.asarray(triangles, dtype=np.int64)

    @property
    @abstractmethod
    def name(self) -> str:
        """Backend identifier (e.g. 'bvh')."""
        ...

    @abstractmethod
    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> Hits:
        """Closest hit per ray; equal distances resolve to the lowest triangle id."""
        ...

    @abstractmethod
    def occluded(self, origins: np.ndarray, dirs: np.ndarray, t_max: float = np.inf) -> np.ndarray:
        """True where any triangle is hit at 0 < t < t_max."""
        ...
