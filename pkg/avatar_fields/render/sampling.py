"""Depth samples along rays: uniform bin midpoints, or one jittered sample per bin."""

from dataclasses import dataclass

import numpy as np


@dataclass
class RaySampleBatch:
    """Rays that hit the sampling box, with depth-ordered samples."""

    ray_index: np.ndarray
    origins: np.ndarray
    dirs: np.ndarray
    near: np.ndarray
    far: np.ndarray
    t: np.ndarray
    deltas: np.ndarray

    @property
    def n_rays(self) -> int:
        return len(self.ray_index)

    @property
    def n_samples(self) -> int:
        return self.t.shape[1] if self.t.ndim == 2 else 0

    def positions(self) -> np.ndarray:
        """(R * N, 3) sample positions, ray-major."""
        pts = self.origins[:, None, :] + self.t[..., None] * self.dirs[:, None, :]
        return pts.reshape(-1, 3)


def sample_points(
    near: np.ndarray,
    far: np.ndarray,
    n: int,
    stratified: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    t_i = near + (i + u_i) / n * (far - near) with u_i = 0.5, or uniform in [0, 1) when
    stratified. delta_i = t_{i+1} - t_i and the last delta is far - t_n.
    """
    near = np.asarray(near, dtype=np.float64).reshape(-1, 1)
    far = np.asarray(far, dtype=np.float64).reshape(-1, 1)
    if n < 1:
        raise ValueError("n must be >= 1")
    if stratified and n > 1:
        if rng is None:
            raise ValueError("stratified sampling needs an rng")
        u = rng.random((near.shape[0], n))
    else:
        u = np.full((near.shape[0], n), 0.5)
    t = near + (np.arange(n)[None, :] + u) / n * (far - near)
    deltas = np.concatenate([t[:, 1:] - t[:, :-1], far - t[:, -1:]], axis=1)
    return t, deltas


def build_batch(
    origins: np.ndarray,
    dirs: np.ndarray,
    near: np.ndarray,
    far: np.ndarray,
    hit: np.ndarray,
    n: int,
    stratified: bool = False,
    rng: np.random.Generator | None = None,
) -> RaySampleBatch:
    """Keep rays that hit the box and sample them; missing rays composite to background."""
    idx = np.flatnonzero(hit)
    t, deltas = sample_points(near[idx], far[idx], n, stratified, rng)
    return RaySampleBatch(idx, origins[idx], dirs[idx], near[idx], far[idx], t, deltas)
