"""Brute-force intersector: every ray against every triangle, in chunks."""

import numpy as np

from avatar_fields.oracle.intersect.base import Hits, Intersector, ray_triangle

# Rays x triangles pairs evaluated per chunk.
PAIR_BUDGET = 2_000_000


class BruteForceIntersector(Intersector):
    @property
    def name(self) -> str:
        return "brute"

    def _chunks(self, n_rays: int):
        step = max(1, PAIR_BUDGET // max(len(self.triangles), 1))
        for s in range(0, n_rays, step):
            yield slice(s, min(s + step, n_rays))

    def _corners(self):
        tri = self.triangles
        return (self.vertices[tri[:, k]][None] for k in range(3))

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> Hits:
        n = len(origins)
        t_out = np.full(n, np.inf)
        tri_out = np.full(n, -1, dtype=np.int64)
        u_out = np.zeros(n)
        v_out = np.zeros(n)
        a, b, c = self._corners()
        for sl in self._chunks(n):
            t, u, v = ray_triangle(origins[sl, None, :], dirs[sl, None, :], a, b, c)
            best = np.argmin(t, axis=1)
            rows = np.arange(len(best))
            tb = t[rows, best]
            hit = np.isfinite(tb)
            t_out[sl] = tb
            tri_out[sl] = np.where(hit, best, -1)
            u_out[sl] = np.where(hit, u[rows, best], 0.0)
            v_out[sl] = np.where(hit, v[rows, best], 0.0)
        return Hits(t_out, tri_out, u_out, v_out)

    def occluded(self, origins: np.ndarray, dirs: np.ndarray, t_max: float = np.inf) -> np.ndarray:
        out = np.zeros(len(origins), dtype=bool)
        a, b, c = self._corners()
        for sl in self._chunks(len(origins)):
            t, _, _ = ray_triangle(origins[sl, None, :], dirs[sl, None, :], a, b, c)
            out[sl] = np.any(t < t_max, axis=1)
        return out
