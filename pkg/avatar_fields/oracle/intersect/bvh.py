"""
Bounding-volume hierarchy over triangle centroids (median split on the widest axis).

Traversal is breadth-first over (ray, node) pairs so whole ray batches move through the
tree together; leaves emit (ray, triangle) candidates that go through the same
Moller-Trumbore routine as the brute-force backend.
"""

import numpy as np

from avatar_fields.oracle.intersect.base import Hits, Intersector, ray_triangle

LEAF_SIZE = 4
RAY_CHUNK = 8192


class BvhIntersector(Intersector):
    def __init__(self, vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = LEAF_SIZE):
        super().__init__(vertices, triangles)
        self.leaf_size = leaf_size
        self._build()

    @property
    def name(self) -> str:
        return "bvh"

    def _build(self) -> None:
        corners = self.vertices[self.triangles]
        tri_min = corners.min(axis=1)
        tri_max = corners.max(axis=1)
        centroids = corners.mean(axis=1)
        order = np.arange(len(self.triangles))
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def node(ids: np.ndarray) -> int:
            idx = len(lo)
            lo.append(tri_min[ids].min(axis=0))
            hi.append(tri_max[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            return idx

        root = node(order)
        stack = [(root, order)]
        leaves = []
        while stack:
            idx, ids = stack.pop()
            if len(ids) <= self.leaf_size:
                leaves.append((idx, ids))
                continue
            spread = centroids[ids].max(axis=0) - centroids[ids].min(axis=0)
            axis = int(np.argmax(spread))
            ids = ids[np.argsort(centroids[ids, axis], kind="stable")]
            half = len(ids) // 2
            a, b = ids[:half], ids[half:]
            ia, ib = node(a), node(b)
            left[idx], right[idx] = ia, ib
            stack.append((ib, b))
            stack.append((ia, a))

        tri_order = []
        for idx, ids in leaves:
            start[idx] = len(tri_order)
            count[idx] = len(ids)
            tri_order.extend(ids.tolist())
        pad = 1e-9 * max(float(np.ptp(self.vertices, axis=0).max()), 1.0)
        self.node_min = np.array(lo) - pad
        self.node_max = np.array(hi) + pad
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.tri_order = np.array(tri_order, dtype=np.int64)

    def _candidates(self, origins: np.ndarray, dirs: np.ndarray, t_max: np.ndarray):
        """(ray, triangle) pairs whose leaf boxes the rays enter before t_max."""
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        rays = np.arange(len(origins))
        nodes = np.zeros(len(origins), dtype=np.int64)
        out_rays, out_tris = [], []
        while rays.size:
            with np.errstate(invalid="ignore"):
                t0 = (self.node_min[nodes] - origins[rays]) * inv[rays]
                t1 = (self.node_max[nodes] - origins[rays]) * inv[rays]
            t_near = np.nan_to_num(np.minimum(t0, t1), nan=-np.inf).max(axis=1)
            t_far = np.nan_to_num(np.maximum(t0, t1), nan=np.inf).min(axis=1)
            keep = (t_near <= t_far) & (t_far >= 0.0) & (t_near <= t_max[rays])
            rays, nodes = rays[keep], nodes[keep]
            leaf = self.left[nodes] < 0
            if leaf.any():
                lr, ln = rays[leaf], nodes[leaf]
                cnt = self.count[ln]
                rep_r = np.repeat(lr, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                out_rays.append(rep_r)
                out_tris.append(self.tri_order[np.repeat(self.start[ln], cnt) + offs])
            inner = ~leaf
            rays = np.concatenate([rays[inner], rays[inner]])
            nodes = np.concatenate([self.left[nodes[inner]], self.right[nodes[inner]]])
        if not out_rays:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(out_rays), np.concatenate(out_tris)

    def _test(self, origins, dirs, rays, tris):
        tri = self.triangles[tris]
        return ray_triangle(
            origins[rays], dirs[rays],
            self.vertices[tri[:, 0]], self.vertices[tri[:, 1]], self.vertices[tri[:, 2]],
        )

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> Hits:
        n = len(origins)
        t_out = np.full(n, np.inf)
        tri_out = np.full(n, -1, dtype=np.int64)
        u_out = np.zeros(n)
        v_out = np.zeros(n)
        for s in range(0, n, RAY_CHUNK):
            o, d = origins[s : s + RAY_CHUNK], dirs[s : s + RAY_CHUNK]
            rays, tris = self._candidates(o, d, np.full(len(o), np.inf))
            if rays.size == 0:
                continue
            t, u, v = self._test(o, d, rays, tris)
            hit = np.isfinite(t)
            rays, tris, t, u, v = rays[hit], tris[hit], t[hit], u[hit], v[hit]
            order = np.lexsort((tris, t, rays))
            rays, tris, t, u, v = rays[order], tris[order], t[order], u[order], v[order]
            first = np.ones(len(rays), dtype=bool)
            first[1:] = rays[1:] != rays[:-1]
            r = rays[first] + s
            t_out[r] = t[first]
            tri_out[r] = tris[first]
            u_out[r] = u[first]
            v_out[r] = v[first]
        return Hits(t_out, tri_out, u_out, v_out)

    def occluded(self, origins: np.ndarray, dirs: np.ndarray, t_max: float = np.inf) -> np.ndarray:
        n = len(origins)
        out = np.zeros(n, dtype=bool)
        for s in range(0, n, RAY_CHUNK):
            o, d = origins[s : s + RAY_CHUNK], dirs[s : s + RAY_CHUNK]
            rays, tris = self._candidates(o, d, np.full(len(o), t_max))
            if rays.size == 0:
                continue
            t, _, _ = self._test(o, d, rays, tris)
            blocked = rays[t < t_max]
            out[blocked + s] = True
        return out
