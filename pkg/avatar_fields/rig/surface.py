"""
Nearest-surface queries, vertex normals and tangent frames on a triangle mesh.

Barycentric pairs (u, v) weight a triangle's first and second vertex; the third vertex
gets 1 - u - v. All queries are exact argmins over triangles: the brute-force scan is the
reference, and SurfaceIndex prunes with k-d trees but evaluates candidates with the same
arithmetic, so both return identical results (ties go to the lowest triangle id).
"""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from avatar_fields.core import StructuralError

log = logging.getLogger(__name__)

UV_DET_EPS = 1e-10
_BRUTE_PAIRS = 1_000_000
_INDEX_CHUNK = 8192


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Written out so results do not depend on array layout or batch size.
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _normalize(v: np.ndarray, eps: float = 1e-300) -> np.ndarray:
    return v / np.maximum(np.sqrt(_dot(v, v))[..., None], eps)


def closest_point_on_triangles(
    p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closest point of triangle (a, b, c) to p, including edge and vertex regions.
    All inputs broadcast over leading dims. Returns (point, weights (..., 3), distance).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    zero = np.zeros_like(d1)
    one = np.ones_like(d1)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        wb = vb / denom
        wc = vc / denom
        # Regions in reverse priority; later assignments win.
        in_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        wb = np.where(in_bc, 1 - t, wb)
        wc = np.where(in_bc, t, wc)
        in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        wb = np.where(in_ac, zero, wb)
        wc = np.where(in_ac, t, wc)
        in_c = (d6 >= 0) & (d5 <= d6)
        wb = np.where(in_c, zero, wb)
        wc = np.where(in_c, one, wc)
        in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        wb = np.where(in_ab, t, wb)
        wc = np.where(in_ab, zero, wc)
        in_b = (d3 >= 0) & (d4 <= d3)
        wb = np.where(in_b, one, wb)
        wc = np.where(in_b, zero, wc)
        in_a = (d1 <= 0) & (d2 <= 0)
        wb = np.where(in_a, zero, wb)
        wc = np.where(in_a, zero, wc)
    wa = 1.0 - wb - wc
    point = a + wb[..., None] * ab + wc[..., None] * ac
    diff = p - point
    dist = np.sqrt(_dot(diff, diff))
    return point, np.stack([wa, wb, wc], axis=-1), dist


def face_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unnormalized face normals e1 x e2 (length = twice the area)."""
    v0, v1, v2 = (vertices[triangles[:, k]] for k in range(3))
    return np.cross(v1 - v0, v2 - v0)


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Area-weighted unit vertex normals: Sum n_f / |Sum n_f| over incident faces. Vertices
    at the same position (UV seams) are welded and share one normal.
    """
    fn = face_normals(vertices, triangles)
    _, group = np.unique(np.asarray(vertices, dtype=np.float64), axis=0, return_inverse=True)
    group = group.reshape(-1)
    acc = np.zeros((int(group.max()) + 1, 3))
    for k in range(3):
        np.add.at(acc, group[triangles[:, k]], fn)
    acc = acc[group]
    lengths = np.linalg.norm(acc, axis=1)
    if np.any(lengths == 0):
        raise StructuralError(f"Vertex {int(np.flatnonzero(lengths == 0)[0])} has no normal")
    return acc / lengths[:, None]


def _fallback_tangent(normals: np.ndarray) -> np.ndarray:
    """Unit tangent perpendicular to each normal: +x projected, else +y."""
    n = _normalize(normals)
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 1.0, 0.0])
    tx = x - n[..., 0:1] * n
    ty = y - n[..., 1:2] * n
    use_y = np.sqrt(_dot(tx, tx)) < 1e-6
    return _normalize(np.where(use_y[..., None], ty, tx))


def face_tangent_frames(
    vertices: np.ndarray, triangles: np.ndarray, uvs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-face tangent t_f and bitangent b_f from [t; b] = [du1 dv1; du2 dv2]^-1 [e1; e2].
    Returns (t_f, b_f, degenerate_mask). UV-degenerate faces get the fallback tangent and
    b_f = n_f x t_f.
    """
    v0, v1, v2 = (vertices[triangles[:, k]] for k in range(3))
    w0, w1, w2 = (uvs[triangles[:, k]] for k in range(3))
    e1 = v1 - v0
    e2 = v2 - v0
    du1, dv1 = (w1 - w0).T
    du2, dv2 = (w2 - w0).T
    det = du1 * dv2 - dv1 * du2
    degenerate = np.abs(det) <= UV_DET_EPS
    safe = np.where(degenerate, 1.0, det)
    t = (dv2[:, None] * e1 - dv1[:, None] * e2) / safe[:, None]
    b = (du1[:, None] * e2 - du2[:, None] * e1) / safe[:, None]
    if np.any(degenerate):
        n = _normalize(np.cross(e1, e2))
        t_fb = _fallback_tangent(n)
        t = np.where(degenerate[:, None], t_fb, t)
        b = np.where(degenerate[:, None], np.cross(n, t_fb), b)
    return t, b, degenerate


def compute_tbn(
    vertices: np.ndarray, triangles: np.ndarray, uvs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-vertex unit tangents and bitangents accumulated with area weights.
    Returns (tangents, bitangents, uv_degenerate_triangle_ids).
    """
    t_f, b_f, degenerate = face_tangent_frames(vertices, triangles, uvs)
    ids = np.flatnonzero(degenerate)
    if ids.size:
        log.warning("%d UV-degenerate triangles use fallback tangents (first: %d)", ids.size, ids[0])
    area = np.linalg.norm(face_normals(vertices, triangles), axis=1)[:, None]
    t_acc = np.zeros_like(vertices, dtype=np.float64)
    b_acc = np.zeros_like(vertices, dtype=np.float64)
    t_w = area * _normalize(t_f)
    b_w = area * _normalize(b_f)
    for k in range(3):
        np.add.at(t_acc, triangles[:, k], t_w)
        np.add.at(b_acc, triangles[:, k], b_w)
    normals = vertex_normals(vertices, triangles)
    t_len = np.linalg.norm(t_acc, axis=1)
    b_len = np.linalg.norm(b_acc, axis=1)
    fallback_t = _fallback_tangent(normals)
    tangents = np.where((t_len > 1e-12)[:, None], t_acc / np.maximum(t_len, 1e-300)[:, None], fallback_t)
    bitangents = np.where(
        (b_len > 1e-12)[:, None],
        b_acc / np.maximum(b_len, 1e-300)[:, None],
        np.cross(normals, fallback_t),
    )
    return tangents, bitangents, ids


def orthonormal_frames(normals: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    """Rows [t, b, n] with t made orthogonal to n and b = n x t. Shapes (..., 3) -> (..., 3, 3)."""
    n = _normalize(normals)
    t = tangents - _dot(tangents, n)[..., None] * n
    t_len = np.sqrt(_dot(t, t))
    t = np.where((t_len > 1e-9)[..., None], t / np.maximum(t_len, 1e-300)[..., None], _fallback_tangent(n))
    b = np.cross(n, t)
    return np.stack([t, b, n], axis=-2)


@dataclass(frozen=True)
class SurfaceSample:
    """Batched nearest-surface result; every field has the query batch as leading dim."""

    point: np.ndarray
    tri_id: np.ndarray
    bary: np.ndarray
    distance: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    bitangent: np.ndarray
    tbn: np.ndarray
    uv: np.ndarray

    def __len__(self) -> int:
        return len(self.tri_id)


def nearest_surface_brute(
    points: np.ndarray, vertices: np.ndarray, triangles: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exhaustive scan. Returns (point, tri_id, weights (N, 3), distance)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(triangles) == 0:
        raise StructuralError("Nearest-surface query on an empty mesh")
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    n_pts = points.shape[0]
    out_p = np.empty((n_pts, 3))
    out_t = np.empty(n_pts, dtype=np.int64)
    out_w = np.empty((n_pts, 3))
    out_d = np.empty(n_pts)
    chunk = max(1, _BRUTE_PAIRS // len(triangles))
    for s in range(0, n_pts, chunk):
        p = points[s : s + chunk, None, :]
        pt, w, d = closest_point_on_triangles(p, a[None], b[None], c[None])
        best = np.argmin(d, axis=1)
        rows = np.arange(len(best))
        out_p[s : s + chunk] = pt[rows, best]
        out_t[s : s + chunk] = best
        out_w[s : s + chunk] = w[rows, best]
        out_d[s : s + chunk] = d[rows, best]
    return out_p, out_t, out_w, out_d


class SurfaceIndex:
    """Exact nearest-triangle search pruned with k-d trees over vertices and centroids."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        if len(triangles) == 0:
            raise StructuralError("Nearest-surface query on an empty mesh")
        self.vertices = vertices
        self.triangles = triangles
        self._a, self._b, self._c = (vertices[triangles[:, k]] for k in range(3))
        centroids = (self._a + self._b + self._c) / 3.0
        self._centroids = centroids
        self._radii = np.max(
            np.stack([np.linalg.norm(v - centroids, axis=1) for v in (self._a, self._b, self._c)]),
            axis=0,
        )
        self._r_max = float(self._radii.max())
        self._vertex_tree = cKDTree(vertices)
        self._centroid_tree = cKDTree(centroids)
        self._incident = self._incident_faces(len(vertices), triangles)

    @staticmethod
    def _incident_faces(n_vertices: int, triangles: np.ndarray) -> np.ndarray:
        flat_v = triangles.reshape(-1)
        flat_f = np.repeat(np.arange(len(triangles)), 3)
        order = np.argsort(flat_v, kind="stable")
        counts = np.bincount(flat_v, minlength=n_vertices)
        width = max(int(counts.max()), 1)
        table = np.full((n_vertices, width), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(len(flat_v)) - np.repeat(starts, counts)
        table[flat_v[order], slot] = flat_f[order]
        return table

    def _pairs(self, points: np.ndarray, pts: np.ndarray, tris: np.ndarray):
        return closest_point_on_triangles(points[pts], self._a[tris], self._b[tris], self._c[tris])

    def query(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Same contract as nearest_surface_brute."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        outs = [self._query_chunk(points[s : s + _INDEX_CHUNK]) for s in range(0, len(points), _INDEX_CHUNK)]
        if not outs:
            return np.empty((0, 3)), np.empty(0, dtype=np.int64), np.empty((0, 3)), np.empty(0)
        return tuple(np.concatenate(parts) for parts in zip(*outs))  # type: ignore[return-value]

    def _query_chunk(self, points: np.ndarray):
        n = len(points)
        _, nearest_v = self._vertex_tree.query(points)
        faces = self._incident[nearest_v]
        valid = faces >= 0
        pts = np.repeat(np.arange(n), valid.sum(axis=1))
        _, _, d = self._pairs(points, pts, faces[valid])
        upper = np.full(n, np.inf)
        np.minimum.at(upper, pts, d)
        upper = upper * (1.0 + 1e-9) + 1e-12

        hits = self._centroid_tree.query_ball_point(points, upper + self._r_max)
        lengths = np.fromiter((len(h) for h in hits), dtype=np.int64, count=n)
        tris = np.fromiter(itertools.chain.from_iterable(hits), dtype=np.int64, count=int(lengths.sum()))
        pts = np.repeat(np.arange(n), lengths)
        gap = np.linalg.norm(points[pts] - self._centroids[tris], axis=1) - self._radii[tris]
        keep = gap <= upper[pts]
        pts, tris = pts[keep], tris[keep]
        point, w, d = self._pairs(points, pts, tris)
        order = np.lexsort((tris, d, pts))
        _, first = np.unique(pts[order], return_index=True)
        pick = order[first]
        return point[pick], tris[pick], w[pick], d[pick]


class MeshSurface:
    """One mesh shape (canonical, posed or edited) with cached normals, tangents and index."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray, uvs: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.uvs = np.asarray(uvs, dtype=np.float64)
        if len(self.triangles) == 0:
            raise StructuralError("Mesh surface has no triangles")
        self.normals = vertex_normals(self.vertices, self.triangles)
        self.tangents, self.bitangents, self.uv_degenerate = compute_tbn(
            self.vertices, self.triangles, self.uvs
        )

    @cached_property
    def index(self) -> SurfaceIndex:
        return SurfaceIndex(self.vertices, self.triangles)

    def interpolate(self, values: np.ndarray, tri_id: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Barycentric interpolation of per-vertex values: u*V_a + v*V_b + (1-u-v)*V_c."""
        tri = self.triangles[tri_id]
        u = bary[:, 0:1]
        v = bary[:, 1:2]
        return u * values[tri[:, 0]] + v * values[tri[:, 1]] + (1.0 - u - v) * values[tri[:, 2]]

    def tbn_at(self, tri_id: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Interpolated, renormalized, Gram-Schmidt frames M = [t; b; n], shape (N, 3, 3)."""
        n = _normalize(self.interpolate(self.normals, tri_id, bary))
        t = _normalize(self.interpolate(self.tangents, tri_id, bary))
        return orthonormal_frames(n, t)

    def sample(self, point: np.ndarray, tri_id: np.ndarray, weights: np.ndarray, dist: np.ndarray) -> SurfaceSample:
        bary = np.clip(weights[:, :2], 0.0, 1.0)
        tbn = self.tbn_at(tri_id, bary)
        return SurfaceSample(
            point=point,
            tri_id=tri_id,
            bary=bary,
            distance=dist,
            normal=tbn[:, 2],
            tangent=tbn[:, 0],
            bitangent=tbn[:, 1],
            tbn=tbn,
            uv=self.interpolate(self.uvs, tri_id, bary),
        )

    def nearest(self, points: np.ndarray, brute: bool = False) -> SurfaceSample:
        """Nearest surface sample for each query point (N, 3)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if brute:
            found = nearest_surface_brute(points, self.vertices, self.triangles)
        else:
            found = self.index.query(points)
        return self.sample(*found)

    def point_at(self, tri_id: np.ndarray, bary: np.ndarray) -> np.ndarray:
        return self.interpolate(self.vertices, tri_id, bary)


def nearest_surface(points: np.ndarray, surface: MeshSurface) -> SurfaceSample:
    """Exact nearest surface point, triangle, barycentrics and TBN frame for each query."""
    return surface.nearest(points)
