"""Reconstruction metrics: Chamfer, point-to-surface and normal-image error."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import MeshError, PointSamples, TriangleMesh, sample_surface_points
from .raster import first_hit


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FOF_THREADS", "1")))
    except ValueError:
        return 1


def _points(samples) -> np.ndarray:
    pts = samples.points if isinstance(samples, PointSamples) else np.asarray(samples, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("point set is empty")
    return pts


def squared_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def nearest_squared(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Squared distance from each query point to its nearest reference point."""
    _, idx = cKDTree(ref).query(query, k=1, workers=_workers())
    return squared_distance(query, ref[idx])


def z_align(pred, gt) -> tuple[PointSamples, float]:
    """Shift ``pred`` along z so both sets have the same mean z."""
    p = _points(pred)
    g = _points(gt)
    offset = float(g[:, 2].mean() - p[:, 2].mean())
    normals = pred.normals if isinstance(pred, PointSamples) else None
    return PointSamples(p + [0.0, 0.0, offset], normals), offset


def chamfer_sum(pred, gt) -> float:
    """Sum of the two mean squared nearest-neighbour distances."""
    p = _points(pred)
    g = _points(gt)
    return float(nearest_squared(p, g).mean() + nearest_squared(g, p).mean())


def chamfer(pred, gt) -> float:
    """``sqrt(chamfer_sum / 2)``: equals d for two single points at distance d."""
    return float(np.sqrt(chamfer_sum(pred, gt) / 2.0))


def aggregate_chamfer(sums) -> float:
    """Test-set figure: average the raw sums first, then take sqrt of half."""
    sums = np.asarray(list(sums), dtype=np.float64)
    if sums.size == 0:
        raise ValueError("no chamfer values to aggregate")
    return float(np.sqrt(sums.mean() / 2.0))


# ---------------------------------------------------------------------------
# point-to-triangle distance
# ---------------------------------------------------------------------------


def point_triangle_sqdist(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distance from points ``p`` to triangles ``(a, b, c)``, row-wise.

    Closest-point region classification (vertex, edge, interior), vectorized.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("...i,...i", ab, ap)
    d2 = np.einsum("...i,...i", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i", ab, bp)
    d4 = np.einsum("...i,...i", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i", ab, cp)
    d6 = np.einsum("...i,...i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    closest = a + v_in[..., None] * ab + w_in[..., None] * ac

    regions = [
        ((d1 <= 0) & (d2 <= 0), a),
        ((d3 >= 0) & (d4 <= d3), b),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[..., None] * ab),
        ((d6 >= 0) & (d5 <= d6), c),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[..., None] * ac),
        ((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t_bc[..., None] * (c - b)),
    ]
    chosen = np.zeros(d1.shape, dtype=bool)
    for cond, q in regions:
        cond = cond & ~chosen
        closest = np.where(cond[..., None], q, closest)
        chosen |= cond
    sq = squared_distance(p, closest)
    degenerate = np.isnan(sq)
    if degenerate.any():
        seg = np.minimum(np.minimum(_segment_sqdist(p, a, b), _segment_sqdist(p, b, c)),
                         _segment_sqdist(p, c, a))
        sq = np.where(degenerate, seg, sq)
    return sq


def _segment_sqdist(p, a, b):
    ab = b - a
    length2 = np.einsum("...i,...i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(np.einsum("...i,...i", p - a, ab) / length2, 0.0, 1.0)
    t = np.where(length2 > 0, t, 0.0)
    return squared_distance(p, a + t[..., None] * ab)


class MeshDistanceIndex:
    """Exact point-to-mesh distance with a kd-tree over triangle sub-patches.

    Each triangle is split (for indexing only) into congruent sub-triangles
    no wider than the median triangle. A query takes the ``k`` nearest patch
    centroids, evaluates the exact distance to their parent triangles, and
    widens ``k`` until no unvisited patch can be closer.
    """

    def __init__(self, mesh: TriangleMesh, k: int = 16):
        if mesh.is_empty():
            raise MeshError("cannot index an empty mesh")
        tri = mesh.triangles()
        self.tri = tri
        centroid = tri.mean(axis=1)
        radius = np.sqrt(squared_distance(tri, centroid[:, None, :]).max(axis=1))
        target = max(float(np.median(radius)), 1e-12)
        splits = np.clip(np.ceil(radius / target), 1, 64).astype(np.int64)
        centers, parents, radii = [], [], []
        for s in np.unique(splits):
            ids = np.nonzero(splits == s)[0]
            bary = _subtriangle_centroids(int(s))  # (s*s, 3)
            pts = np.einsum("pk,tkd->tpd", bary, tri[ids])
            centers.append(pts.reshape(-1, 3))
            parents.append(np.repeat(ids, len(bary)))
            radii.append(np.repeat(radius[ids] / s, len(bary)))
        self.centers = np.concatenate(centers)
        self.parents = np.concatenate(parents)
        self.max_radius = float(np.concatenate(radii).max())
        self.tree = cKDTree(self.centers)
        self.k = k

    def squared_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        result = np.empty(len(points))
        todo = np.arange(len(points))
        k = min(self.k, len(self.centers))
        while todo.size:
            for chunk in np.array_split(todo, max(1, todo.size * k // 250_000 + 1)):
                dist, idx = self.tree.query(points[chunk], k=k, workers=_workers())
                dist = dist.reshape(len(chunk), -1)
                parent = self.parents[idx.reshape(len(chunk), -1)]
                t = self.tri[parent]
                q = np.repeat(points[chunk][:, None, :], parent.shape[1], axis=1)
                best = point_triangle_sqdist(q, t[..., 0, :], t[..., 1, :], t[..., 2, :]).min(axis=1)
                result[chunk] = best
                if k >= len(self.centers):
                    continue
                # patches beyond the k-th are at least (kth - r) away
                bound = dist[:, -1] - self.max_radius
                unresolved = ~(bound > np.sqrt(best) * (1 + 1e-12) + 1e-15)
                result[chunk[unresolved]] = np.nan
            todo = np.nonzero(np.isnan(result))[0]
            k = min(4 * k, len(self.centers))
        return result

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.sqrt(self.squared_distance(points))


def _subtriangle_centroids(s: int) -> np.ndarray:
    """Barycentric centroids of the s*s congruent pieces of a triangle."""
    out = []
    for i in range(s):
        for j in range(s - i):
            out.append(((i + 1 / 3) / s, (j + 1 / 3) / s))
            if i + j < s - 1:
                out.append(((i + 2 / 3) / s, (j + 2 / 3) / s))
    uv = np.array(out)
    return np.stack([1.0 - uv.sum(axis=1), uv[:, 0], uv[:, 1]], axis=1)


def p2s(pred_mesh: TriangleMesh, gt_mesh: TriangleMesh, count: int = 100_000,
        seed: int = 0, use_vertices: bool = False) -> float:
    """Mean distance from points on ``pred_mesh`` to the surface of ``gt_mesh``.

    Points are area-uniform surface samples, or the mesh vertices when
    ``use_vertices`` is set.
    """
    if pred_mesh.is_empty() or gt_mesh.is_empty():
        raise MeshError("p2s needs two non-empty meshes")
    if use_vertices:
        pts = pred_mesh.vertices
    else:
        pts = sample_surface_points(pred_mesh, count, seed).points
    return float(MeshDistanceIndex(gt_mesh).distance(pts).mean())


# ---------------------------------------------------------------------------
# normal images
# ---------------------------------------------------------------------------


def normal_image(mesh: TriangleMesh, width: int, height: int) -> np.ndarray:
    """Front-most face normal per pixel, shape (W, H, 3); zero where nothing is hit."""
    _, face = first_hit(mesh, width, height)
    normals = mesh.face_normals()
    img = np.zeros((width, height, 3))
    hit = face >= 0
    img[hit] = normals[face[hit]]
    return img


def normal_image_l1(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean L1 normal difference over pixels covered by either image."""
    covered = np.any(pred != 0, axis=-1) | np.any(gt != 0, axis=-1)
    if not covered.any():
        return 0.0
    return float(np.abs(pred[covered] - gt[covered]).sum(axis=-1).mean())


def normal_image_error(pred_mesh: TriangleMesh, gt_mesh: TriangleMesh,
                       width: int = 512, height: int = 512) -> float:
    if pred_mesh.is_empty() or gt_mesh.is_empty():
        raise MeshError("normal image error needs two non-empty meshes")
    return normal_image_l1(normal_image(pred_mesh, width, height), normal_image(gt_mesh, width, height))


@dataclass(frozen=True)
class MetricReport:
    chamfer: float
    p2s: float
    normal_error: float
    sample_count: int
    seed: int

    HEADER = "chamfer,p2s,normal_error,sample_count,seed"

    def csv_row(self) -> str:
        return f"{self.chamfer!r},{self.p2s!r},{self.normal_error!r},{self.sample_count},{self.seed}"


def evaluate(pred_mesh: TriangleMesh, gt_mesh: TriangleMesh, count: int = 100_000,
             seed: int = 0, image_size: tuple = (512, 512), align: bool = True,
             p2s_vertices: bool = False) -> MetricReport:
    """Full metric suite; with ``align`` the prediction is first z-aligned to the ground truth."""
    if pred_mesh.is_empty() or gt_mesh.is_empty():
        raise MeshError("metrics need two non-empty meshes")
    pred_pts = sample_surface_points(pred_mesh, count, seed)
    gt_pts = sample_surface_points(gt_mesh, count, seed)
    if align:
        pred_pts, offset = z_align(pred_pts, gt_pts)
        pred_mesh = pred_mesh.translated([0.0, 0.0, offset])
    cd = chamfer(pred_pts, gt_pts)
    if p2s_vertices:
        dist = MeshDistanceIndex(gt_mesh).distance(pred_mesh.vertices).mean()
    else:
        dist = MeshDistanceIndex(gt_mesh).distance(pred_pts.points).mean()
    ne = normal_image_error(pred_mesh, gt_mesh, *image_size)
    return MetricReport(cd, float(dist), ne, count, seed)
