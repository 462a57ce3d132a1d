"""Orthographic layered-depth rasterization of triangle meshes along +z.

Each pixel center (x, y) defines the ray {(x, y, z) : z in [-1, 1]}. All
ray/triangle crossings are collected, sorted, and paired by parity into the
inside-intervals of the ray.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import TriangleMesh

DEDUP_EPS = 1e-9
BOUNDS_EPS = 1e-6
_PAIR_BUDGET = 4_000_000


def pixel_to_xy(i, j, width: int, height: int):
    """Pixel center of column ``i``, row ``j``; row 0 is the top (largest y)."""
    i = np.asarray(i)
    j = np.asarray(j)
    if np.any((i < 0) | (i >= width)) or np.any((j < 0) | (j >= height)):
        raise IndexError(f"pixel ({i}, {j}) outside {width}x{height} grid")
    x = 2.0 * (i + 0.5) / width - 1.0
    y = 1.0 - 2.0 * (j + 0.5) / height
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def as_interval_set(pairs) -> np.ndarray:
    """Validate a sequence of (z_in, z_out) pairs and return a (k, 2) array."""
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError("every interval needs z_in < z_out")
    if np.any(arr[1:, 0] < arr[:-1, 1]):
        raise ValueError("intervals must be sorted and disjoint")
    return arr


def interval_occupancy(intervals, z):
    """Exact occupancy along one ray: 1 inside, 0.5 on an endpoint, 0 outside."""
    iv = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    z_arr = np.asarray(z, dtype=np.float64)
    zz = z_arr[..., None]
    inside = np.any((zz > iv[:, 0]) & (zz < iv[:, 1]), axis=-1)
    on_end = np.any((zz == iv[:, 0]) | (zz == iv[:, 1]), axis=-1)
    out = np.where(on_end, 0.5, np.where(inside, 1.0, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LayeredIntervalGrid:
    """Per-pixel interval sets stored in compressed-row form.

    Pixel (i, j) has linear index ``p = i * height + j``; its intervals are
    ``z_in[offsets[p]:offsets[p + 1]]`` and the matching ``z_out`` slice.
    """

    width: int
    height: int
    offsets: np.ndarray
    z_in: np.ndarray
    z_out: np.ndarray
    warnings: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if len(self.offsets) != self.width * self.height + 1:
            raise ValueError("offsets length must be W*H + 1")
        for name in ("offsets", "z_in", "z_out"):
            getattr(self, name).flags.writeable = False

    @classmethod
    def from_sets(cls, sets, width: int, height: int, warnings: int = 0) -> "LayeredIntervalGrid":
        """Build from a nested ``sets[i][j] -> pairs`` sequence (W outer, H inner)."""
        counts, zin, zout = [], [], []
        for i in range(width):
            for j in range(height):
                iv = as_interval_set(sets[i][j])
                counts.append(len(iv))
                zin.append(iv[:, 0])
                zout.append(iv[:, 1])
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(width, height, offsets,
                   np.concatenate(zin) if zin else np.zeros(0),
                   np.concatenate(zout) if zout else np.zeros(0), warnings)

    def intervals(self, i: int, j: int) -> np.ndarray:
        p = i * self.height + j
        a, b = self.offsets[p], self.offsets[p + 1]
        return np.stack([self.z_in[a:b], self.z_out[a:b]], axis=1)

    def counts(self) -> np.ndarray:
        """Number of intervals per pixel, shape (W, H)."""
        return np.diff(self.offsets).reshape(self.width, self.height)

    @property
    def max_layers(self) -> int:
        c = np.diff(self.offsets)
        return int(c.max()) if c.size else 0

    def inside_length(self) -> np.ndarray:
        """Total inside length per pixel, shape (W, H)."""
        lengths = self.z_out - self.z_in
        csum = np.concatenate([[0.0], np.cumsum(lengths)])
        return (csum[self.offsets[1:]] - csum[self.offsets[:-1]]).reshape(self.width, self.height)

    def volume(self) -> float:
        return float(self.inside_length().sum() * 4.0 / (self.width * self.height))

    def write_csv(self, path) -> None:
        """Debug dump with columns ``i,j,k,z_in,z_out``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "k", "z_in", "z_out"])
            for p in np.nonzero(np.diff(self.offsets))[0]:
                i, j = divmod(int(p), self.height)
                for k in range(self.offsets[p], self.offsets[p + 1]):
                    w.writerow([i, j, k - self.offsets[p], repr(float(self.z_in[k])),
                                repr(float(self.z_out[k]))])


# ---------------------------------------------------------------------------
# ray/triangle crossings
# ---------------------------------------------------------------------------


def _owns(dx, dy):
    # Tie-break for a sample exactly on an edge of a counter-clockwise triangle:
    # equivalent to nudging the sample by (+1, +eps). Of the two triangles
    # sharing an edge on opposite sides exactly one owns it.
    return (dy < 0) | ((dy == 0) & (dx > 0))


def _oriented_triangles(mesh: TriangleMesh):
    """Triangles with counter-clockwise xy projection; degenerate ones dropped."""
    tri = mesh.triangles()
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = area2 != 0
    flip = area2 < 0
    tri = tri.copy()
    tri[flip, 1], tri[flip, 2] = tri[flip, 2], tri[flip, 1].copy()
    face_ids = np.nonzero(keep)[0]
    return tri[keep], face_ids


def ray_crossings(mesh: TriangleMesh, width: int, height: int):
    """All crossings of the pixel-center rays with the mesh.

    Returns ``(pixel, z, face)`` arrays where ``pixel = i * height + j``.
    Crossings on shared edges and vertices are counted once thanks to a
    consistent ownership rule; rays are parallel to degenerate projections.
    """
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    if mesh.n_vertices and np.abs(mesh.vertices).max() > 1.0 + BOUNDS_EPS:
        raise ValueError("mesh must be normalized into [-1, 1]^3")
    tri, face_ids = _oriented_triangles(mesh)
    empty = (np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))
    if len(tri) == 0:
        return empty

    # pixel-index bounding boxes (one pixel of slack, the exact test decides)
    u = (tri[:, :, 0] + 1.0) * (width / 2.0) - 0.5
    v = (1.0 - tri[:, :, 1]) * (height / 2.0) - 0.5
    i0 = np.clip(np.floor(u.min(axis=1)).astype(np.int64), 0, width - 1)
    i1 = np.clip(np.ceil(u.max(axis=1)).astype(np.int64), 0, width - 1)
    j0 = np.clip(np.floor(v.min(axis=1)).astype(np.int64), 0, height - 1)
    j1 = np.clip(np.ceil(v.max(axis=1)).astype(np.int64), 0, height - 1)
    nx = i1 - i0 + 1
    ny = j1 - j0 + 1
    npairs = nx * ny

    out_p, out_z, out_f = [], [], []
    start = 0
    cum = np.cumsum(npairs)
    while start < len(tri):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _PAIR_BUDGET, side="right"))
        stop = max(stop, start + 1)
        sl = slice(start, stop)
        p, z, f = _crossings_chunk(tri[sl], face_ids[sl], i0[sl], j0[sl], nx[sl], ny[sl],
                                   npairs[sl], width, height)
        out_p.append(p)
        out_z.append(z)
        out_f.append(f)
        start = stop
    return np.concatenate(out_p), np.concatenate(out_z), np.concatenate(out_f)


def _crossings_chunk(tri, face_ids, i0, j0, nx, ny, npairs, width, height):
    t = np.repeat(np.arange(len(tri)), npairs)
    local = np.arange(len(t)) - np.repeat(np.cumsum(npairs) - npairs, npairs)
    pi = i0[t] + local // ny[t]
    pj = j0[t] + local % ny[t]
    ox = 2.0 * (pi + 0.5) / width - 1.0
    oy = 1.0 - 2.0 * (pj + 0.5) / height

    T = tri[t]
    ax, ay = T[:, 0, 0] - ox, T[:, 0, 1] - oy
    bx, by = T[:, 1, 0] - ox, T[:, 1, 1] - oy
    cx, cy = T[:, 2, 0] - ox, T[:, 2, 1] - oy
    # edge functions; e(P, Q) = Px*Qy - Py*Qx is exactly antisymmetric in (P, Q)
    ea = bx * cy - by * cx  # edge b->c, weight of a
    eb = cx * ay - cy * ax  # edge c->a, weight of b
    ec = ax * by - ay * bx  # edge a->b, weight of c

    def ok(e, p, q):
        return (e > 0) | ((e == 0) & _owns(T[:, q, 0] - T[:, p, 0], T[:, q, 1] - T[:, p, 1]))

    hit = ok(ea, 1, 2) & ok(eb, 2, 0) & ok(ec, 0, 1)
    det = ea + eb + ec
    hit &= det > 0
    z = (ea * T[:, 0, 2] + eb * T[:, 1, 2] + ec * T[:, 2, 2])[hit] / det[hit]
    pix = pi[hit] * height + pj[hit]
    return pix, z, face_ids[t[hit]]


def rasterize_intervals(mesh: TriangleMesh, width: int, height: int) -> LayeredIntervalGrid:
    """Layered inside-intervals of ``mesh`` on a ``width x height`` pixel grid.

    Crossings closer than 1e-9 in z are merged; an odd crossing count drops the
    last crossing and increments ``warnings``.
    """
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    pix, z, _ = ray_crossings(mesh, width, height)
    order = np.lexsort((z, pix))
    pix, z = pix[order], z[order]
    if len(z):
        dup = np.zeros(len(z), dtype=bool)
        dup[1:] = (pix[1:] == pix[:-1]) & (z[1:] - z[:-1] < DEDUP_EPS)
        pix, z = pix[~dup], z[~dup]

    npix = width * height
    counts = np.bincount(pix, minlength=npix)
    odd = counts % 2 == 1
    warnings = int(odd.sum())
    if warnings:
        ends = np.cumsum(counts) - 1
        keep = np.ones(len(z), dtype=bool)
        keep[ends[odd]] = False
        pix, z = pix[keep], z[keep]
        counts = counts - odd
    offsets = np.concatenate([[0], np.cumsum(counts // 2)]).astype(np.int64)
    return LayeredIntervalGrid(width, height, offsets, z[0::2].copy(), z[1::2].copy(), warnings)


def first_hit(mesh: TriangleMesh, width: int, height: int):
    """Front-most crossing per pixel (smallest z along the +z ray).

    Returns ``(depth, face)`` arrays of shape (W, H); misses are NaN / -1.
    """
    pix, z, face = ray_crossings(mesh, width, height)
    depth = np.full(width * height, np.nan)
    faces = np.full(width * height, -1, dtype=np.int64)
    if len(z):
        order = np.lexsort((face, z, pix))
        pix, z, face = pix[order], z[order], face[order]
        first = np.ones(len(pix), dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        depth[pix[first]] = z[first]
        faces[pix[first]] = face[first]
    return depth.reshape(width, height), faces.reshape(width, height)
