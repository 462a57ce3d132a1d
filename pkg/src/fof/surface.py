"""Occupancy grids and marching-cubes iso-surface extraction."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .geometry import TriangleMesh

_SLAB_CELLS = 4_000_000


@dataclass(frozen=True)
class GridCoordsMap:
    """Axis-aligned affine map ``xyz = origin + scale * (i, j, k)``."""

    origin: np.ndarray
    scale: np.ndarray

    @classmethod
    def for_shape(cls, width: int, height: int, depth: int) -> "GridCoordsMap":
        origin = np.array([-1.0 + 1.0 / width, 1.0 - 1.0 / height, -1.0])
        scale = np.array([2.0 / width, -2.0 / height, 2.0 / (depth - 1)])
        return cls(origin, scale)

    def to_world(self, ijk) -> np.ndarray:
        return self.origin + self.scale * np.asarray(ijk, dtype=np.float64)

    def to_index(self, xyz) -> np.ndarray:
        return (np.asarray(xyz, dtype=np.float64) - self.origin) / self.scale

    @property
    def flips_orientation(self) -> bool:
        return bool(np.prod(np.sign(self.scale)) < 0)


@dataclass(frozen=True)
class OccupancyGrid:
    """Sampled occupancy ``values[i, j, k]`` on the FOF pixel grid times K z samples."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 2:
            raise ValueError("occupancy grid needs at least 2 samples on every axis")
        if not np.all(np.isfinite(v)):
            raise ValueError("occupancy values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def coords(self) -> GridCoordsMap:
        return GridCoordsMap.for_shape(*self.values.shape)


# ---------------------------------------------------------------------------
# lookup tables
# ---------------------------------------------------------------------------
# corner c sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1); edge e joins two
# corners differing along one axis.

_CORNERS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])
_EDGES = [(c, c | (1 << a), a) for a in range(3) for c in range(8) if not c & (1 << a)]
_EDGE_ID = {frozenset(e[:2]): n for n, e in enumerate(_EDGES)}


def _face_cycles():
    """Corner cycles of the six cube faces, counter-clockwise seen from outside."""
    cycles = []
    for a in range(3):
        u, v = (a + 1) % 3, (a + 2) % 3
        for side in (0, 1):
            ring = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                c = (side << a) | (du << u) | (dv << v)
                ring.append(c)
            cycles.append(ring if side else ring[::-1])
    return cycles


def _case_polygons(case: int) -> list:
    inside = [(case >> c) & 1 for c in range(8)]
    nxt = {}
    for ring in _face_cycles():
        flags = [inside[c] for c in ring]
        if all(flags) or not any(flags):
            continue
        for k in range(4):
            if flags[k] and not flags[k - 1]:
                m = k
                while flags[(m + 1) % 4]:
                    m = (m + 1) % 4
                # one segment per run of inside corners: ambiguous faces keep
                # the inside corners apart, a rule both adjacent cells agree on
                exit_edge = _EDGE_ID[frozenset((ring[m], ring[(m + 1) % 4]))]
                entry_edge = _EDGE_ID[frozenset((ring[k - 1], ring[k]))]
                nxt[exit_edge] = entry_edge
    loops = []
    while nxt:
        start = min(nxt)
        loop = [start]
        e = nxt.pop(start)
        while e != start:
            loop.append(e)
            e = nxt.pop(e)
        loops.append(loop[::-1])  # reversed: normals away from the inside corners
    return loops


def _face_edge_sets() -> list:
    return [{_EDGE_ID[frozenset((r[k - 1], r[k]))] for k in range(4)} for r in _face_cycles()]


def _triangulate(loop: list, faces: list) -> list:
    """Triangulate a loop without diagonals that lie on a cube face.

    Such a diagonal could coincide with one produced by the neighbouring cell
    and make the surface non-manifold.
    """

    def on_face(a, b):
        return any(a in f and b in f for f in faces)

    def solve(poly):
        if len(poly) == 3:
            return [tuple(poly)]
        # ear at poly[0]: triangle (poly[0], poly[k], poly[k+1]) splits the rest
        for k in range(1, len(poly) - 1):
            if any(on_face(a, b) for a, b in _internal_diagonals(poly, k)):
                continue
            out = [(poly[0], poly[k], poly[k + 1])]
            for sub in (poly[: k + 1], poly[k + 1:] + poly[:1]):
                if len(sub) >= 3:
                    s = solve(sub)
                    if s is None:
                        break
                    out += s
            else:
                return out
        return None

    for shift in range(len(loop)):
        rotated = loop[shift:] + loop[:shift]
        tris = solve(rotated)
        if tris is not None:
            return tris
    raise RuntimeError(f"no face-free triangulation for loop {loop}")


def _internal_diagonals(poly: list, k: int) -> list:
    n = len(poly)
    out = []
    if k != 1:
        out.append((poly[0], poly[k]))
    if k + 1 != n - 1:
        out.append((poly[k + 1], poly[0]))
    return out


@lru_cache(maxsize=None)
def triangle_table() -> tuple[np.ndarray, np.ndarray]:
    """(256, T, 3) edge-index triangles per case (-1 padded) and counts."""
    faces = _face_edge_sets()
    tris = []
    for case in range(256):
        t = []
        for loop in _case_polygons(case):
            t += _triangulate(loop, faces)
        tris.append(t)
    width = max(len(t) for t in tris)
    table = np.full((256, width, 3), -1, dtype=np.int64)
    counts = np.zeros(256, dtype=np.int64)
    for case, t in enumerate(tris):
        counts[case] = len(t)
        if t:
            table[case, : len(t)] = t
    return table, counts


_EDGE_AXIS = np.array([e[2] for e in _EDGES])
_EDGE_BASE = np.array([_CORNERS[e[0]] for e in _EDGES])


def marching_cubes(grid: OccupancyGrid, iso: float = 0.5,
                   coords: Optional[GridCoordsMap] = None) -> TriangleMesh:
    """Iso-surface of ``grid`` at ``iso`` with normals toward lower values.

    Vertices are shared through their grid edge, so a closed level set yields
    a watertight mesh. Cells are visited in C order, so output is deterministic.
    """
    vals = grid.values
    nx, ny, nz = vals.shape
    coords = coords or grid.coords
    table, counts = triangle_table()
    inside = vals > iso

    keys, slab = [], max(1, _SLAB_CELLS // max(1, (ny - 1) * (nz - 1)))
    for s in range(0, nx - 1, slab):
        e = min(s + slab, nx - 1)
        case = np.zeros((e - s, ny - 1, nz - 1), dtype=np.uint8)
        for c, (dx, dy, dz) in enumerate(_CORNERS):
            case |= inside[s + dx: e + dx, dy: ny - 1 + dy, dz: nz - 1 + dz].astype(np.uint8) << c
        ci, cj, ck = np.nonzero(counts[case] > 0)
        if ci.size == 0:
            continue
        cases = case[ci, cj, ck]
        tri = table[cases]  # (n, T, 3)
        valid = np.arange(table.shape[1])[None, :] < counts[cases][:, None]
        cell = np.repeat(np.stack([ci + s, cj, ck], axis=1), valid.sum(axis=1), axis=0)
        edge = tri[valid]  # (t, 3)
        base = cell[:, None, :] + _EDGE_BASE[edge]
        keys.append(((base[..., 0] * ny + base[..., 1]) * nz + base[..., 2]) * 3 + _EDGE_AXIS[edge])

    if not keys:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    keys = np.concatenate(keys)
    uniq, faces = np.unique(keys, return_inverse=True)
    faces = faces.reshape(-1, 3)

    axis = uniq % 3
    lin = uniq // 3
    p0 = np.stack([lin // (ny * nz), (lin // nz) % ny, lin % nz], axis=1)
    p1 = p0 + np.eye(3, dtype=np.int64)[axis]
    v0 = vals[p0[:, 0], p0[:, 1], p0[:, 2]]
    v1 = vals[p1[:, 0], p1[:, 1], p1[:, 2]]
    t = (iso - v0) / (v1 - v0)
    ijk = p0.astype(np.float64)
    ijk[np.arange(len(ijk)), axis] += t
    if coords.flips_orientation:
        faces = faces[:, [0, 2, 1]]
    return TriangleMesh(coords.to_world(ijk), faces)


def extract_mesh(fof, resolution=None, iso: float = 0.5) -> TriangleMesh:
    """Resize (if needed), decode with K z samples and run marching cubes.

    ``resolution`` is ``(W', H', K)``; by default the field's own size with
    K equal to its width.
    """
    from .codec import decode_occupancy, resize_fof

    if resolution is None:
        resolution = (fof.width, fof.height, fof.width)
    w, h, k = resolution
    if (w, h) != (fof.width, fof.height):
        fof = resize_fof(fof, w, h)
    return marching_cubes(decode_occupancy(fof, k), iso)
