"""Triangle meshes: I/O, normalization, synthetic shapes and surface sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

PathLike = Union[str, Path]


class MeshError(ValueError):
    """Invalid mesh data or a malformed mesh file."""


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface.

    ``vertices`` is an (n, 3) float64 array, ``faces`` an (m, 3) int64 array of
    vertex indices. Both are made read-only on construction.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex coordinates must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError(f"face index out of range for {len(v)} vertices")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return self.n_faces == 0

    def triangles(self) -> np.ndarray:
        """Corner coordinates, shape (m, 3, 3)."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit normals from the winding order; zero for degenerate faces."""
        t = self.triangles()
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.where(length > 0, n / length, 0.0)
        return n

    def signed_volume(self) -> float:
        t = self.triangles()
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.faces)

    def scaled(self, factor: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * factor, self.faces)


@dataclass(frozen=True)
class PointSamples:
    """A batch of surface samples: positions (n, 3) and unit normals (n, 3) or None."""

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
            if n.shape != p.shape:
                raise ValueError("normals must match points")
            n.flags.writeable = False
            object.__setattr__(self, "normals", n)

    def __len__(self) -> int:
        return len(self.points)

    def translated(self, offset) -> "PointSamples":
        return PointSamples(self.points + np.asarray(offset, dtype=np.float64), self.normals)


def edge_use_counts(mesh: TriangleMesh) -> dict:
    """Map each directed edge (a, b) to the number of faces traversing it."""
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    keys, counts = np.unique(directed, axis=0, return_counts=True)
    return {(int(a), int(b)): int(c) for (a, b), c in zip(keys, counts)}


def is_watertight(mesh: TriangleMesh) -> bool:
    """Every edge is shared by exactly two faces with opposite orientation."""
    if mesh.is_empty():
        return False
    uses = edge_use_counts(mesh)
    for (a, b), c in uses.items():
        if c != 1 or uses.get((b, a), 0) != 1:
            return False
    return True


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def load_mesh(path: PathLike) -> TriangleMesh:
    """Read an OBJ or PLY file. Polygons are fan-triangulated at their first vertex."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head.startswith(b"ply"):
        return _load_ply(path)
    return _load_obj(path)


def _fan(poly: list) -> list:
    return [(poly[0], poly[t], poly[t + 1]) for t in range(1, len(poly) - 1)]


def _load_obj(path: Path) -> TriangleMesh:
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    if len(parts) < 4:
                        raise MeshError("vertex needs 3 coordinates")
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "f":
                    if len(parts) < 4:
                        raise MeshError("face needs at least 3 vertices")
                    poly = []
                    for tok in parts[1:]:
                        idx = int(tok.split("/")[0])
                        # negative indices are relative to the vertices read so far
                        idx = idx - 1 if idx > 0 else len(vertices) + idx
                        if idx < 0:
                            raise MeshError("face index out of range")
                        poly.append(idx)
                    faces.extend(_fan(poly))
            except (ValueError, IndexError) as exc:
                raise MeshError(f"{path}:{lineno}: malformed record: {exc}") from None
    if faces and max(max(f) for f in faces) >= len(vertices):
        raise MeshError(f"{path}: face index out of range for {len(vertices)} vertices")
    return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshError(f"{path}: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype or (count_t, item_t))])
    for line in header[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise MeshError(f"{path}: property before element")
            try:
                if tok[1] == "list":
                    elements[-1][2].append((tok[4], (_PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
                else:
                    elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            except (KeyError, IndexError):
                raise MeshError(f"{path}: bad property line {line!r}") from None
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt!r}")

    vertices = np.zeros((0, 3))
    faces = []
    if fmt == "ascii":
        tokens = data[body_start:].split()
        pos = 0
        try:
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = {}
                    for pname, ptype in props:
                        if isinstance(ptype, tuple):
                            k = int(tokens[pos])
                            row[pname] = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
                            pos += 1 + k
                        else:
                            row[pname] = float(tokens[pos])
                            pos += 1
                    rows.append(row)
                if name == "vertex":
                    vertices = np.array([[r["x"], r["y"], r["z"]] for r in rows]).reshape(-1, 3)
                elif name == "face":
                    key = _face_key(props)
                    for r in rows:
                        faces.extend(_fan(r[key]))
        except (IndexError, ValueError, KeyError) as exc:
            raise MeshError(f"{path}: malformed PLY body: {exc}") from None
    else:
        buf = memoryview(data)[body_start:]
        pos = 0
        try:
            for name, count, props in elements:
                if all(not isinstance(t, tuple) for _, t in props):
                    dt = np.dtype([(p, "<" + t) for p, t in props])
                    arr = np.frombuffer(buf, dtype=dt, count=count, offset=pos)
                    pos += dt.itemsize * count
                    if name == "vertex":
                        vertices = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
                    continue
                key = _face_key(props) if name == "face" else None
                for _ in range(count):
                    for pname, ptype in props:
                        if isinstance(ptype, tuple):
                            ct, it = ptype
                            k = int(np.frombuffer(buf, dtype="<" + ct, count=1, offset=pos)[0])
                            pos += np.dtype(ct).itemsize
                            items = np.frombuffer(buf, dtype="<" + it, count=k, offset=pos)
                            pos += np.dtype(it).itemsize * k
                            if pname == key:
                                faces.extend(_fan([int(x) for x in items]))
                        else:
                            pos += np.dtype(ptype).itemsize
        except (ValueError, IndexError, KeyError) as exc:
            raise MeshError(f"{path}: truncated or malformed PLY body: {exc}") from None

    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
        raise MeshError(f"{path}: face index out of range for {len(vertices)} vertices")
    return TriangleMesh(vertices, faces)


def _face_key(props) -> str:
    for pname, ptype in props:
        if isinstance(ptype, tuple) and pname in ("vertex_indices", "vertex_index"):
            return pname
    raise MeshError("PLY face element has no vertex_indices list")


def save_mesh(mesh: TriangleMesh, path: PathLike) -> None:
    """Write an ASCII OBJ with full float precision."""
    lines = [f"v {x!r} {y!r} {z!r}\n" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.faces.tolist()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def normalize_mesh(mesh: TriangleMesh, margin: float = 0.05) -> TriangleMesh:
    """Uniformly scale and translate so the bounding box is centered at the
    origin and its longest side spans ``2 * (1 - margin)``."""
    if not 0.0 <= margin < 1.0:
        raise ValueError("margin must lie in [0, 1)")
    if mesh.n_vertices == 0:
        raise MeshError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise MeshError("degenerate bounding box")
    center = (lo + hi) / 2.0
    scale = 2.0 * (1.0 - margin) / extent
    return TriangleMesh((mesh.vertices - center) * scale, mesh.faces)


# ---------------------------------------------------------------------------
# synthetic shapes
# ---------------------------------------------------------------------------


def _icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def _box(half, center) -> tuple[np.ndarray, np.ndarray]:
    hx, hy, hz = half
    corners = np.array([[x, y, z] for z in (-hz, hz) for y in (-hy, hy) for x in (-hx, hx)])
    # corner index = ix + 2*iy + 4*iz; quads wound counter-clockwise seen from outside
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    faces = []
    for q in quads:
        faces += _fan(list(q))
    return corners + np.asarray(center, dtype=np.float64), np.array(faces, dtype=np.int64)


def _torus(major: float, minor: float, n_major: int, n_minor: int, axis: str):
    u = np.arange(n_major) * (2 * np.pi / n_major)
    v = np.arange(n_minor) * (2 * np.pi / n_minor)
    U, V = np.meshgrid(u, v, indexing="ij")
    ring = major + minor * np.cos(V)
    pts = np.stack([ring * np.cos(U), ring * np.sin(U), minor * np.sin(V)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        i1 = (i + 1) % n_major
        for j in range(n_minor):
            j1 = (j + 1) % n_minor
            a, b, c, d = i * n_minor + j, i1 * n_minor + j, i1 * n_minor + j1, i * n_minor + j1
            faces += [(a, b, c), (a, c, d)]
    faces = np.array(faces, dtype=np.int64)
    # proper rotations only, so the winding stays outward
    if axis == "y":
        pts = np.stack([pts[:, 0], -pts[:, 2], pts[:, 1]], axis=1)
    elif axis == "x":
        pts = pts[:, [2, 0, 1]]
    elif axis != "z":
        raise ValueError(f"torus axis must be x, y or z, got {axis!r}")
    return pts, faces


_SHAPE_DEFAULTS = {
    "sphere": {"r": 0.6, "cx": 0.0, "cy": 0.0, "cz": 0.0},
    "box": {"hx": 0.5, "hy": 0.5, "hz": 0.5, "cx": 0.0, "cy": 0.0, "cz": 0.0},
    "slab": {"thickness": 0.02, "half": 0.8, "cz": 0.0},
    "torus": {"R": 0.5, "r": 0.2, "axis": "z"},
    "figure": {},
}


def make_shape(kind: str, params: Optional[dict] = None, resolution: int = 4) -> TriangleMesh:
    """Build a watertight, outward-oriented synthetic test shape.

    ``kind`` is one of sphere, box, slab, torus or figure (a disjoint union of
    primitives that gives up to five inside-intervals along central z rays).
    Missing parameters fall back to defaults; ``resolution`` controls the
    tessellation (icosphere subdivisions, or torus segment multiplier).
    """
    if kind not in _SHAPE_DEFAULTS:
        raise ValueError(f"unknown shape kind {kind!r}")
    p = dict(_SHAPE_DEFAULTS[kind])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    p.update(params or {})
    if resolution < 1:
        raise ValueError("resolution must be >= 1")

    if kind == "sphere":
        if p["r"] <= 0:
            raise ValueError("sphere radius must be positive")
        v, f = _icosphere(resolution)
        v = v * p["r"] + [p["cx"], p["cy"], p["cz"]]
    elif kind == "box":
        half = (p["hx"], p["hy"], p["hz"])
        if min(half) <= 0:
            raise ValueError("box half-extents must be positive")
        v, f = _box(half, (p["cx"], p["cy"], p["cz"]))
    elif kind == "slab":
        if p["thickness"] <= 0 or p["half"] <= 0:
            raise ValueError("slab dimensions must be positive")
        v, f = _box((p["half"], p["half"], p["thickness"] / 2), (0.0, 0.0, p["cz"]))
    elif kind == "torus":
        if not 0 < p["r"] < p["R"]:
            raise ValueError("torus needs 0 < r < R")
        v, f = _torus(p["R"], p["r"], 16 * resolution, 8 * resolution, p["axis"])
    else:
        parts = [
            make_shape("torus", {"R": 0.45, "r": 0.12, "axis": "y"}, resolution),
            make_shape("sphere", {"r": 0.2}, resolution),
            make_shape("box", {"hx": 0.7, "hy": 0.7, "hz": 0.06, "cz": -0.8}),
            make_shape("box", {"hx": 0.7, "hy": 0.7, "hz": 0.06, "cz": 0.8}),
        ]
        return merge_meshes(parts)

    if np.abs(v).max() > 1.0:
        raise ValueError(f"{kind} with {p} does not fit in the [-1, 1]^3 cube")
    return TriangleMesh(v, f)


def merge_meshes(meshes) -> TriangleMesh:
    verts, faces, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + base)
        base += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))


def parse_shape_spec(spec: str) -> tuple[str, dict]:
    """Parse ``"sphere:r=0.6"`` / ``"torus:R=0.5,r=0.2,axis=y"`` style specs."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad shape parameter {item!r}")
        key = key.strip()
        try:
            params[key] = float(value)
        except ValueError:
            params[key] = value.strip()
    return kind.strip(), params


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_surface_points(mesh: TriangleMesh, count: int, seed: int = 0) -> PointSamples:
    """Area-uniform random samples with face normals, deterministic in ``seed``."""
    if count <= 0:
        raise ValueError("count must be positive")
    if mesh.is_empty():
        raise MeshError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    total = cum[-1]
    if not total > 0:
        raise MeshError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    pick = np.searchsorted(cum, rng.random(count) * total, side="right")
    pick = np.minimum(pick, len(cum) - 1)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    tri = mesh.triangles()[pick]
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    pts = w0[:, None] * tri[:, 0] + w1[:, None] * tri[:, 1] + w2[:, None] * tri[:, 2]
    return PointSamples(pts, mesh.face_normals()[pick])
