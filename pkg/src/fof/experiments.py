"""Pipelines and parameter sweeps behind the command-line tools."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import codec
from .geometry import (TriangleMesh, load_mesh, make_shape, normalize_mesh, parse_shape_spec,
                       sample_surface_points)
from .metrics import MeshDistanceIndex, chamfer, normal_image_error
from .raster import rasterize_intervals
from .surface import extract_mesh

FULL_ORDERS = (3, 7, 15, 31, 63, 127)
DEFAULT_NOISE_LEVELS = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)


@dataclass
class ExperimentConfig:
    shape: Optional[str] = None
    mesh_path: Optional[str] = None
    grid: tuple = (256, 256)
    orders: Sequence[int] = (3, 7, 15, 31)
    zsamples: int = 256
    noise_levels: Sequence[float] = DEFAULT_NOISE_LEVELS
    order: int = 15
    seed: int = 0
    sample_count: int = 100_000
    image_size: tuple = (256, 256)
    margin: float = 0.05
    normalize: Optional[bool] = None

    def __post_init__(self):
        self.orders = [int(n) for n in self.orders]
        self.noise_levels = [float(x) for x in self.noise_levels]
        if not self.orders or any(n < 1 for n in self.orders) or self.orders != sorted(set(self.orders)):
            raise ValueError("orders must be >= 1 and strictly ascending")
        if any(x < 0 for x in self.noise_levels) or self.noise_levels != sorted(self.noise_levels):
            raise ValueError("noise levels must be >= 0 and ascending")
        for d in (*self.grid, self.zsamples):
            if not 2 <= d <= 4096:
                raise ValueError("grid and z-sample sizes must lie in [2, 4096]")

    def load(self) -> TriangleMesh:
        """The ground-truth mesh. Files are normalized; synthetic shapes already
        live in the canonical cube and are used as built."""
        if (self.shape is None) == (self.mesh_path is None):
            raise ValueError("give exactly one of a shape spec or a mesh path")
        if self.shape is not None:
            kind, params = parse_shape_spec(self.shape)
            mesh = make_shape(kind, params)
            normalize = bool(self.normalize)
        else:
            mesh = load_mesh(self.mesh_path)
            normalize = self.normalize is not False
        if mesh.is_empty():
            raise ValueError("mesh has no faces")
        return normalize_mesh(mesh, self.margin) if normalize else mesh


@dataclass
class SweepRow:
    value: float
    chamfer: float
    p2s: float
    normal_error: float
    status: str = "ok"

    HEADER = "value,chamfer,p2s,normal_error,status"

    def csv_row(self) -> str:
        v = int(self.value) if float(self.value).is_integer() and self.value >= 1 else self.value
        return f"{v!r},{self.chamfer!r},{self.p2s!r},{self.normal_error!r},{self.status}"


def mesh_to_fof(mesh: TriangleMesh, width: int, height: int, order: int):
    """Rasterize and encode; returns ``(fof, warnings)``."""
    grid = rasterize_intervals(mesh, width, height)
    return codec.encode_intervals(grid, order), grid.warnings


class Evaluator:
    """Caches ground-truth samples and the distance index across sweep rows."""

    def __init__(self, gt: TriangleMesh, count: int, seed: int, image_size=(256, 256)):
        self.gt = gt
        self.count = count
        self.seed = seed
        self.image_size = image_size
        self.gt_points = sample_surface_points(gt, count, seed)
        self.index = MeshDistanceIndex(gt)

    def row(self, value, mesh: TriangleMesh) -> SweepRow:
        if mesh.is_empty():
            nan = float("nan")
            return SweepRow(value, nan, nan, nan, "empty")
        pts = sample_surface_points(mesh, self.count, self.seed)
        return SweepRow(
            value,
            chamfer(pts, self.gt_points),
            float(self.index.distance(pts.points).mean()),
            normal_image_error(mesh, self.gt, *self.image_size),
        )


def ablate_orders(config: ExperimentConfig, gt: Optional[TriangleMesh] = None) -> list:
    """Encode once at the largest order, truncate per order, extract and score."""
    gt = gt if gt is not None else config.load()
    w, h = config.grid
    full, _ = mesh_to_fof(gt, w, h, max(config.orders))
    ev = Evaluator(gt, config.sample_count, config.seed, config.image_size)
    rows = []
    for n in config.orders:
        mesh = extract_mesh(codec.truncate_channels(full, n), (w, h, config.zsamples))
        rows.append(ev.row(n, mesh))
    return rows


def noise_sweep(config: ExperimentConfig, gt: Optional[TriangleMesh] = None) -> list:
    """Score reconstructions of the ground-truth field under relative noise."""
    gt = gt if gt is not None else config.load()
    w, h = config.grid
    clean, _ = mesh_to_fof(gt, w, h, config.order)
    mask = codec.foreground_mask(clean)
    ev = Evaluator(gt, config.sample_count, config.seed, config.image_size)
    rows = []
    for n, level in enumerate(config.noise_levels):
        # per-level sub-seed: adding a level leaves the others unchanged
        noisy = codec.add_relative_noise(clean, level, config.seed ^ n, mask)
        rows.append(ev.row(level, extract_mesh(noisy, (w, h, config.zsamples))))
    return rows


@dataclass
class BenchResult:
    order: int
    raster_s: float
    encode_s: float
    decode_s: float

    HEADER = "order,raster_s,encode_s,decode_s"

    def csv_row(self) -> str:
        return f"{self.order},{self.raster_s!r},{self.encode_s!r},{self.decode_s!r}"


def bench(mesh: TriangleMesh, grid=(256, 256), zsamples: int = 256,
          orders=(7, 15, 31, 63), repeats: int = 5) -> list:
    """Best-of-``repeats`` wall-clock of rasterizing, encoding and decoding per order."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    w, h = grid
    ras = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        intervals = rasterize_intervals(mesh, w, h)
        ras.append(time.perf_counter() - t0)
    out = []
    for n in orders:
        enc, dec = [], []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fof = codec.encode_intervals(intervals, n)
            t1 = time.perf_counter()
            codec.decode_occupancy(fof, zsamples)
            t2 = time.perf_counter()
            enc.append(t1 - t0)
            dec.append(t2 - t1)
        out.append(BenchResult(n, min(ras), min(enc), min(dec)))
    return out


def linear_fit_r2(x, y) -> float:
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0
