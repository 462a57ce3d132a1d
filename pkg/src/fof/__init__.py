"""Fourier occupancy fields: compact per-pixel encodings of 3D shape along z."""

from .codec import (FofFormatError, FofGrid, add_relative_noise, basis_vector, decode_at,
                    decode_occupancy, encode_interval_set, encode_intervals, foreground_mask,
                    fof_l1, read_fof, resize_fof, truncate_channels, write_fof)
from .geometry import (MeshError, PointSamples, TriangleMesh, is_watertight, load_mesh,
                       make_shape, normalize_mesh, sample_surface_points, save_mesh)
from .metrics import MetricReport, chamfer, evaluate, normal_image_error, p2s, z_align
from .raster import LayeredIntervalGrid, first_hit, rasterize_intervals
from .surface import GridCoordsMap, OccupancyGrid, extract_mesh, marching_cubes

__version__ = "0.1.0"

__all__ = [
    "FofFormatError", "FofGrid", "GridCoordsMap", "LayeredIntervalGrid", "MeshError",
    "MetricReport", "OccupancyGrid", "PointSamples", "TriangleMesh", "add_relative_noise",
    "basis_vector", "chamfer", "decode_at", "decode_occupancy", "encode_interval_set",
    "encode_intervals", "evaluate", "extract_mesh", "first_hit", "fof_l1", "foreground_mask",
    "is_watertight", "load_mesh", "make_shape", "marching_cubes", "normal_image_error",
    "normalize_mesh", "p2s", "rasterize_intervals", "read_fof", "resize_fof",
    "sample_surface_points", "save_mesh", "truncate_channels", "write_fof", "z_align",
]
