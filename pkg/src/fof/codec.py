"""Fourier occupancy fields: encoding, decoding, resampling and file format.

A field stores, for every pixel, the coefficients ``[a0, a1, b1, ..., aN, bN]``
of the truncated Fourier series of the occupancy along z on [-1, 1]::

    f(z) ~ a0 / 2 + sum_n a_n cos(n pi z) + b_n sin(n pi z)

Channels are laid out as a (W, H, 2N+1) array indexed ``[i, j, c]``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import LayeredIntervalGrid, as_interval_set, interval_occupancy

MAGIC = b"FOF1"
_HEADER = struct.Struct("<4sIII")
_MAX_BYTES = 1 << 34


class FofFormatError(ValueError):
    """Raised for corrupt or truncated FOF files."""


@dataclass(frozen=True)
class FofGrid:
    channels: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channels)
        if ch.ndim != 3:
            raise ValueError("channels must have shape (W, H, 2N+1)")
        c = ch.shape[2]
        if c < 3 or c % 2 == 0:
            raise ValueError(f"channel count must be odd and >= 3, got {c}")
        if not np.all(np.isfinite(ch)):
            raise ValueError("coefficients must be finite")
        if ch is self.channels and ch.flags.writeable:
            ch = ch.copy()
        ch.flags.writeable = False
        object.__setattr__(self, "channels", ch)

    @property
    def width(self) -> int:
        return self.channels.shape[0]

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def order(self) -> int:
        return (self.channels.shape[2] - 1) // 2

    def __add__(self, other: "FofGrid") -> "FofGrid":
        return FofGrid(self.channels + other.channels)

    def __mul__(self, alpha: float) -> "FofGrid":
        return FofGrid(self.channels * alpha)

    __rmul__ = __mul__


def _harmonics(z_in: np.ndarray, z_out: np.ndarray, order: int) -> np.ndarray:
    """Per-interval coefficient contributions, shape (len(z_in), 2N+1)."""
    out = np.empty((len(z_in), 2 * order + 1))
    out[:, 0] = z_out - z_in
    # one harmonic at a time so each column is computed identically for any order
    for n in range(1, order + 1):
        w = n * np.pi
        out[:, 2 * n - 1] = (np.sin(w * z_out) - np.sin(w * z_in)) / w
        out[:, 2 * n] = (np.cos(w * z_in) - np.cos(w * z_out)) / w
    return out


def encode_intervals(grid: LayeredIntervalGrid, order: int) -> FofGrid:
    """Exact Fourier coefficients of every pixel's occupancy line."""
    if order < 1:
        raise ValueError("order must be >= 1")
    npix = grid.width * grid.height
    coeffs = np.zeros((npix, 2 * order + 1))
    counts = np.diff(grid.offsets)
    for layer in range(grid.max_layers):
        pix = np.nonzero(counts > layer)[0]
        idx = grid.offsets[pix] + layer
        coeffs[pix] += _harmonics(grid.z_in[idx], grid.z_out[idx], order)
    return FofGrid(coeffs.reshape(grid.width, grid.height, 2 * order + 1))


def encode_interval_set(intervals, order: int) -> np.ndarray:
    """Coefficient vector of a single occupancy line."""
    if order < 1:
        raise ValueError("order must be >= 1")
    iv = as_interval_set(intervals)
    c = np.zeros(2 * order + 1)
    for row in _harmonics(iv[:, 0], iv[:, 1], order):
        c += row
    return c


def basis_vector(z, order: int) -> np.ndarray:
    """``[1/2, cos(pi z), sin(pi z), ..., cos(N pi z), sin(N pi z)]``; broadcasts over z."""
    if order < 1:
        raise ValueError("order must be >= 1")
    z = np.asarray(z, dtype=np.float64)
    b = np.empty(z.shape + (2 * order + 1,))
    b[..., 0] = 0.5
    for n in range(1, order + 1):
        b[..., 2 * n - 1] = np.cos(n * np.pi * z)
        b[..., 2 * n] = np.sin(n * np.pi * z)
    return b


def evaluate_series(coeffs, z) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    return basis_vector(z, (coeffs.shape[-1] - 1) // 2) @ coeffs


def _bilinear(channels: np.ndarray, u, v) -> np.ndarray:
    """Sample (W, H, C) channels at fractional pixel indices, clamped at borders."""
    w, h = channels.shape[:2]
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, w - 1)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1)
    i0 = np.minimum(np.floor(u).astype(np.int64), w - 1)
    j0 = np.minimum(np.floor(v).astype(np.int64), h - 1)
    i1 = np.minimum(i0 + 1, w - 1)
    j1 = np.minimum(j0 + 1, h - 1)
    fu = (u - i0)[..., None]
    fv = (v - j0)[..., None]
    return ((1 - fu) * (1 - fv) * channels[i0, j0] + fu * (1 - fv) * channels[i1, j0]
            + (1 - fu) * fv * channels[i0, j1] + fu * fv * channels[i1, j1])


def coefficients_at(fof: FofGrid, x, y) -> np.ndarray:
    u = (np.asarray(x, dtype=np.float64) + 1.0) * (fof.width / 2.0) - 0.5
    v = (1.0 - np.asarray(y, dtype=np.float64)) * (fof.height / 2.0) - 0.5
    return _bilinear(fof.channels, u, v)


def decode_at(fof: FofGrid, x, y, z):
    """Continuous reconstruction at (x, y, z): bilinear coefficients dotted with the basis."""
    c = coefficients_at(fof, x, y)
    val = np.sum(c * basis_vector(z, fof.order), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def z_samples(k: int) -> np.ndarray:
    if k < 2:
        raise ValueError("need at least 2 z samples")
    return -1.0 + 2.0 * np.arange(k) / (k - 1)


def decode_occupancy(fof: FofGrid, k: int):
    """Sample the field on a (W, H, K) grid with endpoint-inclusive z samples."""
    from .surface import OccupancyGrid

    basis = basis_vector(z_samples(k), fof.order)  # (K, C)
    flat = fof.channels.reshape(-1, fof.channels.shape[2]).astype(np.float64, copy=False)
    values = (flat @ basis.T).reshape(fof.width, fof.height, k)
    return OccupancyGrid(values)


def truncate_channels(fof: FofGrid, order: int) -> FofGrid:
    if not 1 <= order <= fof.order:
        raise ValueError(f"order must lie in [1, {fof.order}]")
    return FofGrid(fof.channels[:, :, : 2 * order + 1].copy())


def resize_fof(fof: FofGrid, width: int, height: int) -> FofGrid:
    """Bilinear resampling of every channel at the target pixel centers."""
    if width < 1 or height < 1:
        raise ValueError("target size must be positive")
    u = (np.arange(width) + 0.5) * (fof.width / width) - 0.5
    v = (np.arange(height) + 0.5) * (fof.height / height) - 0.5
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return FofGrid(_bilinear(fof.channels, uu, vv))


def foreground_mask(fof: FofGrid, threshold: float = 1e-9) -> np.ndarray:
    """Pixels whose coefficient vector has max-abs entry above ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return np.abs(fof.channels).max(axis=2) > threshold


def fof_l1(pred: FofGrid, gt: FofGrid, mask: np.ndarray) -> float:
    """Mean per-pixel L1 coefficient difference over the masked pixels."""
    if pred.channels.shape != gt.channels.shape:
        raise ValueError("pred and gt dimensions differ")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.channels.shape[:2]:
        raise ValueError("mask does not match the field size")
    if not mask.any():
        raise ValueError("mask is empty")
    diff = np.abs(pred.channels[mask] - gt.channels[mask]).sum(axis=1)
    return float(diff.mean())


def add_relative_noise(fof: FofGrid, level: float, seed: int, mask: np.ndarray) -> FofGrid:
    """Gaussian noise on masked pixels, std = level * RMS of each channel there."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    mask = np.asarray(mask, dtype=bool)
    if level == 0 or not mask.any():
        return FofGrid(fof.channels.copy())
    fg = fof.channels[mask].astype(np.float64)
    rms = np.sqrt(np.mean(fg ** 2, axis=0))
    rng = np.random.default_rng(seed)
    out = fof.channels.astype(np.float64, copy=True)
    out[mask] = fg + rng.standard_normal(fg.shape) * (level * rms)
    return FofGrid(out)


def truncation_l2_error(intervals, order: int) -> float:
    """``integral (f - f_N)^2 dz`` over [-1, 1], via Parseval from the endpoints."""
    iv = as_interval_set(intervals)
    c = encode_interval_set(iv, order)
    energy = c[0] ** 2 / 2.0 + np.sum(c[1:] ** 2)
    return float(np.sum(iv[:, 1] - iv[:, 0]) - energy)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def write_fof(fof: FofGrid, path) -> None:
    """Little-endian ``FOF1`` header (W, H, C as u32) then float32 rows, channel fastest."""
    w, h, c = fof.channels.shape
    # row-major pixel order: row j outer, column i inner
    payload = np.ascontiguousarray(fof.channels.transpose(1, 0, 2), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w, h, c))
        fh.write(payload.tobytes())


def read_fof(path) -> FofGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FofFormatError(f"{path}: truncated header")
    magic, w, h, c = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FofFormatError(f"{path}: bad magic {magic!r}")
    if c < 3 or c % 2 == 0 or w == 0 or h == 0:
        raise FofFormatError(f"{path}: invalid dimensions {w}x{h}x{c}")
    nbytes = 4 * w * h * c
    if nbytes > _MAX_BYTES:
        raise FofFormatError(f"{path}: dimensions {w}x{h}x{c} overflow")
    if len(data) != _HEADER.size + nbytes:
        raise FofFormatError(f"{path}: expected {nbytes} payload bytes, got {len(data) - _HEADER.size}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    return FofGrid(arr.transpose(1, 0, 2).astype(np.float32))


# ---------------------------------------------------------------------------
# 1D curves
# ---------------------------------------------------------------------------


def occupancy_curves(intervals, orders, samples: int = 512) -> dict:
    """Exact and truncated occupancy along one line on a uniform z grid."""
    iv = as_interval_set(intervals)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    orders = list(orders)
    if not orders or any(n < 1 for n in orders):
        raise ValueError("orders must be >= 1")
    z = np.linspace(-1.0, 1.0, samples)
    curves = {"z": z, "f_exact": interval_occupancy(iv, z)}
    c = encode_interval_set(iv, max(orders))
    for n in orders:
        curves[f"fhat_{n}"] = evaluate_series(c[: 2 * n + 1], z)
    return curves


def write_curves_csv(curves: dict, path) -> None:
    keys = list(curves)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in zip(*(curves[k] for k in keys)):
            w.writerow([repr(float(x)) for x in row])
