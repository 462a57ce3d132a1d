from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fof.codec import (MAGIC, FofFormatError, FofGrid, add_relative_noise, basis_vector, decode_at,
                       decode_occupancy, encode_interval_set, encode_intervals, evaluate_series,
                       fof_l1, foreground_mask, occupancy_curves, read_fof, resize_fof,
                       truncate_channels, truncation_l2_error, write_curves_csv, write_fof,
                       z_samples)
from fof.geometry import make_shape
from fof.raster import LayeredIntervalGrid, interval_occupancy, pixel_to_xy, rasterize_intervals

from conftest import random_interval_set


def quadrature_coefficients(intervals, order: int) -> np.ndarray:
    """Oracle: adaptive quadrature of the defining integrals of f(z) times each basis function."""
    iv = np.asarray(intervals).reshape(-1, 2)
    ref = np.zeros(2 * order + 1)
    for a, b in iv:
        ref[0] += quad(lambda z: 1.0, a, b)[0]
        for n in range(1, order + 1):
            w = n * np.pi
            ref[2 * n - 1] += quad(lambda z: np.cos(w * z), a, b, epsabs=1e-13, epsrel=1e-13)[0]
            ref[2 * n] += quad(lambda z: np.sin(w * z), a, b, epsabs=1e-13, epsrel=1e-13)[0]
    return ref


def single_pixel(intervals) -> LayeredIntervalGrid:
    return LayeredIntervalGrid.from_sets([[intervals]], 1, 1)


# --- encoding -----------------------------------------------------------------


def test_full_line_is_constant_one():
    c = encode_interval_set([(-1.0, 1.0)], 7)
    assert c[0] == 2.0
    assert np.max(np.abs(c[1:])) < 1e-15
    np.testing.assert_allclose(evaluate_series(c, np.linspace(-1, 1, 11)), 1.0, atol=1e-14)


def test_empty_line_is_zero():
    grid = LayeredIntervalGrid.from_sets([[[], [(-0.5, 0.5)]]], 1, 2)
    fof = encode_intervals(grid, 5)
    assert np.all(fof.channels[0, 0] == 0)
    assert np.any(fof.channels[0, 1] != 0)


def test_quarter_interval_closed_form():
    c = encode_interval_set([(0.0, 0.5)], 1)
    np.testing.assert_allclose(c, [0.5, 1 / np.pi, 1 / np.pi], atol=1e-15)
    np.testing.assert_allclose(c, quadrature_coefficients([(0.0, 0.5)], 1), atol=1e-12)


def test_order_must_be_positive():
    with pytest.raises(ValueError):
        encode_interval_set([(0, 0.5)], 0)
    with pytest.raises(ValueError):
        encode_intervals(single_pixel([(0, 0.5)]), 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 20))
def test_matches_quadrature(seed, order):
    iv = random_interval_set(np.random.default_rng(seed))
    np.testing.assert_allclose(encode_interval_set(iv, order), quadrature_coefficients(iv, order),
                               rtol=0, atol=1e-8)


def test_matches_full_line_quadrature():
    # the same oracle written against the occupancy function itself
    iv = np.array([(-0.7, -0.2), (0.1, 0.45)])
    c = encode_interval_set(iv, 4)
    for n in range(1, 5):
        an = quad(lambda z: interval_occupancy(iv, z) * np.cos(n * np.pi * z), -1, 1,
                  points=iv.ravel(), epsabs=1e-13, limit=200)[0]
        assert c[2 * n - 1] == pytest.approx(an, abs=1e-10)


def test_dc_equals_inside_length(corpus):
    for iv in corpus[:50]:
        assert encode_interval_set(iv, 3)[0] == np.sum(iv[:, 1] - iv[:, 0])


def test_grid_and_single_set_agree(corpus):
    sets = [[corpus[0], corpus[1]], [corpus[2], []]]
    fof = encode_intervals(LayeredIntervalGrid.from_sets(sets, 2, 2), 9)
    assert fof.channels.shape == (2, 2, 19)
    np.testing.assert_array_equal(fof.channels[1, 0], encode_interval_set(corpus[2], 9))


# --- basis and decoding -------------------------------------------------------


def test_basis_examples():
    np.testing.assert_allclose(basis_vector(0.0, 2), [0.5, 1, 0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(basis_vector(1.0, 1), [0.5, -1, 0], atol=1e-15)
    np.testing.assert_allclose(basis_vector(0.5, 2), [0.5, 0, 1, -1, 0], atol=1e-15)


def test_basis_bounded_and_periodic():
    z = np.linspace(-3, 3, 101)
    b = basis_vector(z, 6)
    assert np.all(b[:, 0] == 0.5)
    assert np.abs(b).max() <= 1.0
    np.testing.assert_allclose(basis_vector(z + 2.0, 6), b, atol=1e-12)


def test_decode_full_and_empty_pixels():
    fof = encode_intervals(LayeredIntervalGrid.from_sets([[[(-1.0, 1.0)]], [[]]], 2, 1), 7)
    x_full, y = pixel_to_xy(0, 0, 2, 1)
    x_empty, _ = pixel_to_xy(1, 0, 2, 1)
    for z in (-0.9, 0.0, 0.3, 1.0):
        assert decode_at(fof, x_full, y, z) == pytest.approx(1.0, abs=1e-14)
        assert decode_at(fof, x_empty, y, z) == 0.0


def test_decode_centered_interval_order_15():
    fof = encode_intervals(single_pixel([(-0.5, 0.5)]), 15)
    assert 0.95 <= decode_at(fof, 0.0, 0.0, 0.0) <= 1.05
    for z in (-0.5, 0.5):
        assert decode_at(fof, 0.0, 0.0, z) == pytest.approx(0.5, abs=0.05)


def test_decode_is_bilinear_and_clamped():
    ch = np.zeros((2, 2, 3))
    ch[1, :, 0] = 2.0  # column 1 is fully occupied
    fof = FofGrid(ch)
    assert decode_at(fof, 0.0, 0.0, 0.1) == pytest.approx(0.5)
    assert decode_at(fof, 0.75, 0.2, 0.1) == pytest.approx(1.0)  # beyond the last centre
    assert decode_at(fof, -1.0, 0.9, 0.1) == pytest.approx(0.0)


def test_decode_occupancy_matches_decode_at(corpus):
    sets = [[corpus[3 * i + j] for j in range(3)] for i in range(4)]
    fof = encode_intervals(LayeredIntervalGrid.from_sets(sets, 4, 3), 11)
    occ = decode_occupancy(fof, 9)
    zs = z_samples(9)
    assert zs[0] == -1.0 and zs[-1] == 1.0
    for i in range(4):
        for j in range(3):
            x, y = pixel_to_xy(i, j, 4, 3)
            np.testing.assert_allclose(occ.values[i, j], decode_at(fof, x, y, zs), rtol=0, atol=1e-12)


def test_decode_occupancy_constant_column():
    occ = decode_occupancy(FofGrid(np.tile([2.0, 0.0, 0.0], (2, 2, 1))), 5)
    np.testing.assert_allclose(occ.values, 1.0)
    with pytest.raises(ValueError):
        decode_occupancy(FofGrid(np.zeros((2, 2, 3))), 1)


def test_sphere_column_crosses_at_radius(sphere_fof_31):
    k = 256
    col = decode_occupancy(sphere_fof_31, k).values[128, 128]
    zs = z_samples(k)
    x, y = pixel_to_xy(128, 128, 256, 256)
    half = np.sqrt(0.6 ** 2 - x * x - y * y)
    inside = zs[col > 0.5]
    assert abs(inside.min() + half) <= 2 / (k - 1)
    assert abs(inside.max() - half) <= 2 / (k - 1)
    assert half == pytest.approx(0.6, abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_decode_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    f1 = FofGrid(rng.normal(size=(3, 4, 7)))
    f2 = FofGrid(rng.normal(size=(3, 4, 7)))
    x, y, z = rng.uniform(-1, 1, size=(3, 5))
    combo = decode_at(alpha * f1 + beta * f2, x, y, z)
    np.testing.assert_allclose(combo, alpha * decode_at(f1, x, y, z) + beta * decode_at(f2, x, y, z),
                               rtol=0, atol=1e-12)


# --- truncation and convergence ----------------------------------------------


def test_truncate_identity_and_size(sphere_fof_31):
    np.testing.assert_array_equal(truncate_channels(sphere_fof_31, 31).channels, sphere_fof_31.channels)
    assert truncate_channels(sphere_fof_31, 15).channels.shape[2] == 31
    with pytest.raises(ValueError):
        truncate_channels(sphere_fof_31, 32)
    with pytest.raises(ValueError):
        truncate_channels(sphere_fof_31, 0)


def test_truncation_nesting_bitwise(corpus):
    sets = [corpus[:100], corpus[100:]]
    grid = LayeredIntervalGrid.from_sets(sets, 2, 100)
    full = encode_intervals(grid, 40)
    for n in (1, 2, 5, 13, 39):
        assert np.array_equal(truncate_channels(full, n).channels, encode_intervals(grid, n).channels)


def test_truncation_nesting_on_mesh(sphere_grid_256, sphere_fof_31):
    assert np.array_equal(truncate_channels(sphere_fof_31, 7).channels,
                          encode_intervals(sphere_grid_256, 7).channels)


def test_parseval_matches_quadrature():
    iv = [(-0.6, -0.1), (0.3, 0.35)]
    c = encode_interval_set(iv, 9)
    err = quad(lambda z: (interval_occupancy(iv, z) - evaluate_series(c, z)) ** 2, -1, 1,
               points=np.ravel(iv), limit=400, epsabs=1e-13)[0]
    assert truncation_l2_error(iv, 9) == pytest.approx(err, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_parseval_error_non_increasing(seed):
    iv = random_interval_set(np.random.default_rng(seed))
    errors = [truncation_l2_error(iv, n) for n in range(1, 40)]
    assert np.all(np.diff(errors) <= 1e-12)
    assert min(errors) >= -1e-12


def test_shift_invariance_of_truncation_error():
    errors = [truncation_l2_error([(-0.7 + d, -0.3 + d)], 15) for d in np.linspace(0, 1.0, 20)]
    assert np.ptp(errors) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.9, 0.5), st.floats(0.4, 1.6))
def test_jump_midpoint_for_isolated_endpoints(start, width):
    # the other jump is at least 0.4 away, also across the period seam
    end = start + width
    if end > 1.0 or 2.0 - width < 0.4:
        return
    c = encode_interval_set([(start, end)], 31)
    assert np.max(np.abs(evaluate_series(c, [start, end]) - 0.5)) <= 0.02


def test_jump_midpoint_converges_with_order():
    iv = [(-0.4, 0.35)]
    dev = [abs(evaluate_series(encode_interval_set(iv, n), 0.35) - 0.5) for n in (3, 15, 63, 255)]
    assert dev[-1] < dev[0]
    assert dev[-1] <= 0.005


# --- resize, masks, noise, l1 -------------------------------------------------


def test_resize_identity_and_constant():
    rng = np.random.default_rng(0)
    fof = FofGrid(rng.normal(size=(6, 5, 5)))
    np.testing.assert_allclose(resize_fof(fof, 6, 5).channels, fof.channels, rtol=0, atol=1e-12)
    const = FofGrid(np.broadcast_to([1.5, -0.25, 0.75], (8, 8, 3)).copy())
    out = resize_fof(const, 13, 3)
    assert out.order == 1
    np.testing.assert_allclose(out.channels, np.broadcast_to([1.5, -0.25, 0.75], (13, 3, 3)))
    with pytest.raises(ValueError):
        resize_fof(fof, 0, 3)


def test_resize_round_trip_smooth_field():
    ii, jj = np.meshgrid(np.arange(512), np.arange(512), indexing="ij")
    x, y = pixel_to_xy(ii, jj, 512, 512)
    ch = np.stack([np.cos(n * x) * np.sin(2 * y + n) + 0.2 * n for n in range(7)], axis=-1)
    fof = FofGrid(ch)
    back = resize_fof(resize_fof(fof, 256, 256), 512, 512)
    rms = np.sqrt(np.mean(ch ** 2, axis=(0, 1)))
    assert np.all(np.abs(back.channels - ch).max(axis=(0, 1)) <= 0.05 * rms)


def test_resize_round_trip_sphere_interior():
    fof = encode_intervals(rasterize_intervals(make_shape("sphere", {"r": 0.6}), 512, 512), 15)
    back = resize_fof(resize_fof(fof, 256, 256), 512, 512)
    ii, jj = np.meshgrid(np.arange(512), np.arange(512), indexing="ij")
    x, y = pixel_to_xy(ii, jj, 512, 512)
    smooth = np.hypot(x, y) < 0.55  # the field is discontinuous at the silhouette
    rms = np.sqrt(np.mean(fof.channels ** 2))
    assert np.abs(back.channels - fof.channels)[smooth].max() <= 0.05 * rms


def test_foreground_mask():
    assert not foreground_mask(FofGrid(np.zeros((4, 4, 3)))).any()
    box = make_shape("box", {"hx": 0.5, "hy": 0.3, "hz": 0.5})
    grid = rasterize_intervals(box, 32, 32)
    mask = foreground_mask(encode_intervals(grid, 7))
    np.testing.assert_array_equal(mask, grid.counts() > 0)
    with pytest.raises(ValueError):
        foreground_mask(FofGrid(np.zeros((1, 1, 3))), -1.0)


def test_noise_over_whole_grid_makes_everything_foreground(sphere_fof_31):
    full = np.ones(sphere_fof_31.channels.shape[:2], dtype=bool)
    noisy = add_relative_noise(sphere_fof_31, 0.05, 0, full)
    assert foreground_mask(noisy).all()


def test_noise_level_zero_and_determinism(sphere_fof_31):
    mask = foreground_mask(sphere_fof_31)
    assert np.array_equal(add_relative_noise(sphere_fof_31, 0.0, 3, mask).channels,
                          sphere_fof_31.channels)
    a = add_relative_noise(sphere_fof_31, 0.1, 3, mask)
    b = add_relative_noise(sphere_fof_31, 0.1, 3, mask)
    assert np.array_equal(a.channels, b.channels)
    assert not np.array_equal(a.channels, add_relative_noise(sphere_fof_31, 0.1, 4, mask).channels)
    assert np.array_equal(a.channels[~mask], sphere_fof_31.channels[~mask])
    with pytest.raises(ValueError):
        add_relative_noise(sphere_fof_31, -0.1, 0, mask)


def test_noise_std_is_relative_to_channel_rms():
    fof = encode_intervals(rasterize_intervals(make_shape("torus", {"axis": "y"}), 256, 256), 7)
    mask = foreground_mask(fof)
    noisy = add_relative_noise(fof, 0.05, 0, mask)
    delta = (noisy.channels - fof.channels)[mask]
    rms = np.sqrt(np.mean(fof.channels[mask] ** 2, axis=0))
    np.testing.assert_allclose(delta.std(axis=0), 0.05 * rms, rtol=0.03)


def test_fof_l1_examples(sphere_fof_31):
    mask = foreground_mask(sphere_fof_31)
    assert fof_l1(sphere_fof_31, sphere_fof_31, mask) == 0.0
    ch = sphere_fof_31.channels.copy()
    ch[100, 120, 4] += 0.1
    one = np.zeros_like(mask)
    one[100, 120] = True
    assert fof_l1(FofGrid(ch), sphere_fof_31, one) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(ValueError):
        fof_l1(sphere_fof_31, sphere_fof_31, np.zeros_like(mask))
    with pytest.raises(ValueError):
        fof_l1(truncate_channels(sphere_fof_31, 3), sphere_fof_31, mask)


def test_fof_l1_of_noise_equals_expected_deviation(sphere_fof_31):
    fof = truncate_channels(sphere_fof_31, 15)
    mask = foreground_mask(fof)
    noisy = add_relative_noise(fof, 0.05, 1, mask)
    rms = np.sqrt(np.mean(fof.channels[mask] ** 2, axis=0))
    expected = np.sum(0.05 * rms) * np.sqrt(2 / np.pi)  # E|N(0, s)| = s sqrt(2/pi)
    assert fof_l1(noisy, fof, mask) == pytest.approx(expected, rel=0.05)


# --- file format --------------------------------------------------------------


def test_file_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(2)
    fof = FofGrid(rng.normal(size=(5, 3, 7)).astype(np.float32))
    path = tmp_path / "a.fof"
    write_fof(fof, path)
    back = read_fof(path)
    assert back.channels.dtype == np.float32
    assert np.array_equal(back.channels, fof.channels)
    # second round trip reproduces the bytes
    write_fof(back, tmp_path / "b.fof")
    assert (tmp_path / "b.fof").read_bytes() == path.read_bytes()


def test_file_layout_is_row_major(tmp_path):
    ch = np.arange(2 * 3 * 3, dtype=np.float32).reshape(2, 3, 3)
    path = tmp_path / "l.fof"
    write_fof(FofGrid(ch), path)
    data = path.read_bytes()
    assert data[:4] == MAGIC
    assert np.frombuffer(data[4:16], "<u4").tolist() == [2, 3, 3]
    payload = np.frombuffer(data[16:], "<f4").reshape(3, 2, 3)  # rows, columns, channels
    np.testing.assert_array_equal(payload[1, 0], ch[0, 1])


def test_file_size(tmp_path):
    path = tmp_path / "s.fof"
    write_fof(FofGrid(np.zeros((256, 256, 31), dtype=np.float32)), path)
    assert path.stat().st_size == 16 + 4 * 256 * 256 * 31


def test_file_errors(tmp_path):
    path = tmp_path / "x.fof"
    write_fof(FofGrid(np.zeros((2, 2, 3))), path)
    data = path.read_bytes()
    cases = {
        "magic": b"FOF2" + data[4:],
        "truncated": data[:-4],
        "header": data[:10],
        "channels": data[:12] + np.array([4], "<u4").tobytes() + data[16:],
        "overflow": data[:4] + np.array([2**31, 2**31, 3], "<u4").tobytes() + data[16:],
    }
    for name, blob in cases.items():
        path.write_bytes(blob)
        with pytest.raises(FofFormatError):
            read_fof(path)


def test_fofgrid_validation():
    with pytest.raises(ValueError):
        FofGrid(np.zeros((2, 2, 4)))
    with pytest.raises(ValueError):
        FofGrid(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        FofGrid(np.full((1, 1, 3), np.inf))
    fof = FofGrid(np.zeros((2, 2, 3)))
    assert (fof.width, fof.height, fof.order) == (2, 2, 1)
    with pytest.raises(ValueError):
        fof.channels[0, 0, 0] = 1.0


# --- 1D curves ----------------------------------------------------------------


def test_curves_columns(tmp_path):
    curves = occupancy_curves([(-0.5, 0.5)], [7, 15, 31], 512)
    assert list(curves) == ["z", "f_exact", "fhat_7", "fhat_15", "fhat_31"]
    assert all(len(v) == 512 for v in curves.values())
    path = tmp_path / "c.csv"
    write_curves_csv(curves, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "z,f_exact,fhat_7,fhat_15,fhat_31"
    assert len(lines) == 513


def test_curves_thin_interval_never_crosses_half():
    curves = occupancy_curves([(-0.01, 0.01)], [7], 2001)
    assert curves["fhat_7"].max() < 0.5


def test_curves_wide_interval_endpoints_near_half():
    iv = [(-0.6, 0.6)]
    c = encode_interval_set(iv, 63)
    for n in (1, 2, 3, 7, 15, 31, 63):
        vals = evaluate_series(c[: 2 * n + 1], [-0.6, 0.6])
        assert np.all(np.abs(vals - 0.5) <= 0.12)


def test_curves_errors():
    with pytest.raises(ValueError):
        occupancy_curves([(0.5, 0.1)], [3])
    with pytest.raises(ValueError):
        occupancy_curves([(0.1, 0.5)], [0])
    with pytest.raises(ValueError):
        occupancy_curves([(0.1, 0.5)], [3], samples=1)
