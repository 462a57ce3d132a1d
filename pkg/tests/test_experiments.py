from __future__ import annotations

import math

import numpy as np
import pytest

from fof import codec
from fof.experiments import (BenchResult, ExperimentConfig, SweepRow, ablate_orders, bench,
                             linear_fit_r2, mesh_to_fof, noise_sweep)
from fof.geometry import make_shape, save_mesh
from fof.surface import extract_mesh


def small(**kw) -> ExperimentConfig:
    base = dict(shape="sphere:r=0.6", grid=(64, 64), zsamples=64, sample_count=4000,
                image_size=(64, 64))
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", orders=(7, 3))
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", orders=(0, 3))
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", noise_levels=(0.1, 0.0))
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", noise_levels=(-0.1,))
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", grid=(1, 64))
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", zsamples=5000)


def test_config_needs_exactly_one_source(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig().load()
    with pytest.raises(ValueError):
        ExperimentConfig(shape="sphere", mesh_path="a.obj").load()


def test_config_normalizes_files_only(tmp_path):
    path = tmp_path / "box.obj"
    save_mesh(make_shape("box", {"hx": 0.25, "hy": 0.25, "hz": 0.25}), path)
    from_file = ExperimentConfig(mesh_path=str(path), margin=0.0).load()
    assert np.abs(from_file.vertices).max() == pytest.approx(1.0)
    synthetic = ExperimentConfig(shape="box:hx=0.25,hy=0.25,hz=0.25").load()
    assert np.abs(synthetic.vertices).max() == pytest.approx(0.25)


def test_ablation_single_order_single_row():
    rows = ablate_orders(small(orders=[15]))
    assert len(rows) == 1
    assert rows[0].value == 15 and rows[0].status == "ok"


def test_ablation_rows_finite_and_decreasing_at_low_orders():
    rows = ablate_orders(small(orders=[3, 7, 15]))
    assert [r.value for r in rows] == [3, 7, 15]
    for r in rows:
        assert all(math.isfinite(v) and v >= 0 for v in (r.chamfer, r.p2s, r.normal_error))
    assert rows[0].p2s > rows[1].p2s > rows[2].p2s


def test_ablation_truncation_equals_reencoding():
    cfg = small(orders=[3, 7])
    gt = cfg.load()
    rows = ablate_orders(cfg, gt)
    direct = []
    for n in (3, 7):
        fof, _ = mesh_to_fof(gt, 64, 64, n)
        direct.append(extract_mesh(fof, (64, 64, 64)))
    from fof.experiments import Evaluator
    ev = Evaluator(gt, cfg.sample_count, cfg.seed, cfg.image_size)
    for row, mesh in zip(rows, direct):
        assert row.csv_row() == ev.row(row.value, mesh).csv_row()


def test_thin_slab_is_a_failure_row_at_low_order():
    rows = ablate_orders(small(shape="slab:thickness=0.02", grid=(128, 128), zsamples=256,
                               orders=[7, 31]))
    low, high = rows
    assert low.status == "empty" or low.p2s > 5 * 0.02
    assert high.status == "ok" and high.p2s <= 0.01


def test_empty_row_csv():
    row = SweepRow(7, float("nan"), float("nan"), float("nan"), "empty")
    assert row.csv_row() == "7,nan,nan,nan,empty"
    assert SweepRow(0.05, 0.1, 0.2, 0.3).csv_row() == "0.05,0.1,0.2,0.3,ok"


def test_noise_level_zero_equals_baseline():
    cfg = small(noise_levels=[0.0, 0.1], order=7)
    rows = noise_sweep(cfg)
    baseline = ablate_orders(small(orders=[7]))[0]
    assert rows[0].csv_row().split(",")[1:] == baseline.csv_row().split(",")[1:]
    assert rows[1].p2s > rows[0].p2s


def test_noise_sub_seeds_independent_of_other_levels():
    a = noise_sweep(small(noise_levels=[0.0, 0.1, 0.2], order=7))
    b = noise_sweep(small(noise_levels=[0.0, 0.1], order=7))
    assert a[1].csv_row() == b[1].csv_row()


def test_bench_results():
    mesh = make_shape("sphere")
    results = bench(mesh, (32, 32), 32, orders=(3, 7), repeats=2)
    assert [r.order for r in results] == [3, 7]
    assert all(r.raster_s > 0 and r.encode_s > 0 and r.decode_s > 0 for r in results)
    assert BenchResult.HEADER == "order,raster_s,encode_s,decode_s"
    assert results[0].csv_row().startswith("3,")
    with pytest.raises(ValueError):
        bench(mesh, (32, 32), 32, repeats=0)


def test_linear_fit_r2():
    x = np.arange(10.0)
    assert linear_fit_r2(x, 3 * x + 1) == pytest.approx(1.0)
    assert linear_fit_r2(x, np.ones(10)) == 1.0
    noisy = 3 * x + np.random.default_rng(0).normal(size=10) * 5
    assert 0 < linear_fit_r2(x, noisy) < 1


def test_mesh_to_fof_reports_warnings():
    fof, warnings = mesh_to_fof(make_shape("torus"), 32, 32, 5)
    assert warnings == 0
    assert isinstance(fof, codec.FofGrid) and fof.channels.shape == (32, 32, 11)
