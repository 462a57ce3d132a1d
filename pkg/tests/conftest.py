from __future__ import annotations

import numpy as np
import pytest

from fof.codec import encode_intervals
from fof.geometry import make_shape
from fof.raster import rasterize_intervals


def random_interval_set(rng: np.random.Generator, max_layers: int = 6, min_width: float = 0.01):
    """Sorted disjoint intervals in [-1, 1], each at least ``min_width`` wide."""
    k = int(rng.integers(1, max_layers + 1))
    while True:
        pts = np.sort(rng.uniform(-1.0, 1.0, 2 * k))
        iv = pts.reshape(k, 2)
        if np.all(iv[:, 1] - iv[:, 0] >= min_width) and np.all(iv[1:, 0] > iv[:-1, 1]):
            return iv


def interval_corpus(count: int = 200, seed: int = 0, min_width: float = 0.01) -> list:
    rng = np.random.default_rng(seed)
    return [random_interval_set(rng, 6, min_width) for _ in range(count)]


@pytest.fixture(scope="session")
def corpus():
    return interval_corpus()


@pytest.fixture(scope="session")
def sphere():
    return make_shape("sphere", {"r": 0.6})


@pytest.fixture(scope="session")
def sphere_grid_256(sphere):
    return rasterize_intervals(sphere, 256, 256)


@pytest.fixture(scope="session")
def sphere_fof_31(sphere_grid_256):
    return encode_intervals(sphere_grid_256, 31)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
