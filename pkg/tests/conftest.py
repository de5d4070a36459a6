import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from critheights.escape import heights
from critheights.poly import from_critical_data

DATA = os.path.join(os.path.dirname(__file__), "data")


def random_poly(rng, d, scale=1.0, a_scale=2.0):
    c = (rng.normal(size=d - 1) + 1j * rng.normal(size=d - 1)) * scale
    c = c - c.mean()
    return from_critical_data(list(c), complex(*rng.normal(size=2)) * a_scale)


def shift_locus_poly(rng, d, a_scale=3.0, min_height=1e-3):
    while True:
        f = random_poly(rng, d, a_scale=a_scale)
        h = heights(f)
        if all(h.resolved) and h.heights[-1] > min_height:
            return f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(autouse=True)
def _cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CRITHEIGHTS_CACHE", str(tmp_path / "cache"))
