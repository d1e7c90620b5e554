import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from openended_lab.memory import FeatureView
from openended_lab.metrics import normalize_l1
from openended_lab.offline_eval import Dataset


def random_histogram(rng, dim, positive=True):
    """A strictly positive (or zero-bearing) L1-normalized vector."""
    if positive:
        v = rng.uniform(0.1, 1.0, size=dim)
    else:
        v = rng.uniform(0.0, 1.0, size=dim)
        v[rng.random(dim) < 0.3] = 0.0
        if v.sum() == 0:
            v[0] = 1.0
    return normalize_l1(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def make_feature_dataset(n_categories=4, views_per=12, dim=16, seed=0, deep=False):
    """Random labeled feature views; categories occupy distinct index bands."""
    rng = np.random.default_rng(seed)
    band = dim // n_categories
    views = []
    for ci in range(n_categories):
        for v in range(views_per):
            h = np.full(dim, 0.01)
            h[ci * band : (ci + 1) * band] += rng.uniform(0.5, 1.0, size=band)
            kwargs = {"hand": normalize_l1(h)}
            if deep:
                d = np.full(dim, 0.01)
                d[ci * band : (ci + 1) * band] += rng.uniform(0.5, 1.0, size=band)
                kwargs["deep"] = normalize_l1(d)
            views.append(
                FeatureView(
                    category=f"cat{ci:02d}",
                    instance_id=f"inst{v % 2}",
                    view_id=f"view{v:03d}",
                    **kwargs,
                )
            )
    return Dataset(views=tuple(views), name=f"synthetic-{n_categories}x{views_per}")
