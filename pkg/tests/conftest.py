import numpy as np
import pytest

from groupmtl.data import DatasetBundle
from groupmtl.kernels import GramCache, linear_feature_specs


def random_bundle(rng, T=2, m=8, dim=3):
    """Small random dataset with both classes present in every task."""
    xs, ys = [], []
    for _ in range(T):
        x = rng.standard_normal((m, dim))
        while True:
            y = rng.choice([-1.0, 1.0], size=m)
            if np.unique(y).size == 2:
                break
        xs.append(x)
        ys.append(y)
    return DatasetBundle(xs, ys)


def make_cache(bundle, specs=None, **kw):
    if specs is None:
        specs = linear_feature_specs(bundle.dim)
    X, y, slices = bundle.stacked()
    return GramCache(X, y, slices, specs, **kw), specs


@pytest.fixture
def rng():
    return np.random.default_rng(0)
