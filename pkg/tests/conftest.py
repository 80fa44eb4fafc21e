import numpy as np
import pytest

from hac_refine.grid import GridMeta, Volume3


@pytest.fixture
def unit_meta():
    return GridMeta(shape=(8, 8, 8), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0))


def random_volume(meta, rng, lo=-1.0, hi=1.0):
    data = rng.uniform(lo, hi, size=meta.shape)
    return Volume3(meta, data)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
