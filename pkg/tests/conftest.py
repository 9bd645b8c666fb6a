import numpy as np
import pytest


def blobs(n_per=20, seed=0, spread=0.3, dim=2):
    """Three well separated Gaussian blobs with centers on a triangle."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]])
    if dim > 2:
        centers = np.hstack([centers, np.zeros((3, dim - 2))])
    x = np.vstack([c + spread * rng.standard_normal((n_per, dim)) for c in centers])
    y = np.repeat(np.arange(3), n_per)
    return x, y, centers


@pytest.fixture
def three_blobs():
    return blobs()
