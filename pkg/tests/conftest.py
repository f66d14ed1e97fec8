import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from layersep import perception


@pytest.fixture(scope="session")
def vgg_weights_path(tmp_path_factory):
    """Deterministic surrogate perception weights for offline testing."""
    path = tmp_path_factory.mktemp("weights") / "vgg_surrogate.npz"
    perception.save_random_weights(path, seed=0)
    return path


@pytest.fixture(scope="session")
def vgg(vgg_weights_path):
    return perception.load_vgg(vgg_weights_path)


def smooth_image(seed, h=64, w=64):
    rng = np.random.default_rng(seed)
    x = gaussian_filter(rng.random((h, w, 3)), (3, 3, 0))
    return (x - x.min()) / (x.max() - x.min() + 1e-9)


@pytest.fixture
def make_image():
    return smooth_image
