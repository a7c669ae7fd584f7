import numpy as np
import pytest

from petroseg.phantom import generate_phantom
from petroseg.raster import PhaseMask, Scan


@pytest.fixture(scope="session")
def small_phantom():
    """A 256 px phantom with probes, shared across read-only tests."""
    return generate_phantom(
        256, 256, seed=11, void_radius=(4, 16), aggregate_radius=(8, 32), scan_id="small"
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(123)


def random_mask(rng, width=64, height=64, pitch_um=5.3, unlabeled=False) -> PhaseMask:
    codes = (0, 1, 2, 255) if unlabeled else (0, 1, 2)
    labels = rng.choice(np.array(codes, dtype=np.uint8), size=(height, width))
    return PhaseMask(pitch_um=pitch_um, labels=labels.astype(np.uint8))


def constant_scan(color, width=32, height=32, pitch_um=5.3, scan_id="const") -> Scan:
    pixels = np.tile(np.array(color, dtype=np.uint8), (height, width, 1))
    return Scan(id=scan_id, pitch_um=pitch_um, pixels=pixels)
