import numpy as np
import pytest

import glimpsekit as gk


@pytest.fixture(scope="session")
def small_world():
    """16x16 world with a 4x4 grid; small enough for exhaustive oracles."""
    cfg = gk.WorldConfig(k=4, m=2, h=16, w=16, g=4, s=4, blobs=2, blob_size=3,
                         jitter=1, noise=0.05, twin_variant=False, seed=11)
    return gk.build_world(cfg)


@pytest.fixture(scope="session")
def pixel_world():
    """Two classes differing in exactly one pixel."""
    return gk.two_entry_pixel_world(h=8, w=8, g=4, s=4, pixel=(6, 6))


@pytest.fixture()
def rng():
    return gk.SeededRng(1234)
