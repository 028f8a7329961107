import numpy as np
import pytest
from scipy import ndimage

from geoprior.raster import Grid


def random_dem(rng, n=32, holes=False, smooth=1.5, cellsize=10.0):
    """Rough random terrain, optionally with NoData blobs (holes and edges)."""
    z = ndimage.gaussian_filter(rng.normal(0, 30, (n, n)), smooth) + rng.normal(0, 1, (n, n))
    z += 100.0
    if holes:
        blobs = ndimage.gaussian_filter(rng.random((n, n)), 2) > 0.56
        z = np.where(blobs, -9999.0, z)
    return Grid(z, 0.0, 0.0, cellsize)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, echoed in the terminal summary so `pytest -v` shows them
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
