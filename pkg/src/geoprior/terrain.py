"""Horn (1981) slope and aspect components."""
from __future__ import annotations

import numpy as np

from .raster import Grid


def _window_valid(valid: np.ndarray) -> np.ndarray:
    """True where the full 3x3 window is inside the raster and valid."""
    nrows, ncols = valid.shape
    padded = np.zeros((nrows + 2, ncols + 2), dtype=bool)
    padded[1:-1, 1:-1] = valid
    ok = np.ones_like(valid, dtype=bool)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            ok &= padded[dr:dr + nrows, dc:dc + ncols]
    return ok


def horn_gradients(dem: Grid):
    """Return ``(dz/dx, dz/dy, ok)`` with x east and y north.

    ``ok`` marks cells whose 3x3 window is entirely valid; gradients are zero
    elsewhere.
    """
    z = np.pad(dem.masked(0.0), 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    r = dem.cellsize
    gx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * r)
    gy = ((a + 2.0 * b + c) - (g + 2.0 * h + i)) / (8.0 * r)
    ok = _window_valid(dem.valid)
    return np.where(ok, gx, 0.0), np.where(ok, gy, 0.0), ok


def slope_degrees(dem: Grid) -> Grid:
    gx, gy, ok = horn_gradients(dem)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))
    return dem.like(slope, ok)


def aspect_components(dem: Grid):
    """Easterness and northerness of the downslope azimuth.

    Azimuth is measured clockwise from North, so easterness = sin(azimuth)
    and northerness = cos(azimuth). Flat cells get (0, 0).
    """
    gx, gy, ok = horn_gradients(dem)
    mag = np.hypot(gx, gy)
    flat = mag == 0.0
    safe = np.where(flat, 1.0, mag)
    east = np.where(flat, 0.0, -gx / safe)
    north = np.where(flat, 0.0, -gy / safe)
    return dem.like(east, ok), dem.like(north, ok)


def aspect_degrees(dem: Grid) -> Grid:
    """Downslope azimuth in [0, 360); flat cells are NoData."""
    gx, gy, ok = horn_gradients(dem)
    az = np.degrees(np.arctan2(-gx, -gy)) % 360.0
    return dem.like(az, ok & (np.hypot(gx, gy) > 0))
