"""Depression filling, D8 routing and flow accumulation.

D8 codes follow the ESRI convention, clockwise from East::

    32  64  128
    16   x    1
     8   4    2

Code 0 marks an outlet (a border or NoData-adjacent cell with no lower
neighbour).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .raster import Grid, check_geometry

D8_CODES = (1, 2, 4, 8, 16, 32, 64, 128)
D8_OFFSETS = {1: (0, 1), 2: (1, 1), 4: (1, 0), 8: (1, -1),
              16: (0, -1), 32: (-1, -1), 64: (-1, 0), 128: (-1, 1)}


class RoutingError(ValueError):
    """D8 routing met a cell that cannot drain (an unfilled depression)."""


@dataclass(frozen=True)
class FlowField:
    """D8 receivers plus a topological order of the valid cells.

    ``topo_order`` lists flat (row-major) indices such that every cell comes
    before its receiver.
    """

    dirs: np.ndarray
    topo_order: np.ndarray
    grid: Grid  # carries geometry and the valid mask

    @property
    def valid(self) -> np.ndarray:
        return self.grid.valid

    def receivers(self) -> np.ndarray:
        """Flat receiver index per cell, -1 for outlets and invalid cells."""
        nrows, ncols = self.dirs.shape
        recv = np.full(nrows * ncols, -1, dtype=np.int64)
        flat = self.dirs.ravel()
        rows, cols = np.divmod(np.arange(flat.size), ncols)
        for code, (dr, dc) in D8_OFFSETS.items():
            sel = flat == code
            recv[sel] = (rows[sel] + dr) * ncols + cols[sel] + dc
        return recv

    def to_grid(self) -> Grid:
        """D8 codes as a grid (for debugging / persistence)."""
        return self.grid.like(self.dirs.astype(np.float64), self.grid.valid)

    @classmethod
    def from_grid(cls, codes: Grid) -> "FlowField":
        dirs = np.where(codes.valid, codes.values, 0).astype(np.uint8)
        bad = ~np.isin(dirs, (0,) + D8_CODES)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(f"invalid D8 code at row {r}, col {c}")
        try:
            order = kernels.topological_order(dirs, codes.valid)
        except ValueError as exc:
            raise RoutingError(str(exc)) from None
        return cls(dirs, order, codes)


def fill_depressions(dem: Grid, epsilon: float = 1e-5) -> Grid:
    """Priority-flood depression filling with an epsilon gradient.

    Cells are flooded inwards from the raster border and from cells adjacent
    to NoData; any cell not strictly above the cell it was reached from is
    raised to that cell's elevation plus ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not dem.valid.any():
        raise ValueError("DEM has no valid cells")
    filled = kernels.priority_flood(dem.values, dem.valid, float(epsilon))
    return dem.like(filled, dem.valid)


def d8_flow_direction(hydrodem: Grid) -> FlowField:
    try:
        dirs = kernels.d8_directions(hydrodem.values, hydrodem.valid, float(hydrodem.cellsize))
        order = kernels.topological_order(dirs, hydrodem.valid)
    except ValueError as exc:
        raise RoutingError(str(exc)) from None
    return FlowField(dirs, order, hydrodem)


def flow_accumulation(flow: FlowField, weights: Grid | None = None) -> Grid:
    """Upstream cell count (or weight sum), excluding the cell itself.

    With ``weights``, a cell whose contributing area contains a NoData weight
    is itself NoData.
    """
    n = flow.dirs.size
    if weights is None:
        w = np.ones(n)
        wv = np.ones(n, dtype=np.uint8)
    else:
        check_geometry(flow.grid, weights)
        w = np.where(weights.valid, weights.values, 0.0).ravel()
        wv = weights.valid.ravel().astype(np.uint8)
    acc, ok = kernels.accumulate(flow.dirs, flow.topo_order, w, wv)
    valid = flow.valid & ok.reshape(flow.dirs.shape).astype(bool)
    return flow.grid.like(acc.reshape(flow.dirs.shape), valid)


def extract_streams(facc: Grid, threshold_cells: float) -> np.ndarray:
    """Channel mask: valid cells with at least ``threshold_cells`` upstream cells."""
    if not threshold_cells > 0:
        raise ValueError("threshold_cells must be positive")
    return facc.valid & (facc.values >= threshold_cells)
