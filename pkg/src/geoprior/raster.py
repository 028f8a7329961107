"""Single-band rasters, ESRI ASCII grid I/O, masks and distance buffers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
DEFAULT_NODATA = -9999.0

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class GridParseError(ValueError):
    """Malformed ASCII grid; the message names the offending line/column."""


class GeometryError(ValueError):
    """Rasters combined in one computation do not share header geometry."""


@dataclass(frozen=True)
class Grid:
    """Georeferenced raster, north row first.

    ``values`` is stored as a read-only float64 array; a cell is valid iff its
    value differs from ``nodata_value``.
    """

    values: np.ndarray
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 1.0
    nodata_value: float = DEFAULT_NODATA
    _valid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2 or vals.size == 0:
            raise ValueError("grid values must be a non-empty 2-D array")
        if not self.cellsize > 0:
            raise ValueError(f"cellsize must be positive, got {self.cellsize}")
        if not math.isfinite(self.nodata_value):
            raise ValueError("nodata_value must be finite")
        vals.setflags(write=False)
        valid = vals != self.nodata_value
        valid.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_valid", valid)

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        return self._valid

    def geometry(self):
        return (self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize)

    def same_geometry(self, other: "Grid") -> bool:
        return self.geometry() == other.geometry()

    def masked(self, fill=np.nan) -> np.ndarray:
        """Copy of the values with invalid cells replaced by ``fill``."""
        return np.where(self._valid, self.values, fill)

    def like(self, values, valid=None) -> "Grid":
        """New grid with this geometry; cells outside ``valid`` become NoData.

        If a valid value collides with this grid's sentinel, a fresh sentinel
        below the data range is chosen.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.shape:
            raise GeometryError(f"shape {values.shape} does not match grid {self.shape}")
        if valid is None:
            valid = np.ones(self.shape, dtype=bool)
        valid = np.asarray(valid, dtype=bool)
        nodata = self.nodata_value
        if np.any(valid & (values == nodata)):
            nodata = DEFAULT_NODATA
            if np.any(valid & (values == nodata)):
                nodata = float(np.floor(values[valid].min())) - 1.0
        out = np.where(valid, values, nodata)
        return Grid(out, self.xllcorner, self.yllcorner, self.cellsize, nodata)


def check_geometry(*grids: Grid) -> None:
    """Raise :class:`GeometryError` unless all grids share header geometry."""
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GeometryError(
                f"grid geometry mismatch: {first.geometry()} vs {g.geometry()}")


def check_mask(mask: np.ndarray, grid: Grid) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise GeometryError(f"mask shape {mask.shape} does not match grid {grid.shape}")
    return mask


def _parse_float(token, lineno, col, nodata):
    try:
        val = float(token)
    except ValueError:
        raise GridParseError(f"line {lineno}, column {col}: not a number: {token!r}") from None
    if not math.isfinite(val) and val != nodata:
        raise GridParseError(f"line {lineno}, column {col}: non-finite value {token!r}")
    return val


def read_ascii_grid(path) -> Grid:
    """Read an ESRI ASCII grid.

    The six header lines must appear in the canonical order; keys are matched
    case-insensitively.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = {}
    for i, key in enumerate(HEADER_KEYS):
        lineno = i + 1
        if i >= len(lines):
            raise GridParseError(f"line {lineno}: missing header key {key!r}")
        parts = lines[i].split()
        if len(parts) != 2:
            raise GridParseError(f"line {lineno}: expected 'key value', got {lines[i]!r}")
        found = parts[0].lower()
        if found != key:
            if found in ("dx", "dy"):
                raise GridParseError(f"line {lineno}: non-square cells ({parts[0]}) unsupported")
            raise GridParseError(f"line {lineno}: expected {key!r}, found {parts[0]!r}")
        header[key] = _parse_float(parts[1], lineno, 2, None)
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise GridParseError("lines 1-2: ncols/nrows must be positive integers")
    ncols, nrows = int(ncols), int(nrows)
    if header["cellsize"] <= 0:
        raise GridParseError("line 5: cellsize must be positive")
    nodata = header["nodata_value"]

    body = lines[6:]
    tokens = []
    token_pos = []
    for j, line in enumerate(body):
        parts = line.split()
        tokens.extend(parts)
        token_pos.extend((j + 7, c + 1) for c in range(len(parts)))
    if len(tokens) != ncols * nrows:
        raise GridParseError(
            f"line {len(lines)}: expected {ncols * nrows} values, found {len(tokens)}")
    try:
        vals = np.array(tokens, dtype=np.float64)
    except ValueError:
        vals = None
    if vals is None or not np.all(np.isfinite(vals) | (vals == nodata)):
        for tok, (lineno, col) in zip(tokens, token_pos):
            _parse_float(tok, lineno, col, nodata)
    return Grid(vals.reshape(nrows, ncols), header["xllcorner"], header["yllcorner"],
                header["cellsize"], nodata)


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def write_ascii_grid(grid: Grid, path) -> None:
    """Write ``grid`` as an ESRI ASCII grid with round-trip exact values."""
    head = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {_fmt(grid.xllcorner)}",
        f"yllcorner {_fmt(grid.yllcorner)}",
        f"cellsize {_fmt(grid.cellsize)}",
        f"nodata_value {_fmt(grid.nodata_value)}",
    ]
    rows = (" ".join(_fmt(v) for v in row) for row in grid.values.tolist())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(head))
        fh.write("\n")
        for row in rows:
            fh.write(row)
            fh.write("\n")


def exterior_mask(valid: np.ndarray) -> np.ndarray:
    """Invalid cells 4-connected to the raster border through invalid cells.

    Invalid cells not in the returned mask are internal holes.
    """
    invalid = ~np.asarray(valid, dtype=bool)
    labels, _ = ndimage.label(invalid, structure=_FOUR_CONNECTED)
    border = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    touching = np.unique(border[border > 0])
    return np.isin(labels, touching) & invalid


def buffer_mask(seed: np.ndarray, radius_m: float, cellsize: float) -> np.ndarray:
    """Cells whose centre lies within ``radius_m`` of some seed cell centre."""
    seed = np.asarray(seed, dtype=bool)
    if radius_m < 0:
        raise ValueError("radius_m must be non-negative")
    if radius_m == 0 or not seed.any():
        return seed.copy()
    dist = ndimage.distance_transform_edt(~seed)
    return (dist * cellsize <= radius_m) | seed
