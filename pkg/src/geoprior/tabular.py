"""Per-slope-unit tables: zonal statistics, CSV I/O and feature assembly."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .raster import Grid, check_geometry

log = logging.getLogger(__name__)

ZONAL_STATS = ("mean", "std", "max", "min", "circular_mean_deg")
MISSING_TOKENS = {"", "na", "nan", "null"}


class TableError(ValueError):
    pass


@dataclass
class FeatureTable:
    """Rows keyed by slope-unit id with named numeric columns.

    ``columns`` preserves insertion order; ``label`` is an optional 0/1 array.
    ``meta`` carries bookkeeping such as join drop counts.
    """

    su_id: np.ndarray
    columns: dict = field(default_factory=dict)
    label: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.su_id = np.asarray(self.su_id, dtype=np.int64)
        if self.su_id.ndim != 1:
            raise TableError("su_id must be one-dimensional")
        n = self.su_id.size
        cols = {}
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=np.float64)
            if col.shape != (n,):
                raise TableError(f"column {name!r} has {col.size} values, expected {n}")
            cols[str(name)] = col
        self.columns = cols
        if self.label is not None:
            lab = np.asarray(self.label)
            if lab.shape != (n,):
                raise TableError("label length does not match su_id")
            if not np.all((lab == 0) | (lab == 1)):
                raise TableError("labels must be 0 or 1")
            self.label = lab.astype(np.int64)
        if np.unique(self.su_id).size != n:
            dup = _first_duplicate(self.su_id)
            raise TableError(f"duplicate su_id {dup}")

    def __len__(self):
        return self.su_id.size

    @property
    def names(self) -> list:
        return list(self.columns)

    def missing_counts(self) -> dict:
        return {k: int(np.isnan(v).sum()) for k, v in self.columns.items()}

    def matrix(self, names=None) -> np.ndarray:
        names = self.names if names is None else list(names)
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise TableError(f"missing feature column(s): {', '.join(missing)}")
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.columns[n] for n in names])

    def take(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(
            self.su_id[idx],
            {k: v[idx] for k, v in self.columns.items()},
            None if self.label is None else self.label[idx],
            dict(self.meta),
        )

    def drop(self, *names) -> "FeatureTable":
        return FeatureTable(
            self.su_id,
            {k: v for k, v in self.columns.items() if k not in names},
            self.label,
            dict(self.meta),
        )

    def with_label(self, label) -> "FeatureTable":
        return FeatureTable(self.su_id, dict(self.columns), label, dict(self.meta))


def _first_duplicate(ids):
    vals, counts = np.unique(ids, return_counts=True)
    return int(vals[counts > 1][0])


def _su_index(su_labels: Grid):
    lab = su_labels.values
    inside = su_labels.valid & (lab > 0)
    if np.any(inside & (lab != np.round(lab))):
        raise TableError("slope-unit labels must be integers")
    return inside, lab.astype(np.int64)


def zonal_statistics(raster: Grid, su_labels: Grid, stat: str, name: str | None = None) -> FeatureTable:
    """Per-slope-unit statistic over the raster's valid cells.

    ``std`` is the population standard deviation; ``circular_mean_deg`` treats
    values as azimuths in degrees and returns a result in [0, 360).
    """
    if stat not in ZONAL_STATS:
        raise TableError(f"unknown statistic {stat!r}; choose from {ZONAL_STATS}")
    check_geometry(raster, su_labels)
    inside, lab = _su_index(su_labels)
    all_ids = np.unique(lab[inside])
    use = inside & raster.valid
    ids, inv = np.unique(lab[use], return_inverse=True)
    vals = raster.values[use]
    dropped = np.setdiff1d(all_ids, ids)
    if dropped.size:
        log.warning("%d slope unit(s) have no valid cells for %s; omitted", dropped.size, stat)
    count = np.bincount(inv, minlength=ids.size).astype(np.float64)
    if stat == "mean":
        out = np.bincount(inv, vals, ids.size) / count
    elif stat == "std":
        mean = np.bincount(inv, vals, ids.size) / count
        out = np.sqrt(np.bincount(inv, (vals - mean[inv]) ** 2, ids.size) / count)
    elif stat == "max":
        out = np.full(ids.size, -np.inf)
        np.maximum.at(out, inv, vals)
    elif stat == "min":
        out = np.full(ids.size, np.inf)
        np.minimum.at(out, inv, vals)
    else:
        rad = np.radians(vals)
        s = np.bincount(inv, np.sin(rad), ids.size) / count
        c = np.bincount(inv, np.cos(rad), ids.size) / count
        out = np.degrees(np.arctan2(s, c)) % 360.0
        # round-off can land exactly on 360 after the modulo
        out[out >= 360.0] = 0.0
    return FeatureTable(ids, {name or stat: out})


def assemble_feature_table(gpk: FeatureTable, covariate_tables=(), labels: FeatureTable | None = None
                           ) -> FeatureTable:
    """Inner-join the GPK table, covariate tables and optional labels on su_id.

    Each entry of ``covariate_tables`` is ``(name, table)``. A one-column table
    contributes a column called ``name``; wider tables keep their own column
    names. Rows lost to the join, or carrying missing covariate values, are
    dropped and counted in ``meta['dropped_rows']``.
    """
    if "gpk" not in gpk.columns:
        raise TableError("gpk table needs a 'gpk' column")
    pieces = [{"gpk": gpk.columns["gpk"]}]
    tables = [gpk]
    names = ["gpk"]
    for cname, tab in covariate_tables:
        if len(tab.columns) == 1:
            cols = {cname: next(iter(tab.columns.values()))}
        else:
            cols = dict(tab.columns)
        for k in cols:
            if k in names:
                raise TableError(f"duplicate covariate name {k!r}")
            names.append(k)
        pieces.append(cols)
        tables.append(tab)
    if labels is not None:
        if labels.label is None:
            raise TableError("labels table carries no label column")
        tables.append(labels)

    common = tables[0].su_id
    for t in tables[1:]:
        common = np.intersect1d(common, t.su_id)
    columns = {}
    for tab, cols in zip(tables, pieces):
        pos = _positions(tab.su_id, common)
        for k, v in cols.items():
            columns[k] = v[pos]
    label = None
    if labels is not None:
        label = labels.label[_positions(labels.su_id, common)]

    keep = np.ones(common.size, dtype=bool)
    for v in columns.values():
        keep &= ~np.isnan(v)
    union = tables[0].su_id
    for t in tables[1:]:
        union = np.union1d(union, t.su_id)
    dropped = union.size - int(keep.sum())
    if dropped:
        log.warning("feature assembly dropped %d row(s) (join or missing values)", dropped)
    table = FeatureTable(common[keep], {k: v[keep] for k, v in columns.items()},
                         None if label is None else label[keep])
    table.meta["dropped_rows"] = dropped
    table.meta["dropped_by_input"] = [len(t) - int(keep.sum()) for t in tables]
    return table


def _positions(ids, wanted):
    order = np.argsort(ids)
    return order[np.searchsorted(ids, wanted, sorter=order)]


def read_feature_csv(path, label_column: str | None = None, su_id_column: str = "su_id"
                     ) -> FeatureTable:
    """Read a slope-unit CSV.

    Every column other than ``su_id`` and the label becomes a numeric column;
    empty, ``NA`` and ``nan`` cells are stored as NaN.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TableError(f"{path}: empty CSV") from None
        rows = list(reader)
    if su_id_column not in header:
        raise TableError(f"{path}: missing {su_id_column!r} column")
    if label_column is not None and label_column not in header:
        raise TableError(f"{path}: missing label column {label_column!r}")
    if len(set(header)) != len(header):
        raise TableError(f"{path}: duplicate column names in header")
    id_pos = header.index(su_id_column)
    lab_pos = header.index(label_column) if label_column is not None else None
    feat_pos = [i for i in range(len(header)) if i not in (id_pos, lab_pos)]
    ids, labels = [], []
    data = [[] for _ in feat_pos]
    for r, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TableError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        try:
            sid = float(row[id_pos])
        except ValueError:
            raise TableError(f"{path}: row {r}: su_id {row[id_pos]!r} is not an integer") from None
        if sid != int(sid):
            raise TableError(f"{path}: row {r}: su_id {row[id_pos]!r} is not an integer")
        ids.append(int(sid))
        if lab_pos is not None:
            tok = row[lab_pos].strip()
            try:
                lab = float(tok)
            except ValueError:
                lab = math.nan
            if lab not in (0.0, 1.0):
                raise TableError(f"{path}: row {r}: label {tok!r} is not 0 or 1")
            labels.append(int(lab))
        for k, i in enumerate(feat_pos):
            tok = row[i].strip()
            if tok.lower() in MISSING_TOKENS:
                data[k].append(math.nan)
                continue
            try:
                val = float(tok)
            except ValueError:
                raise TableError(
                    f"{path}: row {r}, column {header[i]!r}: non-numeric value {tok!r}") from None
            if not math.isfinite(val):
                raise TableError(f"{path}: row {r}, column {header[i]!r}: non-finite value {tok!r}")
            data[k].append(val)
    cols = {header[i]: np.array(d, dtype=np.float64) for i, d in zip(feat_pos, data)}
    return FeatureTable(np.array(ids, dtype=np.int64), cols,
                        np.array(labels, dtype=np.int64) if lab_pos is not None else None)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_feature_csv(table: FeatureTable, path, label_column: str = "label") -> None:
    """Write ``su_id``, the feature columns in order, then the label (if any)."""
    header = ["su_id"] + table.names
    if table.label is not None:
        header.append(label_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = [table.columns[k] for k in table.names]
        for i in range(len(table)):
            row = [str(int(table.su_id[i]))] + [_fmt(c[i]) for c in cols]
            if table.label is not None:
                row.append(str(int(table.label[i])))
            w.writerow(row)
