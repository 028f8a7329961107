"""Morphometric geomorphic prior from a DEM.

Pipeline: drainage area ``A = ln((Facc + 1) r^2)``, mean upslope gradient
``beta = (Facc_S + S) / (Facc + 1)``, the empirical joint CDF of (A, beta)
over the retained cells, masking, and max-aggregation to slope units.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import hydrology, raster, terrain
from ._backend import kernels
from .raster import Grid, check_geometry, check_mask
from .tabular import FeatureTable, TableError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MorphometricParams:
    """Knobs of the prior. ``stream_threshold`` has no sensible default."""

    slope_threshold: float
    buffer_width: float
    stream_threshold: float
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.slope_threshold < 0:
            raise ValueError("slope_threshold must be >= 0")
        if self.buffer_width < 0:
            raise ValueError("buffer_width must be >= 0")
        if not self.stream_threshold > 0:
            raise ValueError("stream_threshold must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class PriorField:
    prior: Grid
    population_mask: np.ndarray


@dataclass(frozen=True)
class HydroProducts:
    """Threshold-independent rasters shared by every prior configuration."""

    dem: Grid
    hydrodem: Grid
    flow: hydrology.FlowField
    facc: Grid
    facc_w: Grid
    slope: Grid
    streams: np.ndarray


def drainage_area_log(facc: Grid, cellsize: float) -> Grid:
    if not cellsize > 0:
        raise ValueError("cellsize must be positive")
    vals = facc.masked(0.0)
    if np.any(vals < 0):
        raise ValueError("flow accumulation must be non-negative")
    return facc.like(np.log((vals + 1.0) * cellsize * cellsize), facc.valid)


def mean_upslope_gradient(facc: Grid, facc_weighted_by_slope: Grid, slope: Grid) -> Grid:
    """Mean slope (degrees) over each cell's contributing area, itself included."""
    check_geometry(facc, facc_weighted_by_slope, slope)
    ok = facc.valid & facc_weighted_by_slope.valid & slope.valid
    beta = (facc_weighted_by_slope.masked(0.0) + slope.masked(0.0)) / (facc.masked(0.0) + 1.0)
    return facc.like(beta, ok)


def joint_cdf(A: Grid, beta: Grid, population: np.ndarray) -> PriorField:
    """Empirical joint CDF of (A, beta) evaluated at each population cell.

    ``prior(i) = #{j : A_j <= A_i and beta_j <= beta_i} / n`` over the
    population, counting i itself. Cells outside the population are NoData.
    """
    check_geometry(A, beta)
    population = check_mask(population, A)
    if not population.any():
        raise ValueError("empty JCDF population")
    if np.any(population & ~(A.valid & beta.valid)):
        raise ValueError("population contains cells without A or beta")
    a = A.values[population]
    b = beta.values[population]
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("A and beta must be finite on the population")
    counts = kernels.dominance_counts(a, b)
    out = np.zeros(A.shape)
    out[population] = counts / counts.size
    return PriorField(A.like(out, population), population.copy())


def dominance_counts(a, b) -> np.ndarray:
    """Integer dominance counts behind :func:`joint_cdf` (self-inclusive)."""
    return kernels.dominance_counts(np.asarray(a, dtype=np.float64),
                                    np.asarray(b, dtype=np.float64))


def apply_prior_masks(field: PriorField, slope: Grid, params: MorphometricParams,
                      stream_buffer: np.ndarray, exterior: np.ndarray) -> PriorField:
    """Zero out sub-threshold, buffered and hole cells; exterior becomes NoData."""
    prior = field.prior
    check_geometry(prior, slope)
    stream_buffer = check_mask(stream_buffer, prior)
    exterior = check_mask(exterior, prior)
    vals = prior.masked(0.0)
    zero = ~field.population_mask.copy()
    zero |= ~slope.valid | (slope.masked(0.0) < params.slope_threshold)
    zero |= stream_buffer
    vals = np.where(zero, 0.0, vals)
    population = field.population_mask & ~zero & ~exterior
    return PriorField(prior.like(vals, ~exterior), population)


def compute_hydrology(dem: Grid, epsilon: float = 1e-5, stream_threshold: float = 100.0
                      ) -> HydroProducts:
    hydrodem = hydrology.fill_depressions(dem, epsilon)
    flow = hydrology.d8_flow_direction(hydrodem)
    facc = hydrology.flow_accumulation(flow)
    slope = terrain.slope_degrees(dem)
    facc_w = hydrology.flow_accumulation(flow, slope)
    streams = hydrology.extract_streams(facc, stream_threshold)
    return HydroProducts(dem, hydrodem, flow, facc, facc_w, slope, streams)


def prior_from_rasters(facc: Grid, facc_w: Grid, slope: Grid, streams: np.ndarray,
                       valid: np.ndarray, params: MorphometricParams) -> PriorField:
    """Full masked prior from stored hydrology rasters."""
    check_geometry(facc, facc_w, slope)
    exterior = raster.exterior_mask(valid)
    A = drainage_area_log(facc, facc.cellsize)
    beta = mean_upslope_gradient(facc, facc_w, slope)
    buffer = raster.buffer_mask(streams, params.buffer_width, facc.cellsize)
    population = (valid & A.valid & beta.valid & slope.valid
                  & (slope.masked(-np.inf) >= params.slope_threshold) & ~buffer)
    if population.any():
        field = joint_cdf(A, beta, population)
    else:
        log.warning("no cells survive the slope threshold and buffers; prior is all zero")
        field = PriorField(facc.like(np.zeros(facc.shape), np.zeros(facc.shape, bool)),
                           population)
    return apply_prior_masks(field, slope, params, buffer, exterior)


def compute_prior(hydro: HydroProducts, params: MorphometricParams) -> PriorField:
    return prior_from_rasters(hydro.facc, hydro.facc_w, hydro.slope, hydro.streams,
                              hydro.dem.valid, params)


def aggregate_prior_to_su(field: PriorField, su_labels: Grid) -> FeatureTable:
    """GPK per slope unit: maximum prior over its non-exterior cells."""
    prior = field.prior
    check_geometry(prior, su_labels)
    lab = su_labels.values
    inside = su_labels.valid & (lab > 0)
    if not inside.any():
        raise TableError("no slope-unit ids present")
    if np.any(inside & (lab != np.round(lab))):
        raise TableError("slope-unit labels must be integers")
    lab = lab.astype(np.int64)
    all_ids = np.unique(lab[inside])
    use = inside & prior.valid
    ids, inv = np.unique(lab[use], return_inverse=True)
    gpk = np.zeros(ids.size)
    np.maximum.at(gpk, inv, prior.values[use])
    dropped = np.setdiff1d(all_ids, ids)
    if dropped.size:
        log.warning("%d slope unit(s) lie entirely in exterior NoData; dropped", dropped.size)
    return FeatureTable(ids, {"gpk": gpk})


@dataclass(frozen=True)
class SensitivityResult:
    rows: list  # dicts: slope_threshold, buffer_m, auc, brier, error
    best: MorphometricParams | None


def score_gpk(gpk: FeatureTable, su_truth: FeatureTable):
    """AUC and Brier of the raw GPK against observed slope-unit labels."""
    from .evaluation import auc_roc, brier_score

    common, gi, ti = np.intersect1d(gpk.su_id, su_truth.su_id, return_indices=True)
    if common.size == 0:
        raise TableError("GPK and truth tables share no slope units")
    scores = gpk.columns["gpk"][gi]
    y = su_truth.label[ti]
    return auc_roc(y, scores), brier_score(y, scores)


def sensitivity_search(dem: Grid, su_labels: Grid, su_truth: FeatureTable, slope_thresholds,
                       buffer_widths, fixed: MorphometricParams, hydro: HydroProducts | None = None
                       ) -> SensitivityResult:
    """Grid search over (slope threshold, buffer width) scored against labels.

    Best = highest AUC, then lowest Brier, then first in grid order. Failures
    of individual configurations are recorded in the row, not raised.
    """
    slope_thresholds = list(slope_thresholds)
    buffer_widths = list(buffer_widths)
    if not slope_thresholds or not buffer_widths:
        raise ValueError("threshold and buffer lists must be non-empty")
    if su_truth.label is None:
        raise TableError("truth table needs labels")
    check_geometry(dem, su_labels)
    if hydro is None:
        hydro = compute_hydrology(dem, fixed.epsilon, fixed.stream_threshold)
    rows = []
    best_key, best = None, None
    for thr in slope_thresholds:
        for buf in buffer_widths:
            row = {"slope_threshold": float(thr), "buffer_m": float(buf),
                   "auc": float("nan"), "brier": float("nan"), "error": ""}
            try:
                params = replace(fixed, slope_threshold=float(thr), buffer_width=float(buf))
                field = compute_prior(hydro, params)
                gpk = aggregate_prior_to_su(field, su_labels)
                row["auc"], row["brier"] = score_gpk(gpk, su_truth)
            except Exception as exc:  # recorded, not fatal
                row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                continue
            rows.append(row)
            key = (row["auc"], -row["brier"])
            if best_key is None or key > best_key:
                best_key, best = key, params
    return SensitivityResult(rows, best)
