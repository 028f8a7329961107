"""Synthetic DEMs, slope units and landslide inventories with a planted signal."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import _sigmoid
from .prior import (HydroProducts, MorphometricParams, aggregate_prior_to_su, compute_hydrology,
                    compute_prior)
from .raster import Grid
from .tabular import FeatureTable

DEM_KINDS = ("plane", "cone", "gaussian_hills")


@dataclass(frozen=True)
class DemSpec:
    """Recipe for :func:`generate_dem`.

    ``size`` is an int (square) or ``(nrows, ncols)``. Recognised ``params``:

    plane
        ``gradient`` (rise per metre eastward, default 0.1), ``base``.
    cone
        ``peak`` (default 1000), ``slope`` (drop per metre, default 0.5).
    gaussian_hills
        ``n_hills`` (40), ``amplitude`` (range, (40, 160) m),
        ``sigma`` (range in metres, (120, 400)), ``base`` (100).
    """

    kind: str
    size: int | tuple = 64
    cellsize: float = 10.0
    params: dict = field(default_factory=dict)
    noise_sd: float = 0.0
    seed: int = 0


def _shape(size):
    if isinstance(size, (int, np.integer)):
        return int(size), int(size)
    nr, nc = size
    return int(nr), int(nc)


def generate_dem(spec: DemSpec) -> Grid:
    """Deterministic synthetic DEM; ``x`` grows east and ``y`` grows north."""
    if spec.kind not in DEM_KINDS:
        raise ValueError(f"unknown DEM kind {spec.kind!r}; choose from {DEM_KINDS}")
    nr, nc = _shape(spec.size)
    if min(nr, nc) < 16:
        raise ValueError("DEM size must be at least 16 cells per side")
    if not spec.cellsize > 0:
        raise ValueError("cellsize must be positive")
    p = spec.params
    rng = np.random.default_rng(spec.seed)
    r = spec.cellsize
    x = (np.arange(nc) + 0.5) * r
    y = (nr - np.arange(nr) - 0.5) * r
    X, Y = np.meshgrid(x, y)
    if spec.kind == "plane":
        z = p.get("base", 0.0) + p.get("gradient", 0.1) * X
    elif spec.kind == "cone":
        cx, cy = nc * r / 2.0, nr * r / 2.0
        z = p.get("peak", 1000.0) - p.get("slope", 0.5) * np.hypot(X - cx, Y - cy)
    else:
        n = int(p.get("n_hills", 40))
        amp_lo, amp_hi = p.get("amplitude", (40.0, 160.0))
        sig_lo, sig_hi = p.get("sigma", (120.0, 400.0))
        z = np.full((nr, nc), float(p.get("base", 100.0)))
        cxs = rng.uniform(0, nc * r, n)
        cys = rng.uniform(0, nr * r, n)
        amps = rng.uniform(amp_lo, amp_hi, n)
        sigs = rng.uniform(sig_lo, sig_hi, n)
        for cx, cy, a, s in zip(cxs, cys, amps, sigs):
            z += a * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * s * s))
    if spec.noise_sd > 0:
        z = z + rng.normal(0.0, spec.noise_sd, z.shape)
    return Grid(z, 0.0, 0.0, r)


def _seed_cells(valid, target, rng):
    nr, nc = valid.shape
    by = max(1, int(round(np.sqrt(target * nr / nc))))
    bx = max(1, int(np.ceil(target / by)))
    rows = np.linspace(0, nr, by + 1).astype(int)
    cols = np.linspace(0, nc, bx + 1).astype(int)
    seeds = []
    for i in range(by):
        for j in range(bx):
            block = valid[rows[i]:rows[i + 1], cols[j]:cols[j + 1]]
            cand = np.flatnonzero(block)
            if cand.size == 0:
                continue
            k = cand[rng.integers(cand.size)]
            bi, bj = divmod(int(k), block.shape[1])
            seeds.append((rows[i] + bi) * nc + cols[j] + bj)
    if len(seeds) > target:
        keep = np.sort(rng.choice(len(seeds), target, replace=False))
        seeds = [seeds[k] for k in keep]
    return seeds


def generate_su_labels(dem: Grid, target_units: int, seed: int) -> Grid:
    """Partition valid cells into about ``target_units`` 4-connected units.

    Seeds are drawn one per block of a regular grid, then grown by a
    multi-source breadth-first search. Valid components that no seed reaches
    receive their own seed. Labels run 1..M; invalid cells are NoData.
    """
    if target_units < 2:
        raise ValueError("target_units must be >= 2")
    valid = dem.valid
    nr, nc = dem.shape
    rng = np.random.default_rng(seed)
    lab = np.zeros(nr * nc, dtype=np.int64)
    vflat = valid.ravel()
    queue = deque()
    next_label = 1
    for s in _seed_cells(valid, target_units, rng):
        lab[s] = next_label
        next_label += 1
        queue.append(s)

    def grow():
        while queue:
            c = queue.popleft()
            i, j = divmod(c, nc)
            for n, ok in ((c - nc, i > 0), (c + nc, i < nr - 1), (c - 1, j > 0),
                          (c + 1, j < nc - 1)):
                if ok and vflat[n] and lab[n] == 0:
                    lab[n] = lab[c]
                    queue.append(n)

    grow()
    for c in np.flatnonzero(vflat & (lab == 0)):
        if lab[c] == 0:  # an earlier pass may have reached it
            lab[c] = next_label
            next_label += 1
            queue.append(int(c))
            grow()
    # relabel 1..M in order of first appearance (row-major)
    used = lab[vflat]
    _, first = np.unique(used, return_index=True)
    order = np.argsort(first)
    remap = np.zeros(next_label, dtype=np.int64)
    remap[np.unique(used)[order]] = np.arange(1, order.size + 1)
    out = np.where(vflat, remap[lab], -9999).reshape(nr, nc)
    return Grid(out, dem.xllcorner, dem.yllcorner, dem.cellsize, -9999.0)


def generate_inventory(gpk: FeatureTable, nuisance_covariates: int, signal_weights, intercept: float,
                       seed: int) -> FeatureTable:
    """Append standard-normal nuisance columns and draw logistic labels.

    Every row uses its own generator keyed by ``(seed, su_id)``, so a row's
    draws do not depend on table order. True weights go to ``meta``.
    """
    w = np.asarray(signal_weights, dtype=np.float64)
    if w.shape != (1 + nuisance_covariates,):
        raise ValueError(f"need {1 + nuisance_covariates} signal weights, got {w.size}")
    n = len(gpk)
    nuis = np.empty((n, nuisance_covariates))
    u = np.empty(n)
    for i, sid in enumerate(gpk.su_id):
        g = np.random.default_rng([int(seed), int(sid)])
        nuis[i] = g.standard_normal(nuisance_covariates)
        u[i] = g.random()
    X = np.column_stack([gpk.columns["gpk"], nuis])
    p = _sigmoid(intercept + X @ w)
    label = (u < p).astype(np.int64)
    cols = {"gpk": gpk.columns["gpk"].copy()}
    for k in range(nuisance_covariates):
        cols[f"nuisance_{k + 1}"] = nuis[:, k]
    meta = {"true_weights": w.tolist(), "true_intercept": float(intercept)}
    return FeatureTable(gpk.su_id.copy(), cols, label, meta)


@dataclass(frozen=True)
class Scene:
    dem: Grid
    su_labels: Grid
    hydro: HydroProducts
    params: MorphometricParams
    gpk: FeatureTable
    inventory: FeatureTable


def synthetic_scene(seed: int, size: int = 256, target_units: int = 800,
                    params: MorphometricParams = MorphometricParams(20.0, 20.0, 200.0),
                    gpk_weight: float = 3.0, nuisance_weights=(0.5, -0.5, 0.0),
                    noise_sd: float = 0.5, hydro: HydroProducts | None = None) -> Scene:
    """Hills DEM, slope units and an inventory planted on the prior.

    The intercept centres the linear predictor on the mean GPK so both classes
    stay well represented.
    """
    dem = generate_dem(DemSpec("gaussian_hills", size, 10.0, noise_sd=noise_sd, seed=seed))
    su = generate_su_labels(dem, target_units, seed)
    if hydro is None:
        hydro = compute_hydrology(dem, params.epsilon, params.stream_threshold)
    gpk = aggregate_prior_to_su(compute_prior(hydro, params), su)
    weights = [gpk_weight, *nuisance_weights]
    intercept = -gpk_weight * float(gpk.columns["gpk"].mean())
    inv = generate_inventory(gpk, len(nuisance_weights), weights, intercept, seed)
    return Scene(dem, su, hydro, params, gpk, inv)
