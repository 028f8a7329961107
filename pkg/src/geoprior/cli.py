"""Command-line pipeline: ``geoprior <subcommand> [options]``.

Every stage reads and writes plain files (ASCII grids, CSV, JSON models), so
stages can be rerun or inspected independently. Exit codes: 0 ok,
1 computation error, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import prior, raster, synth, terrain
from .model import ElasticNetConfig, ForestConfig, load_model, save_model
from .raster import Grid, GridParseError, read_ascii_grid, write_ascii_grid
from .tabular import (FeatureTable, TableError, ZONAL_STATS, assemble_feature_table,
                      read_feature_csv, write_feature_csv, zonal_statistics)

log = logging.getLogger("geoprior")

HYDRO_FILES = ("hydrodem", "flowdir", "facc", "facc_w", "slope", "streams")


class UsageError(Exception):
    """Bad flags, config or unreadable input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config handling

def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        out[key] = (value.strip(), lineno)
    return out


def _floats(text) -> list:
    try:
        return [float(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise ValueError(f"expected a list of numbers, got {text!r}") from None


def _sizes(text) -> list:
    out = []
    for tok in str(text).replace(",", " ").split():
        out.append("all" if tok.lower() == "all" else int(tok))
    return out


# ---------------------------------------------------------------------------
# I/O helpers mapping failures to exit code 2

def _read_grid(path) -> Grid:
    try:
        return read_ascii_grid(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except GridParseError as exc:
        raise UsageError(f"{path}: {exc}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _csv_header(path) -> list:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [h.strip() for h in next(csv.reader(fh), [])]
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _read_table(path, label_column=None) -> FeatureTable:
    header = _csv_header(path)
    if label_column is not None and label_column not in header:
        label_column = None
    try:
        return read_feature_csv(path, label_column=label_column)
    except TableError as exc:
        raise UsageError(str(exc)) from None


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _mask_grid(like: Grid, mask, valid) -> Grid:
    return like.like(np.asarray(mask, dtype=np.float64), valid)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    out = _out_dir(args)
    if args.gpk:
        gpk = _read_table(args.gpk)
        if "gpk" not in gpk.columns:
            raise UsageError(f"{args.gpk}: missing 'gpk' column")
        weights = _floats(args.weights) if args.weights else [3.0] + [0.0] * args.nuisance
        intercept = args.intercept
        if intercept is None:
            intercept = -weights[0] * float(gpk.columns["gpk"].mean())
        inv = synth.generate_inventory(gpk, args.nuisance, weights, intercept, args.seed)
        write_feature_csv(inv.drop("gpk"), out / "inventory.csv")
        return 0
    spec = synth.DemSpec(args.kind, args.size, args.cellsize, noise_sd=args.noise_sd,
                         seed=args.seed)
    dem = synth.generate_dem(spec)
    su = synth.generate_su_labels(dem, args.units, args.seed)
    write_ascii_grid(dem, out / "dem.asc")
    write_ascii_grid(su, out / "su.asc")
    return 0


def cmd_hydro(args) -> int:
    _require(args, "dem", "stream_threshold")
    dem = _read_grid(args.dem)
    out = _out_dir(args)
    hp = prior.compute_hydrology(dem, args.epsilon, args.stream_threshold)
    write_ascii_grid(hp.hydrodem, out / "hydrodem.asc")
    write_ascii_grid(hp.flow.to_grid(), out / "flowdir.asc")
    write_ascii_grid(hp.facc, out / "facc.asc")
    write_ascii_grid(hp.facc_w, out / "facc_w.asc")
    write_ascii_grid(hp.slope, out / "slope.asc")
    write_ascii_grid(_mask_grid(dem, hp.streams, dem.valid), out / "streams.asc")
    return 0


def cmd_prior(args) -> int:
    _require(args, "su", "slope_threshold", "buffer_m")
    hdir = Path(args.hydro_dir)
    g = {k: _read_grid(hdir / f"{k}.asc") for k in HYDRO_FILES}
    su = _read_grid(args.su)
    raster.check_geometry(*g.values(), su)
    params = prior.MorphometricParams(args.slope_threshold, args.buffer_m,
                                      args.stream_threshold or 1.0, args.epsilon)
    streams = g["streams"].valid & (g["streams"].values > 0)
    field = prior.prior_from_rasters(g["facc"], g["facc_w"], g["slope"], streams,
                                     g["hydrodem"].valid, params)
    gpk = prior.aggregate_prior_to_su(field, su)
    out = _out_dir(args)
    write_ascii_grid(field.prior, out / "prior.asc")
    write_feature_csv(gpk, out / "gpk.csv")
    return 0


def _covariate_rasters(specs, su):
    tables = []
    for spec in specs or ():
        name, sep, rest = spec.partition("=")
        if not sep or not name or not rest:
            raise UsageError(f"--raster expects name=path[:stat], got {spec!r}")
        path, _, stat = rest.partition(":")
        stat = stat or "mean"
        if stat not in ZONAL_STATS:
            raise UsageError(f"unknown statistic {stat!r}; choose from {', '.join(ZONAL_STATS)}")
        grid = _read_grid(path)
        tables.append((name, zonal_statistics(grid, su, stat, name)))
    return tables


def cmd_features(args) -> int:
    _require(args, "gpk")
    gpk = _read_table(args.gpk)
    covs = []
    if args.raster:
        if not args.su:
            raise UsageError("--raster needs --su")
        covs += _covariate_rasters(args.raster, _read_grid(args.su))
    if args.dem:
        if not args.su:
            raise UsageError("--dem needs --su")
        dem = _read_grid(args.dem)
        su = _read_grid(args.su)
        raster.check_geometry(dem, su)
        east, north = terrain.aspect_components(dem)
        covs += [("slope_mean", zonal_statistics(terrain.slope_degrees(dem), su, "mean")),
                 ("elev_mean", zonal_statistics(dem, su, "mean")),
                 ("easterness", zonal_statistics(east, su, "mean")),
                 ("northerness", zonal_statistics(north, su, "mean"))]
    for path in args.table or ():
        covs.append((Path(path).stem, _read_table(path, args.label_column).with_label(None)))
    labels = _read_table(args.labels, args.label_column) if args.labels else None
    if labels is not None and labels.label is None:
        raise UsageError(f"{args.labels}: missing label column {args.label_column!r}")
    table = assemble_feature_table(gpk, covs, labels)
    write_feature_csv(table, _out_dir(args) / "features.csv", args.label_column)
    return 0


def _model_config(args, seed):
    if args.model == "elastic_net":
        kw = {"seed": seed}
        if args.alpha is not None:
            kw["alpha"] = args.alpha
        if args.lambda_grid:
            kw["lambda_grid"] = tuple(_floats(args.lambda_grid))
        if args.inner_folds is not None:
            kw["inner_folds"] = args.inner_folds
        if args.class_weighting:
            kw["class_weighting"] = args.class_weighting
        return ElasticNetConfig(**kw)
    if args.model == "random_forest":
        kw = {"seed": seed}
        if args.n_trees is not None:
            kw["n_trees"] = args.n_trees
        if args.max_features is not None:
            kw["max_features"] = args.max_features
        if args.min_leaf is not None:
            kw["min_leaf"] = args.min_leaf
        return ForestConfig(**kw)
    raise UsageError(f"unknown model {args.model!r}")


def _paradigms(args):
    """``name:model:gpk|nogpk`` entries; default compares gpk on/off."""
    if not args.paradigms:
        cfg = _model_config(args, args.seed)
        return [ev.Paradigm("proposed", cfg, True), ev.Paradigm("conventional", cfg, False)]
    out = []
    for item in args.paradigms.split(","):
        parts = item.strip().split(":")
        if len(parts) != 3 or parts[2] not in ("gpk", "nogpk"):
            raise UsageError(f"paradigm {item!r}: expected name:model:gpk|nogpk")
        sub = argparse.Namespace(**{**vars(args), "model": parts[1]})
        out.append(ev.Paradigm(parts[0], _model_config(sub, args.seed), parts[2] == "gpk"))
    return out


def _write_sensitivity(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slope_threshold", "buffer_m", "auc", "brier", "selected", "error"])
        for r in result.rows:
            sel = (result.best is not None and r["slope_threshold"] == result.best.slope_threshold
                   and r["buffer_m"] == result.best.buffer_width)
            w.writerow([repr(r["slope_threshold"]), repr(r["buffer_m"]), ev._num(r["auc"]),
                        ev._num(r["brier"]), int(sel), r["error"]])


def cmd_sensitivity(args) -> int:
    _require(args, "dem", "su", "labels", "stream_threshold")
    dem = _read_grid(args.dem)
    su = _read_grid(args.su)
    truth = _read_table(args.labels, args.label_column)
    if truth.label is None:
        raise UsageError(f"{args.labels}: missing label column {args.label_column!r}")
    fixed = prior.MorphometricParams(0.0, 0.0, args.stream_threshold, args.epsilon)
    res = prior.sensitivity_search(dem, su, truth, _floats(args.slope_thresholds),
                                   _floats(args.buffer_widths), fixed)
    _write_sensitivity(res, _out_dir(args) / "sensitivity.csv")
    if res.best is None:
        log.error("every sensitivity configuration failed")
        return 1
    return 0


def cmd_evaluate(args) -> int:
    if args.mode == "sensitivity":
        return cmd_sensitivity(args)
    _require(args, "features")
    table = _read_table(args.features, args.label_column)
    if table.label is None:
        raise UsageError(f"{args.features}: missing label column {args.label_column!r}")
    out = _out_dir(args)
    if args.mode == "cv":
        plan = ev.make_fold_plan(table, args.folds, args.repeats, args.seed)
        res = ev.run_cv(table, _model_config(args, args.seed), plan)
        ev.write_cycles_csv(res, out / "cycles.csv")
        mdir = out / "models"
        mdir.mkdir(exist_ok=True)
        for old in mdir.glob("model_*.json"):
            old.unlink()
        ok = [c for c in res.cycles if not c.error]
        for c, m in zip(ok, res.models):
            save_model(m, mdir / f"model_r{c.repeat:02d}_f{c.fold:02d}.json")
        if not ok:
            log.error("all CV cycles failed; first error: %s", res.cycles[0].error)
            return 1
        return 0
    rows = ev.learning_curve(table, _sizes(args.sizes), _paradigms(args), args.folds,
                             args.repeats, args.seed)
    ev.write_curve_csv(rows, out / "curve.csv")
    return 0


def cmd_map(args) -> int:
    _require(args, "features", "models_dir")
    table = _read_table(args.features, args.label_column)
    paths = sorted(Path(args.models_dir).glob("*.json"))
    if not paths:
        raise UsageError(f"no model files in {args.models_dir}")
    try:
        models = [load_model(p) for p in paths]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load models: {exc}") from None
    lsi = ev.ensemble_lsi(models, table)
    out = _out_dir(args)
    if args.thresholds:
        thresholds = np.array(_floats(args.thresholds))
    else:
        thresholds = ev.jenks_breaks(lsi, len(ev.CLASS_NAMES))
        ev.write_thresholds_csv(thresholds, out / "thresholds.csv")
    classes = ev.classify_susceptibility(lsi, thresholds)
    ev.write_lsi_csv(table.su_id, lsi, classes, Path(args.out) if args.out else out / "lsi.csv")
    return 0


# ---------------------------------------------------------------------------
# parser

# config-settable keys and their converters
_KEYS = {
    "seed": int, "out_dir": str, "dem": str, "su": str, "hydro_dir": str, "epsilon": float,
    "stream_threshold": float, "slope_threshold": float, "buffer_m": float, "gpk": str,
    "labels": str, "label_column": str, "features": str, "mode": str, "model": str,
    "folds": int, "repeats": int, "sizes": str, "paradigms": str, "alpha": float,
    "lambda_grid": str, "inner_folds": int, "class_weighting": str, "n_trees": int,
    "max_features": int, "min_leaf": int, "models_dir": str, "thresholds": str, "out": str,
    "slope_thresholds": str, "buffer_widths": str, "kind": str, "size": int, "cellsize": float,
    "noise_sd": float, "units": int, "nuisance": int, "weights": str, "intercept": float,
}


def _common(p):
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--config", help="file of 'key = value' lines; flags take precedence")
    p.add_argument("--out-dir", help="output directory (default .)")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_flags(p):
    p.add_argument("--model", choices=("elastic_net", "random_forest"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda-grid", help="comma-separated lambda values")
    p.add_argument("--inner-folds", type=int)
    p.add_argument("--class-weighting", choices=("auto", "inverse", "uniform"))
    p.add_argument("--n-trees", type=int)
    p.add_argument("--max-features", type=int)
    p.add_argument("--min-leaf", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geoprior", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthetic DEM + slope units, or an inventory from gpk.csv")
    _common(p)
    p.add_argument("--kind", choices=synth.DEM_KINDS)
    p.add_argument("--size", type=int)
    p.add_argument("--cellsize", type=float)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--units", type=int, help="target number of slope units")
    p.add_argument("--gpk", help="write inventory.csv for this gpk table instead of rasters")
    p.add_argument("--nuisance", type=int)
    p.add_argument("--weights", help="gpk weight then one per nuisance column")
    p.add_argument("--intercept", type=float,
                   help="default centres the predictor on the mean gpk")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("hydro", help="fill, route and accumulate a DEM")
    _common(p)
    p.add_argument("--dem")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--stream-threshold", type=float, help="stream cells: facc >= this")
    p.set_defaults(func=cmd_hydro)

    p = sub.add_parser("prior", help="pixel prior and per-unit gpk")
    _common(p)
    p.add_argument("--hydro-dir")
    p.add_argument("--su")
    p.add_argument("--slope-threshold", type=float)
    p.add_argument("--buffer-m", type=float)
    p.add_argument("--stream-threshold", type=float)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("features", help="join gpk, covariates and labels")
    _common(p)
    p.add_argument("--gpk")
    p.add_argument("--su")
    p.add_argument("--dem", help="add slope, elevation and aspect covariates")
    p.add_argument("--raster", action="append", help="name=path[:stat]")
    p.add_argument("--table", action="append", help="extra covariate CSV keyed by su_id")
    p.add_argument("--labels")
    p.add_argument("--label-column")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("evaluate", help="repeated CV, learning curve or sensitivity")
    _common(p)
    p.add_argument("--features")
    p.add_argument("--mode", choices=("cv", "learning-curve", "sensitivity"))
    p.add_argument("--label-column")
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--sizes", help="positive counts, e.g. 25,50,100,all")
    p.add_argument("--paradigms", help="name:model:gpk|nogpk,...")
    _model_flags(p)
    _sensitivity_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("map", help="ensemble LSI and susceptibility classes")
    _common(p)
    p.add_argument("--features")
    p.add_argument("--models-dir")
    p.add_argument("--thresholds", help="four ascending values; default Jenks")
    p.add_argument("--label-column")
    p.add_argument("--out", help="LSI CSV path (default OUT_DIR/lsi.csv)")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("sensitivity", help="grid search of slope threshold and buffer")
    _common(p)
    _sensitivity_flags(p)
    p.add_argument("--label-column")
    p.set_defaults(func=cmd_sensitivity)
    return ap


def _sensitivity_flags(p):
    p.add_argument("--dem")
    p.add_argument("--su")
    p.add_argument("--labels")
    p.add_argument("--slope-thresholds")
    p.add_argument("--buffer-widths")
    p.add_argument("--stream-threshold", type=float)
    p.add_argument("--epsilon", type=float)


# defaults applied after flags and config
_FALLBACKS = {"seed": 0, "out_dir": ".", "mode": "cv", "model": "elastic_net", "folds": 10,
              "repeats": 5, "sizes": "25,50,100,250,500,1000,all",
              "slope_thresholds": "10,20,30", "buffer_widths": "0,20,40", "epsilon": 1e-5,
              "hydro_dir": ".", "label_column": "label", "kind": "gaussian_hills", "size": 256,
              "cellsize": 10.0, "noise_sd": 0.5, "units": 800, "nuisance": 3}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.config:
            _apply_config(args)
        for k, v in _FALLBACKS.items():
            if hasattr(args, k) and getattr(args, k) is None:
                setattr(args, k, v)
        return args.func(args)
    except UsageError as exc:
        print(f"geoprior {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"geoprior {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # computation failure
        print(f"geoprior {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _apply_config(args):
    """Config values fill any option left unset on the command line."""
    conf = read_config(args.config)
    for key, (raw, lineno) in conf.items():
        if key not in _KEYS or not hasattr(args, key):
            raise UsageError(f"{args.config}: line {lineno}: unknown key {key!r}")
        if getattr(args, key) is not None:
            continue  # flags override config
        try:
            setattr(args, key, _KEYS[key](raw))
        except ValueError:
            raise UsageError(f"{args.config}: line {lineno}: bad value {raw!r} for {key}") from None


if __name__ == "__main__":
    sys.exit(main())
