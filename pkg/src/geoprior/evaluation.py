"""Repeated stratified CV, learning curves, ensemble mapping and Jenks classes."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ._backend import kernels
from .model import fit_model
from .tabular import FeatureTable, TableError

log = logging.getLogger(__name__)

CLASS_NAMES = ("very low", "low", "moderate", "high", "very high")


# ---------------------------------------------------------------------------
# metrics

def auc_roc(labels, scores) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    npos = int(np.sum(y == 1))
    nneg = int(np.sum(y == 0))
    if npos == 0 or nneg == 0 or npos + nneg != y.size:
        raise ValueError("AUC needs binary labels with both classes present")
    ranks = rankdata(s)  # average ranks handle ties
    u = ranks[y == 1].sum() - npos * (npos + 1) / 2.0
    return float(u / (npos * nneg))


def brier_score(labels, probs) -> float:
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError("labels and probabilities differ in length")
    if y.size == 0:
        raise ValueError("empty input")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


# ---------------------------------------------------------------------------
# fold plans

def stratified_folds(y, k: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle within each class, then deal round-robin into ``k`` folds.

    Dealing continues from the positives into the negatives so fold sizes
    stay within one of each other.
    """
    y = np.asarray(y)
    pos = rng.permutation(np.flatnonzero(y == 1))
    neg = rng.permutation(np.flatnonzero(y == 0))
    folds = np.empty(y.size, dtype=np.int64)
    dealt = np.concatenate([pos, neg])
    folds[dealt] = np.arange(dealt.size) % k
    return folds


@dataclass(frozen=True)
class FoldPlan:
    repeats: int
    folds: int
    assignment: np.ndarray  # shape (repeats, n_rows), fold index per row
    seed: int

    def split(self, repeat: int, fold: int):
        a = self.assignment[repeat]
        return np.flatnonzero(a != fold), np.flatnonzero(a == fold)


def make_fold_plan(table: FeatureTable, K: int = 10, R: int = 5, seed: int = 0) -> FoldPlan:
    if table.label is None:
        raise TableError("fold plan needs labels")
    if K < 2 or R < 1:
        raise ValueError("need K >= 2 and R >= 1")
    y = table.label
    for cls in (0, 1):
        if int(np.sum(y == cls)) < K:
            raise ValueError(f"class {cls} has fewer than K={K} rows")
    assignment = np.empty((R, y.size), dtype=np.int64)
    for r in range(R):
        rng = np.random.default_rng([seed, r])
        assignment[r] = stratified_folds(y, K, rng)
    return FoldPlan(R, K, assignment, seed)


# ---------------------------------------------------------------------------
# cross-validation

@dataclass(frozen=True)
class Cycle:
    repeat: int
    fold: int
    auc: float
    brier: float
    n_train: int
    error: str = ""


@dataclass
class CVResult:
    cycles: list
    models: list = field(default_factory=list)

    @property
    def auc(self) -> np.ndarray:
        return np.array([c.auc for c in self.cycles])

    @property
    def brier(self) -> np.ndarray:
        return np.array([c.brier for c in self.cycles])

    def summary(self) -> dict:
        auc = self.auc[np.isfinite(self.auc)]
        brier = self.brier[np.isfinite(self.brier)]
        return {
            "auc_mean": float(auc.mean()) if auc.size else math.nan,
            "auc_std": float(auc.std()) if auc.size else math.nan,
            "brier_mean": float(brier.mean()) if brier.size else math.nan,
            "brier_std": float(brier.std()) if brier.size else math.nan,
        }


def _cycle_config(config, plan: FoldPlan, repeat: int, fold: int):
    seed = int(np.random.SeedSequence([config.seed, plan.seed, repeat, fold]).generate_state(1)[0])
    return type(config)(**{**config.__dict__, "seed": seed})


def run_cv(table: FeatureTable, model_config, plan: FoldPlan) -> CVResult:
    """Train on K-1 folds and score the held-out fold, for every repeat.

    A failing fit is recorded with NaN metrics and its error message.
    """
    if plan.assignment.shape[1] != len(table):
        raise ValueError("fold plan does not match the table")
    cycles, models = [], []
    for r in range(plan.repeats):
        for f in range(plan.folds):
            tr, te = plan.split(r, f)
            try:
                model = fit_model(table.take(tr), _cycle_config(model_config, plan, r, f))
                test = table.take(te)
                p = model.predict_proba(test)
                cycles.append(Cycle(r, f, auc_roc(test.label, p), brier_score(test.label, p),
                                    tr.size))
                models.append(model)
            except Exception as exc:
                log.warning("CV cycle (%d, %d) failed: %s", r, f, exc)
                cycles.append(Cycle(r, f, math.nan, math.nan, tr.size,
                                    f"{type(exc).__name__}: {exc}"))
    return CVResult(cycles, models)


def stratified_subsample(table: FeatureTable, n_positives: int, seed: int) -> FeatureTable:
    """Draw ``n_positives`` positives and floor(n_positives * N / P) negatives."""
    if table.label is None:
        raise TableError("subsampling needs labels")
    y = table.label
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if n_positives < 1 or n_positives > pos.size:
        raise ValueError(f"requested {n_positives} positives, {pos.size} available")
    n_neg = max(1, (n_positives * neg.size) // pos.size)
    rng = np.random.default_rng(seed)
    pick = np.concatenate([rng.choice(pos, n_positives, replace=False),
                           rng.choice(neg, n_neg, replace=False)])
    return table.take(rng.permutation(pick))


# ---------------------------------------------------------------------------
# learning curves

@dataclass(frozen=True)
class Paradigm:
    name: str
    model_config: object
    use_gpk: bool = True


@dataclass(frozen=True)
class CurveRow:
    n_pos: int
    paradigm: str
    auc_mean: float
    auc_std: float
    brier_mean: float
    brier_std: float


def learning_curve(table: FeatureTable, sizes, paradigms, K: int = 10, R: int = 5, seed: int = 0,
                   keep_models: bool = False):
    """Mean CV metrics per (sample size, paradigm).

    Each size draws one stratified subsample and one fold plan shared by all
    paradigms. ``sizes`` holds positive counts; ``None`` or ``"all"`` means
    every positive. Paradigms with ``use_gpk=False`` drop the gpk column.
    Returns the curve rows, plus the per-cell CV results if ``keep_models``.
    """
    npos_total = int(table.label.sum())
    resolved = [npos_total if s in (None, "all") else int(s) for s in sizes]
    if any(b < a for a, b in zip(resolved, resolved[1:])):
        raise ValueError("sizes must be ascending")
    rows, results = [], {}
    for i, n in enumerate(resolved):
        sub_seed = int(np.random.SeedSequence([seed, i, n]).generate_state(1)[0])
        if n == npos_total:
            sub = table.take(np.random.default_rng(sub_seed).permutation(len(table)))
        else:
            sub = stratified_subsample(table, n, sub_seed)
        plan = make_fold_plan(sub, K, R, seed)
        for par in paradigms:
            data = sub if par.use_gpk else sub.drop("gpk")
            res = run_cv(data, par.model_config, plan)
            s = res.summary()
            rows.append(CurveRow(n, par.name, s["auc_mean"], s["auc_std"], s["brier_mean"],
                                 s["brier_std"]))
            if keep_models:
                results[(n, par.name)] = res
    return (rows, results) if keep_models else rows


# ---------------------------------------------------------------------------
# mapping

def ensemble_lsi(models, all_units: FeatureTable) -> np.ndarray:
    """Arithmetic mean of the members' predicted probabilities per unit."""
    if not models:
        raise ValueError("ensemble needs at least one model")
    total = np.zeros(len(all_units))
    for m in models:
        total += m.predict_proba(all_units)
    return total / len(models)


def jenks_breaks(values, n_classes: int = 5) -> np.ndarray:
    """Fisher-Jenks optimal breaks (exact DP on the sorted values).

    Returns the upper bound of every class except the last.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if np.unique(x).size < n_classes:
        raise ValueError(f"need at least {n_classes} distinct values")
    starts = kernels.jenks_dp(x, n_classes)
    return x[starts[1:] - 1].copy()


def jenks_classes(values, n_classes: int = 5):
    """Class start offsets into ``np.sort(values)`` (used by tests)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    return kernels.jenks_dp(x, n_classes)


def classify_susceptibility(lsi, thresholds) -> np.ndarray:
    """Class index 0..4 with ``t[k-1] < lsi <= t[k]``."""
    t = np.asarray(thresholds, dtype=np.float64)
    if t.size != len(CLASS_NAMES) - 1:
        raise ValueError(f"need {len(CLASS_NAMES) - 1} thresholds")
    if np.any(np.diff(t) <= 0):
        raise ValueError("thresholds must be strictly ascending")
    if t[0] < 0 or t[-1] > 1:
        raise ValueError("thresholds must lie in [0, 1]")
    return np.searchsorted(t, np.asarray(lsi, dtype=np.float64), side="left")


def class_names(classes) -> list:
    return [CLASS_NAMES[int(c)] for c in classes]


# ---------------------------------------------------------------------------
# report files

def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_cycles_csv(result: CVResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repeat", "fold", "auc", "brier"])
        for c in result.cycles:
            w.writerow([c.repeat, c.fold, _num(c.auc), _num(c.brier)])


def write_curve_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_pos", "paradigm", "auc_mean", "auc_std", "brier_mean", "brier_std"])
        for r in rows:
            w.writerow([r.n_pos, r.paradigm, _num(r.auc_mean), _num(r.auc_std),
                        _num(r.brier_mean), _num(r.brier_std)])


def write_lsi_csv(su_id, lsi, classes, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["su_id", "lsi", "class"])
        for sid, v, c in zip(su_id, lsi, classes):
            w.writerow([int(sid), _num(v), CLASS_NAMES[int(c)]])


def write_thresholds_csv(thresholds, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "upper_bound"])
        for name, t in zip(CLASS_NAMES, thresholds):
            w.writerow([name, _num(t)])


def read_thresholds_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["upper_bound"]) for r in rows])
