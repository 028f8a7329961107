"""Small-sample classifiers: elastic-net logistic regression and a random forest.

Both map a :class:`~geoprior.tabular.FeatureTable` to per-row probabilities
and serialise to JSON so CV ensembles can be reused across processes.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._backend import kernels
from .tabular import FeatureTable, TableError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# elastic-net logistic regression

@dataclass(frozen=True)
class ElasticNetConfig:
    alpha: float = 0.5
    lambda_grid: tuple = tuple(np.logspace(-4, 0, 10).tolist())
    inner_folds: int = 3
    class_weighting: str = "auto"  # auto | inverse | uniform
    seed: int = 0
    tol: float = 1e-8
    max_iter: int = 2000

    kind = "elastic_net"


def class_weights(y, scheme: str) -> np.ndarray:
    """Per-row weights; ``auto`` means inverse frequency when positives < 25 %."""
    y = np.asarray(y)
    n = y.size
    npos = int(y.sum())
    if scheme == "auto":
        scheme = "inverse" if npos / n < 0.25 else "uniform"
    if scheme == "uniform":
        return np.ones(n)
    if scheme == "inverse":
        nneg = n - npos
        return np.where(y == 1, n / (2.0 * npos), n / (2.0 * nneg))
    raise ValueError(f"unknown class weighting {scheme!r}")


def smooth_objective(params, X, y, v, lam, alpha) -> float:
    """Weighted mean logistic loss plus the ridge part of the penalty.

    ``params = [intercept, w_1, ..., w_p]``; ``v`` should sum to one.
    """
    b0, w = params[0], np.asarray(params[1:])
    eta = b0 + X @ w
    loss = np.dot(v, np.logaddexp(0.0, eta) - y * eta)
    return float(loss + 0.5 * lam * (1.0 - alpha) * np.dot(w, w))


def smooth_gradient(params, X, y, v, lam, alpha) -> np.ndarray:
    b0, w = params[0], np.asarray(params[1:])
    eta = b0 + X @ w
    r = v * (_sigmoid(eta) - y)
    return np.concatenate(([r.sum()], X.T @ r + lam * (1.0 - alpha) * w))


def penalized_objective(b0, w, X, y, v, lam, alpha) -> float:
    params = np.concatenate(([b0], w))
    return smooth_objective(params, X, y, v, lam, alpha) + lam * alpha * float(np.abs(w).sum())


def _sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _standardize(X, v):
    mean = v @ X
    std = np.sqrt(v @ (X - mean) ** 2)
    scale = np.maximum(np.abs(mean), 1.0)
    zero_var = std <= 1e-12 * scale
    std = np.where(zero_var, 1.0, std)
    return mean, std, zero_var


def coordinate_descent(Z, y, v, lam, alpha, tol=1e-8, max_iter=2000, b0=0.0, w=None,
                       active=None):
    """Minimise the elastic-net logistic objective on standardised ``Z``.

    Cyclic coordinate descent on quadratic majorisers (curvature bound
    ``0.25 * sum(v * z_j^2)``), so the objective is non-increasing. Stops when
    one sweep lowers it by less than ``tol``. Returns ``(b0, w, history)``.
    """
    n, p = Z.shape
    w = np.zeros(p) if w is None else np.array(w, dtype=np.float64)
    active = np.ones(p, dtype=np.uint8) if active is None else np.asarray(active, np.uint8)
    w[active == 0] = 0.0
    Zt = np.ascontiguousarray(Z.T)
    L = 0.25 * (v @ (Z * Z))
    L = np.where(L > 0, L, 1.0)
    eta = b0 + Z @ w
    f = penalized_objective(b0, w, Z, y, v, lam, alpha)
    history = [f]
    for _ in range(max_iter):
        b0 = kernels.cd_sweep(Zt, y, v, eta, w, b0, L, active, lam, alpha)
        f_new = penalized_objective(b0, w, Z, y, v, lam, alpha)
        history.append(f_new)
        if f - f_new < tol:
            break
        f = f_new
    return b0, w, history


@dataclass
class ElasticNetLogit:
    feature_names: list
    mean: np.ndarray
    std: np.ndarray
    coef: np.ndarray
    intercept: float
    lam: float
    alpha: float
    zero_variance: list = field(default_factory=list)
    history: list = field(default_factory=list, repr=False)
    cv_scores: list = field(default_factory=list, repr=False)

    kind = "elastic_net"

    def decision_function(self, rows: FeatureTable) -> np.ndarray:
        X = rows.matrix(self.feature_names)
        return self.intercept + ((X - self.mean) / self.std) @ self.coef

    def predict_proba(self, rows: FeatureTable) -> np.ndarray:
        return _sigmoid(self.decision_function(rows))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "format": FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "lambda": self.lam,
            "alpha": self.alpha,
            "zero_variance": list(self.zero_variance),
        }

    @classmethod
    def from_dict(cls, d) -> "ElasticNetLogit":
        return cls(list(d["feature_names"]), np.array(d["mean"]), np.array(d["std"]),
                   np.array(d["coef"]), float(d["intercept"]), float(d["lambda"]),
                   float(d["alpha"]), list(d.get("zero_variance", [])))


def _training_arrays(train: FeatureTable):
    if train.label is None:
        raise FitError("training table has no labels")
    if len(train.names) == 0:
        raise FitError("training table has no feature columns")
    X = train.matrix()
    if not np.all(np.isfinite(X)):
        raise FitError("training features contain NaN or infinite values")
    return X, train.label.astype(np.float64)


def _fit_single(X, y, raw_w, lam, alpha, tol, max_iter, start=None):
    v = raw_w / raw_w.sum()
    mean, std, zero_var = _standardize(X, v)
    Z = (X - mean) / std
    active = (~zero_var).astype(np.uint8)
    b0, w = (0.0, None) if start is None else start
    b0, w, hist = coordinate_descent(Z, y, v, lam, alpha, tol, max_iter, b0, w, active)
    return mean, std, zero_var, b0, w, hist


def _select_lambda(X, y, raw_w, config: ElasticNetConfig):
    from .evaluation import auc_roc, stratified_folds

    grid = sorted(set(float(l) for l in config.lambda_grid), reverse=True)
    n_min = int(min(y.sum(), y.size - y.sum()))
    k = min(config.inner_folds, n_min)
    if len(grid) == 1 or k < 2:
        # too few rows per class for inner CV: take the middle of the grid
        return grid[len(grid) // 2], []
    folds = stratified_folds(y.astype(np.int64), k, np.random.default_rng(config.seed))
    scores = np.zeros(len(grid))
    for f in range(k):
        tr, te = folds != f, folds == f
        start = None
        for i, lam in enumerate(grid):
            mean, std, _, b0, w, _ = _fit_single(X[tr], y[tr], raw_w[tr], lam, config.alpha,
                                                  config.tol, config.max_iter, start)
            start = (b0, w)
            eta = b0 + ((X[te] - mean) / std) @ w
            scores[i] += auc_roc(y[te], eta) / k
    best = int(np.argmax(scores))  # grid is descending, so ties keep the larger lambda
    return grid[best], list(zip(grid, scores.tolist()))


def fit_elastic_net_logit(train: FeatureTable, config: ElasticNetConfig = ElasticNetConfig()
                          ) -> ElasticNetLogit:
    """Fit on z-scored features with lambda chosen by inner stratified CV AUC."""
    X, y = _training_arrays(train)
    if y.min() == y.max():
        raise FitError("training data contain a single class")
    if len(config.lambda_grid) == 0:
        raise FitError("empty lambda grid")
    if not 0.0 <= config.alpha <= 1.0:
        raise FitError("alpha must lie in [0, 1]")
    raw_w = class_weights(y, config.class_weighting)
    lam, cv_scores = _select_lambda(X, y, raw_w, config)
    mean, std, zero_var, b0, w, hist = _fit_single(X, y, raw_w, lam, config.alpha,
                                                  config.tol, config.max_iter)
    flagged = [n for n, z in zip(train.names, zero_var) if z]
    if flagged:
        log.warning("zero-variance feature(s) pinned to 0: %s", ", ".join(flagged))
    return ElasticNetLogit(train.names, mean, std, w, float(b0), lam, config.alpha, flagged,
                           hist, cv_scores)


# ---------------------------------------------------------------------------
# random forest

@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    bootstrap: bool = True
    min_leaf: int = 1
    max_depth: int | None = None
    max_features: int | None = None  # default ceil(sqrt(p))
    seed: int = 0

    kind = "random_forest"


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        return kernels.predict_tree(X, self.feature, self.threshold, self.left, self.right,
                                    self.value)

    def leaf_index(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] \
                else self.right[node]
        return node


@dataclass
class RandomForest:
    feature_names: list
    trees: list
    config: ForestConfig
    single_class: bool = False

    kind = "random_forest"

    def predict_proba(self, rows: FeatureTable) -> np.ndarray:
        X = np.ascontiguousarray(rows.matrix(self.feature_names))
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "kind": self.kind,
            "format": FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "config": cfg,
            "single_class": self.single_class,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "RandomForest":
        trees = [Tree(np.array(t["feature"], dtype=np.int64), np.array(t["threshold"], dtype=float),
                      np.array(t["left"], dtype=np.int64), np.array(t["right"], dtype=np.int64),
                      np.array(t["value"], dtype=float)) for t in d["trees"]]
        return cls(list(d["feature_names"]), trees, ForestConfig(**d["config"]),
                   bool(d.get("single_class", False)))


def fit_random_forest(train: FeatureTable, config: ForestConfig = ForestConfig()) -> RandomForest:
    """Bagged CART trees with Gini splits and per-node feature subsampling.

    Deterministic for a given ``config.seed``.
    """
    X, y = _training_arrays(train)
    y = y.astype(np.int64)
    n, p = X.shape
    if config.n_trees < 1:
        raise FitError("n_trees must be >= 1")
    single = bool(y.min() == y.max())
    if single:
        log.warning("random forest trained on a single class; trees are constant")
    mtry = config.max_features or math.ceil(math.sqrt(p))
    mtry = min(max(int(mtry), 1), p)
    max_depth = -1 if config.max_depth is None else int(config.max_depth)
    rng = np.random.default_rng(config.seed)
    trees = []
    for _ in range(config.n_trees):
        idx = rng.integers(0, n, n) if config.bootstrap else np.arange(n)
        keys = rng.random((2 * n, p))
        parts = kernels.build_tree(np.ascontiguousarray(X[idx]), y[idx], mtry, config.min_leaf,
                                   max_depth, keys)
        trees.append(Tree(*parts))
    return RandomForest(train.names, trees, config, single)


# ---------------------------------------------------------------------------
# dispatch and persistence

def fit_model(train: FeatureTable, config):
    if config.kind == "elastic_net":
        return fit_elastic_net_logit(train, config)
    if config.kind == "random_forest":
        return fit_random_forest(train, config)
    raise ValueError(f"unknown model kind {config.kind!r}")


def predict_proba(model, rows: FeatureTable) -> np.ndarray:
    try:
        return model.predict_proba(rows)
    except TableError:
        raise
    except KeyError as exc:
        raise TableError(f"missing feature column {exc}") from None


def model_from_dict(d):
    kind = d.get("kind")
    if kind == "elastic_net":
        return ElasticNetLogit.from_dict(d)
    if kind == "random_forest":
        return RandomForest.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
