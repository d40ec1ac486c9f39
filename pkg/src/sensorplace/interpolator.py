"""Citywide interpolation model: squared-error gradient-boosted trees.

Trees are grown level by level with an exact greedy split search. Every
feature is first mapped to integer codes against a sorted threshold list,
so the exact and quantile-binned modes share one kernel and differ only in
which thresholds are offered.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Protocol, Sequence

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import ArityError, DataError, FitError, ParameterError, ParseError, ShapeError

MODEL_FORMAT = "sensorplace.gbdt"
MODEL_VERSION = 1


@dataclass(frozen=True)
class RegressorConfig:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    seed: int = 0
    binning: str = "exact"
    max_bins: int = 256

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ParameterError("n_trees, max_depth and min_samples_leaf must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ParameterError("learning_rate must lie in (0, 1]")
        if self.binning not in ("exact", "quantile"):
            raise ParameterError(f"unknown binning mode {self.binning!r}")
        if self.max_bins < 2:
            raise ParameterError("max_bins must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


class Model(Protocol):
    def predict(self, X) -> np.ndarray: ...


class Regressor(Protocol):
    """Anything that turns ``(X, y)`` into a fitted :class:`Model`."""

    def fit(self, X, y) -> Model: ...

    def describe(self) -> dict: ...


# ---------------------------------------------------------------- kernels

@njit(cache=True, nogil=True)
def _grow_tree(codes, n_bins, offsets, resid, max_depth, min_leaf,
               feat, thr_bin, left, right, value, node_of):
    n, d = codes.shape
    total_bins = offsets[d]
    max_nodes = feat.shape[0]
    slot_of = np.full(max_nodes, -1, dtype=np.int64)
    open_nodes = np.zeros(1, dtype=np.int64)
    node_of[:] = 0
    n_nodes = 1
    for depth in range(max_depth + 1):
        n_open = open_nodes.shape[0]
        for s in range(n_open):
            slot_of[open_nodes[s]] = s
        tot_s = np.zeros(n_open)
        tot_ss = np.zeros(n_open)
        tot_c = np.zeros(n_open, dtype=np.int64)
        grow = depth < max_depth
        if grow:
            hs = np.zeros((n_open, total_bins))
            hc = np.zeros((n_open, total_bins), dtype=np.int64)
        else:
            hs = np.zeros((1, 1))
            hc = np.zeros((1, 1), dtype=np.int64)
        for r in range(n):
            s = slot_of[node_of[r]]
            if s < 0:
                continue
            g = resid[r]
            tot_s[s] += g
            tot_ss[s] += g * g
            tot_c[s] += 1
            if grow:
                for f in range(d):
                    b = offsets[f] + codes[r, f]
                    hs[s, b] += g
                    hc[s, b] += 1
        next_nodes = np.empty(2 * n_open, dtype=np.int64)
        n_next = 0
        for s in range(n_open):
            node = open_nodes[s]
            S = tot_s[s]
            N = tot_c[s]
            best_gain = 0.0
            best_f = -1
            best_b = -1
            if grow and N >= 2 * min_leaf and tot_ss[s] > 0.0:
                parent = S * S / N
                for f in range(d):
                    cs = 0.0
                    cc = 0
                    for b in range(n_bins[f] - 1):
                        cs += hs[s, offsets[f] + b]
                        cc += hc[s, offsets[f] + b]
                        if cc < min_leaf:
                            continue
                        if N - cc < min_leaf:
                            break
                        rs = S - cs
                        gain = cs * cs / cc + rs * rs / (N - cc) - parent
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            best_b = b
            if best_f >= 0 and best_gain > 1e-12 * tot_ss[s]:
                feat[node] = best_f
                thr_bin[node] = best_b
                left[node] = n_nodes
                right[node] = n_nodes + 1
                next_nodes[n_next] = n_nodes
                next_nodes[n_next + 1] = n_nodes + 1
                n_next += 2
                n_nodes += 2
            else:
                feat[node] = -1
                left[node] = -1
                right[node] = -1
                value[node] = S / N if N > 0 else 0.0
        for r in range(n):
            node = node_of[r]
            if slot_of[node] >= 0 and feat[node] >= 0:
                if codes[r, feat[node]] <= thr_bin[node]:
                    node_of[r] = left[node]
                else:
                    node_of[r] = right[node]
        for s in range(n_open):
            slot_of[open_nodes[s]] = -1
        if n_next == 0:
            break
        open_nodes = next_nodes[:n_next].copy()
    return n_nodes


@njit(cache=True, nogil=True)
def _predict_forest(X, feat, thr, step, value, depth, base, lr):
    """Route rows through every tree for a fixed ``depth`` steps.

    Leaves loop onto themselves (``step[leaf] = leaf``, ``thr = inf``) and
    the right child of a split is ``step + 1``, so routing is branch-free.
    Four rows advance together to overlap the dependent loads.
    """
    n = X.shape[0]
    acc = np.zeros(n)
    tail = n - n % 4
    for t in range(feat.shape[0]):
        ft = feat[t]
        th = thr[t]
        st = step[t]
        vt = value[t]
        for r in range(0, tail, 4):
            a0 = 0
            a1 = 0
            a2 = 0
            a3 = 0
            for _ in range(depth):
                a0 = st[a0] + (X[r, ft[a0]] > th[a0])
                a1 = st[a1] + (X[r + 1, ft[a1]] > th[a1])
                a2 = st[a2] + (X[r + 2, ft[a2]] > th[a2])
                a3 = st[a3] + (X[r + 3, ft[a3]] > th[a3])
            acc[r] += vt[a0]
            acc[r + 1] += vt[a1]
            acc[r + 2] += vt[a2]
            acc[r + 3] += vt[a3]
        for r in range(tail, n):
            a = 0
            for _ in range(depth):
                a = st[a] + (X[r, ft[a]] > th[a])
            acc[r] += vt[a]
    return base + lr * acc


def _routing_arrays(feature, threshold, left):
    leaf = left < 0
    step = left.copy()
    step[leaf] = np.broadcast_to(np.arange(left.shape[1]), left.shape)[leaf]
    feat = np.where(leaf, 0, feature)
    thr = np.where(leaf, np.inf, threshold)
    return feat, thr, step


# ------------------------------------------------------------------ model

def _thresholds(col: np.ndarray, binning: str, max_bins: int) -> np.ndarray:
    uniq = np.unique(col)
    if binning == "exact" or uniq.size <= max_bins:
        return uniq[:-1]
    qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1], method="lower")
    t = np.unique(qs)
    return t[t < uniq[-1]]


@dataclass(frozen=True)
class RegressorModel:
    """Fitted boosted forest. Node arrays are padded to a common width."""

    config: RegressorConfig
    base_prediction: float
    n_features: int
    feature: np.ndarray = field(repr=False)
    threshold: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    value: np.ndarray = field(repr=False)
    train_mse: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_routing", _routing_arrays(self.feature, self.threshold, self.left))

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    def predict(self, X) -> np.ndarray:
        return predict_regressor(self, X)

    def to_json(self) -> str:
        trees = [self._tree_record(t, 0) for t in range(self.n_trees)]
        return json.dumps({
            "format": MODEL_FORMAT, "version": MODEL_VERSION, "config": self.config.to_dict(),
            "base_prediction": self.base_prediction, "n_features": self.n_features,
            "trees": trees,
        }, sort_keys=True)

    def _tree_record(self, t, node):
        if self.left[t, node] < 0:
            return {"value": float(self.value[t, node])}
        return {"feature": int(self.feature[t, node]), "threshold": float(self.threshold[t, node]),
                "left": self._tree_record(t, self.left[t, node]),
                "right": self._tree_record(t, self.right[t, node])}

    @classmethod
    def from_json(cls, text: str) -> "RegressorModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise ParseError("not a sensorplace gbdt model document")
        config = RegressorConfig(**doc["config"])
        width = 2 ** (config.max_depth + 1) - 1
        T = len(doc["trees"])
        feat = np.full((T, width), -1, dtype=np.int64)
        thr = np.zeros((T, width))
        left = np.full((T, width), -1, dtype=np.int64)
        right = np.full((T, width), -1, dtype=np.int64)
        value = np.zeros((T, width))
        for t, rec in enumerate(doc["trees"]):
            counter = [0]

            def fill(r, node):
                if "value" in r:
                    value[t, node] = r["value"]
                    return
                feat[t, node], thr[t, node] = r["feature"], r["threshold"]
                lo, hi = counter[0] + 1, counter[0] + 2
                counter[0] += 2
                left[t, node], right[t, node] = lo, hi
                fill(r["left"], lo)
                fill(r["right"], hi)
            fill(rec, 0)
        return cls(config, doc["base_prediction"], doc["n_features"], feat, thr, left, right, value)


def _check_rows(X, y=None):
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise ShapeError("feature rows must form a 2-D array")
    if y is None:
        return X
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ShapeError("row and target counts differ")
    return X, y


def fit_regressor(config: RegressorConfig, X, y) -> RegressorModel:
    """Stagewise squared-error boosting; each tree fits the current residuals."""
    X, y = _check_rows(X, y)
    n, d = X.shape
    if n == 0:
        raise FitError("cannot fit on zero rows")
    if not np.all(np.isfinite(y)):
        raise DataError("targets must be finite")
    if not np.all(np.isfinite(X)):
        raise DataError("feature rows must be finite")
    thresholds = [_thresholds(X[:, f], config.binning, config.max_bins) for f in range(d)]
    codes = np.empty((n, d), dtype=np.int64)
    for f in range(d):
        codes[:, f] = np.searchsorted(thresholds[f], X[:, f], side="left")
    n_bins = np.array([t.size + 1 for t in thresholds], dtype=np.int64)
    offsets = np.zeros(d + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(n_bins)

    width = 2 ** (config.max_depth + 1) - 1
    T = config.n_trees
    feat = np.full((T, width), -1, dtype=np.int64)
    thr_bin = np.full((T, width), -1, dtype=np.int64)
    left = np.full((T, width), -1, dtype=np.int64)
    right = np.full((T, width), -1, dtype=np.int64)
    value = np.zeros((T, width))
    node_of = np.empty(n, dtype=np.int64)

    base = float(y.mean())
    pred = np.full(n, base)
    lr = config.learning_rate
    history = []
    for t in range(T):
        resid = y - pred
        _grow_tree(codes, n_bins, offsets, resid, config.max_depth, config.min_samples_leaf,
                   feat[t], thr_bin[t], left[t], right[t], value[t], node_of)
        pred = pred + lr * value[t][node_of]
        history.append(float(np.mean((y - pred) ** 2)))

    thr = np.zeros((T, width))
    mask = feat >= 0
    for t, node in zip(*np.nonzero(mask)):
        thr[t, node] = thresholds[feat[t, node]][thr_bin[t, node]]
    return RegressorModel(config, base, d, feat, thr, left, right, value, tuple(history))


def predict_regressor(model: RegressorModel, X) -> np.ndarray:
    X = _check_rows(X)
    if X.shape[0] == 0:
        return np.zeros(0)
    if X.shape[1] != model.n_features:
        raise ShapeError(f"expected {model.n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise DataError("feature rows must be finite")
    feat, thr, step = model._routing
    return _predict_forest(X, feat, thr, step, model.value, model.config.max_depth,
                           model.base_prediction, model.config.learning_rate)


class GradientBoostedTrees:
    """Default regressor plugged into placement and evaluation."""

    def __init__(self, config: RegressorConfig | None = None):
        self.config = config or RegressorConfig()

    def fit(self, X, y) -> RegressorModel:
        return fit_regressor(self.config, X, y)

    def describe(self) -> dict:
        return {"kind": "gbdt", **self.config.to_dict()}


class KNearestRows:
    """Baseline regressor: mean target of the k nearest training rows."""

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y):
        X, y = _check_rows(X, y)
        if X.shape[0] == 0:
            raise FitError("cannot fit on zero rows")
        return _KNNModel(cKDTree(X), y, min(self.k, X.shape[0]))

    def describe(self) -> dict:
        return {"kind": "knn", "k": self.k}


@dataclass(frozen=True)
class _KNNModel:
    tree: cKDTree
    y: np.ndarray
    k: int

    def predict(self, X):
        X = _check_rows(X)
        if X.shape[0] == 0:
            return np.zeros(0)
        if X.shape[1] != self.tree.m:
            raise ShapeError(f"expected {self.tree.m} features, got {X.shape[1]}")
        _, idx = self.tree.query(X, k=self.k)
        idx = idx.reshape(X.shape[0], -1)
        return self.y[idx].mean(axis=1)


# --------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class EnsemblePrediction:
    mean: float
    variance: float


@dataclass(frozen=True)
class EnsembleStats:
    mean: np.ndarray
    variance: np.ndarray

    def __len__(self):
        return self.mean.size

    def __getitem__(self, i) -> EnsemblePrediction:
        return EnsemblePrediction(float(self.mean[i]), float(self.variance[i]))

    def __iter__(self) -> Iterator[EnsemblePrediction]:
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class BootstrapEnsemble:
    members: tuple
    seed: int = 0

    def __post_init__(self):
        if len(self.members) < 2:
            raise ArityError("an ensemble needs at least two members")

    @property
    def M(self) -> int:
        return len(self.members)


def bootstrap_indices(n: int, seed: int, member: int) -> np.ndarray:
    rng = np.random.default_rng([seed, member])
    return rng.integers(0, n, size=n)


def fit_bootstrap_ensemble(config_or_regressor, X, y, M: int, seed: int,
                           jobs: int = 1) -> BootstrapEnsemble:
    """Fit ``M`` members on with-replacement resamples seeded by ``(seed, m)``."""
    if M < 2:
        raise ArityError("an ensemble needs at least two members")
    X, y = _check_rows(X, y)
    if X.shape[0] == 0:
        raise FitError("cannot fit on zero rows")
    reg = (GradientBoostedTrees(config_or_regressor)
           if isinstance(config_or_regressor, RegressorConfig) else config_or_regressor)

    def one(m):
        idx = bootstrap_indices(X.shape[0], seed, m)
        return reg.fit(X[idx], y[idx])

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            members = tuple(pool.map(one, range(M)))
    else:
        members = tuple(one(m) for m in range(M))
    return BootstrapEnsemble(members=members, seed=seed)


def ensemble_stats(ensemble: BootstrapEnsemble, X) -> EnsembleStats:
    """Per-row member mean and unbiased (M - 1) variance."""
    X = _check_rows(X)
    preds = np.vstack([np.asarray(m.predict(X), dtype=float) for m in ensemble.members])
    # shifting by the first member keeps identical predictions at exactly zero spread
    dev = preds - preds[0]
    shift = dev.mean(axis=0)
    var = ((dev - shift) ** 2).sum(axis=0) / (preds.shape[0] - 1)
    return EnsembleStats(mean=preds[0] + shift, variance=var)


def ensemble_member_predictions(ensemble: BootstrapEnsemble, X) -> Sequence[np.ndarray]:
    X = _check_rows(X)
    return [np.asarray(m.predict(X), dtype=float) for m in ensemble.members]
