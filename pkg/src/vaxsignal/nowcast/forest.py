"""Random forest regression built from MSE-impurity regression trees.

Each tree is grown on the full sample (or a bootstrap draw when enabled)
and considers a fresh random subset of the features at every split. A leaf
predicts the mean of its training targets; the forest averages its trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateTarget, DimensionMismatch


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 2
    feature_subsample: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def features_per_split(self, d: int) -> int:
        m = self.feature_subsample if self.feature_subsample is not None else math.ceil(math.sqrt(d))
        return max(1, min(d, m))

    def to_dict(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "feature_subsample": self.feature_subsample, "bootstrap": self.bootstrap, "seed": self.seed}


@dataclass(frozen=True)
class RegressionTree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf; rows with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        """Index of the leaf reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.intp)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "n_samples")}

    @classmethod
    def from_dict(cls, d) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=np.intp), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.intp), np.array(d["right"], dtype=np.intp),
                   np.array(d["value"], dtype=float), np.array(d["n_samples"], dtype=np.intp))


def _best_split(x, y, min_leaf):
    """Best threshold on one feature: (sse_reduction, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    total, total_sq = csum[-1], csq[-1]
    i = np.arange(min_leaf, n - min_leaf + 1)  # size of the left part
    if i.size == 0:
        return None
    valid = xs[i - 1] < xs[i]
    if not np.any(valid):
        return None
    nl = i.astype(float)
    nr = n - nl
    sl, sr = csum[i - 1], total - csum[i - 1]
    sse_l = csq[i - 1] - sl * sl / nl
    sse_r = (total_sq - csq[i - 1]) - sr * sr / nr
    parent = total_sq - total * total / n
    gain = np.where(valid, parent - (sse_l + sse_r), -np.inf)
    j = int(np.argmax(gain))
    if not np.isfinite(gain[j]):
        return None
    cut = i[j]
    thr = 0.5 * (xs[cut - 1] + xs[cut])
    if thr >= xs[cut]:  # midpoint rounded onto the upper value
        thr = xs[cut - 1]
    return float(gain[j]), float(thr)


def grow_tree(X, y, params: ForestParams, rng: np.random.Generator) -> RegressionTree:
    n, d = X.shape
    m = params.features_per_split(d)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[idx])))
        count.append(len(idx))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if len(idx) < 2 * params.min_leaf:
            continue
        yi = y[idx]
        if np.all(yi == yi[0]):
            continue
        feats = rng.choice(d, size=m, replace=False) if m < d else np.arange(d)
        best = None
        for f in feats:
            s = _best_split(X[idx, f], yi, params.min_leaf)
            if s is not None and s[0] > 0 and (best is None or s[0] > best[0]):
                best = (s[0], int(f), s[1])
        if best is None:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return RegressionTree(np.array(feature, dtype=np.intp), np.array(threshold),
                          np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
                          np.array(value), np.array(count, dtype=np.intp))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    params: ForestParams
    n_features: int
    feature_names: tuple = ()
    importances: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {
            "family": "forest",
            "params": self.params.to_dict(),
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "feature_importances": [float(v) for v in self.importances] if self.importances is not None else None,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "ForestModel":
        imp = d.get("feature_importances")
        return cls(tuple(RegressionTree.from_dict(t) for t in d["trees"]), ForestParams(**d["params"]),
                   int(d["n_features"]), tuple(d.get("feature_names", ())),
                   np.array(imp) if imp is not None else None)


def _sse(v):
    return float(np.sum((v - v.mean()) ** 2)) if v.size else 0.0


def _importances(trees, X, y, d):
    """Total impurity decrease per feature, normalized to sum to one."""
    imp = np.zeros(d)
    for t in trees:
        frontier = [(0, np.arange(len(X)))]
        while frontier:
            nd, idx = frontier.pop()
            f = t.feature[nd]
            if f < 0 or idx.size == 0:
                continue
            mask = X[idx, f] <= t.threshold[nd]
            li, ri = idx[mask], idx[~mask]
            imp[f] += _sse(y[idx]) - _sse(y[li]) - _sse(y[ri])
            frontier.append((t.left[nd], li))
            frontier.append((t.right[nd], ri))
    total = imp.sum()
    return imp / total if total > 0 else imp


def forest_fit(X, y, params: ForestParams = ForestParams(), feature_names=()) -> ForestModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"X has {n} rows but y has shape {y.shape}")
    if n < 2 * params.min_leaf:
        raise DegenerateTarget(f"need at least {2 * params.min_leaf} samples, got {n}")
    trees = []
    for child in np.random.SeedSequence(params.seed).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        if params.bootstrap:
            rows = rng.integers(0, n, size=n)
            trees.append(grow_tree(X[rows], y[rows], params, rng))
        else:
            trees.append(grow_tree(X, y, params, rng))
    return ForestModel(tuple(trees), params, d, tuple(feature_names), _importances(trees, X, y, d))


def forest_predict(model: ForestModel, X) -> np.ndarray:
    """Mean over trees of each tree's leaf value."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if model.n_features == 1 else X[None, :]
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    total = np.zeros(len(X))
    for t in model.trees:
        total += t.predict(X)
    return total / len(model.trees)
