"""Random forest of Gini decision trees for closed-set attribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..core import ContractError
from .trees import FlatTree, TreeBuilder


def _best_gini_split(x: np.ndarray, y_onehot: np.ndarray):
    """
    Best threshold on one feature.  Returns ``(weighted_impurity, threshold)``
    or ``None`` when the feature is constant on the node.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    valid = np.nonzero(xs[1:] > xs[:-1])[0]
    if valid.size == 0:
        return None
    counts = np.cumsum(y_onehot[order], axis=0)
    total = counts[-1]
    n = xs.size
    left = counts[valid]
    right = total - left
    n_left = (valid + 1).astype(np.float64)
    n_right = n - n_left
    gini_left = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
    gini_right = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
    impurity = (n_left * gini_left + n_right * gini_right) / n
    k = int(np.argmin(impurity))
    i = valid[k]
    thr = 0.5 * (xs[i] + xs[i + 1])
    if not thr > xs[i]:
        # midpoint rounded onto the lower value; use the upper one instead
        thr = xs[i + 1]
    return float(impurity[k]), float(thr)


def grow_gini_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_features: int,
                   rng: np.random.Generator, max_depth: int | None = None,
                   min_samples_leaf: int = 1) -> FlatTree:
    """Grow one unpruned classification tree; leaves store class counts."""
    onehot = np.eye(n_classes)[y]
    builder = TreeBuilder()
    n_features = X.shape[1]
    root = builder.add(onehot.sum(axis=0))
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = onehot[idx].sum(axis=0)
        if (np.count_nonzero(counts) <= 1 or idx.size < 2 * min_samples_leaf
                or (max_depth is not None and depth >= max_depth)):
            continue
        best = None
        perm = rng.permutation(n_features)
        visited = 0
        for f in perm:
            # keep drawing past max_features until some feature admits a split
            if visited >= max_features and best is not None:
                break
            visited += 1
            found = _best_gini_split(X[idx, f], onehot[idx])
            if found is None:
                continue
            if best is None or found[0] < best[0]:
                best = (found[0], found[1], int(f))
        # zero-gain splits are kept (XOR-like layouts need them)
        if best is None:
            continue
        impurity, thr, f = best
        go_left = X[idx, f] < thr
        li, ri = idx[go_left], idx[~go_left]
        if li.size < min_samples_leaf or ri.size < min_samples_leaf:
            continue
        lnode = builder.add(onehot[li].sum(axis=0))
        rnode = builder.add(onehot[ri].sum(axis=0))
        builder.set_split(node, f, thr, lnode, rnode)
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return builder.build()


@dataclass
class RandomForestModel:
    trees: List[FlatTree]
    classes: List
    feature_dim: int
    rng_seed: int
    n_classes: int = field(init=False)

    def __post_init__(self):
        self.n_classes = len(self.classes)

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_dim:
            raise ContractError(f"expected {self.feature_dim} features, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the normalized leaf class histograms."""
        X = self._check(X)
        proba = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            counts = tree.value[tree.apply(X)]
            proba += counts / counts.sum(axis=1, keepdims=True)
        proba /= len(self.trees)
        return proba / proba.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.asarray(self.classes, dtype=object)[np.argmax(proba, axis=1)]

    def to_dict(self) -> dict:
        return {"kind": "random-forest", "classes": list(self.classes), "feature_dim": self.feature_dim,
                "rng_seed": self.rng_seed, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, data: dict) -> "RandomForestModel":
        return cls([FlatTree.from_dict(t) for t in data["trees"]], list(data["classes"]),
                   int(data["feature_dim"]), int(data["rng_seed"]))


def rf_fit(X, y, n_trees: int = 100, seed: int = 0, max_features: int | None = None,
           max_depth: int | None = None, min_samples_leaf: int = 1) -> RandomForestModel:
    """
    Fit a random forest: bootstrap sample per tree, ``sqrt(dim)`` candidate
    features per split, unlimited depth.  Tree ``i`` draws from the stream
    seeded with ``seed + i``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ContractError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ContractError("features contain NaN or infinite values")
    classes = sorted(set(y.tolist()), key=lambda v: (str(type(v)), v))
    if len(classes) < 2:
        raise ContractError("random forest needs at least two classes")
    index = {c: i for i, c in enumerate(classes)}
    yi = np.array([index[v] for v in y.tolist()], dtype=np.intp)
    d = X.shape[1]
    if max_features is None:
        max_features = max(1, int(np.sqrt(d)))
    n = X.shape[0]
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(seed + i)
        boot = rng.integers(0, n, size=n)
        trees.append(grow_gini_tree(X[boot], yi[boot], len(classes), max_features, rng,
                                    max_depth, min_samples_leaf))
    return RandomForestModel(trees, classes, d, seed)


def rf_predict_proba(model: RandomForestModel, x) -> np.ndarray:
    return model.predict_proba(x)
