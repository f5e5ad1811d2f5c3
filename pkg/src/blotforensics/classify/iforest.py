"""Isolation forest one-class model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from ..core import ContractError
from .trees import FlatTree, TreeBuilder

_HARMONIC = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, 100_001))])


def harmonic(n: int) -> float:
    if n < _HARMONIC.size:
        return float(_HARMONIC[n])
    return math.log(n) + 0.5772156649015329 + 1.0 / (2 * n)


def average_path_length(n: int) -> float:
    """``c(n) = 2 H(n-1) - 2 (n-1) / n``: mean unsuccessful-search depth in a BST of n keys."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


def grow_isolation_tree(X: np.ndarray, height_limit: int, rng: np.random.Generator) -> FlatTree:
    """Random axis-aligned splits until isolation or the height limit; leaves store path lengths."""
    builder = TreeBuilder()
    root = builder.add(0.0)
    stack = [(root, np.arange(X.shape[0]), 0)]
    n_features = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        size = idx.size
        leaf_value = depth + average_path_length(size)
        if depth >= height_limit or size <= 1:
            builder.value[node] = leaf_value
            continue
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.nonzero(hi > lo)[0]
        if candidates.size == 0:
            builder.value[node] = leaf_value
            continue
        f = int(candidates[rng.integers(candidates.size)])
        thr = float(rng.uniform(lo[f], hi[f]))
        if not thr > lo[f]:
            thr = float(np.nextafter(lo[f], hi[f]))
        go_left = sub[:, f] < thr
        lnode = builder.add(0.0)
        rnode = builder.add(0.0)
        builder.set_split(node, f, thr, lnode, rnode)
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    return builder.build()


@dataclass
class IsolationForestModel:
    trees: List[FlatTree]
    subsample_size: int
    n_trees: int
    rng_seed: int
    feature_dim: int

    @property
    def height_limit(self) -> int:
        return int(math.ceil(math.log2(max(self.subsample_size, 2))))

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_dim:
            raise ContractError(f"expected {self.feature_dim} features, got {X.shape[1]}")
        return X

    def path_lengths(self, X) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.value[tree.apply(X)]
        return total / len(self.trees)

    def anomaly_score(self, X) -> np.ndarray:
        """``2^(-E[h(x)] / c(subsample))`` in [0, 1]; higher is more anomalous."""
        return 2.0 ** (-self.path_lengths(X) / average_path_length(self.subsample_size))

    def score_samples(self, X) -> np.ndarray:
        """Negated anomaly score, so higher means more typical of the training data."""
        return -self.anomaly_score(X)

    def to_dict(self) -> dict:
        return {"kind": "isolation-forest", "subsample_size": self.subsample_size, "n_trees": self.n_trees,
                "rng_seed": self.rng_seed, "feature_dim": self.feature_dim,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, data: dict) -> "IsolationForestModel":
        return cls([FlatTree.from_dict(t) for t in data["trees"]], int(data["subsample_size"]),
                   int(data["n_trees"]), int(data["rng_seed"]), int(data["feature_dim"]))


def if_fit(X, n_trees: int = 100, subsample: int | None = None, seed: int = 0) -> IsolationForestModel:
    """
    Fit an isolation forest: each tree sees ``subsample`` rows drawn without
    replacement (default ``min(256, n)``) and stops at height
    ``ceil(log2(subsample))``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ContractError("isolation forest needs at least two samples")
    if not np.all(np.isfinite(X)):
        raise ContractError("features contain NaN or infinite values")
    n = X.shape[0]
    psi = min(256, n) if subsample is None else min(int(subsample), n)
    if psi < 2:
        raise ContractError("subsample size must be >= 2")
    limit = int(math.ceil(math.log2(psi)))
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(seed + i)
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(grow_isolation_tree(X[rows], limit, rng))
    return IsolationForestModel(trees, psi, n_trees, seed, X.shape[1])


def if_score(model: IsolationForestModel, x) -> np.ndarray:
    return model.anomaly_score(x)
