"""Flat array representation of binary decision trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FlatTree:
    """
    Node ``i`` is a leaf when ``feature[i] < 0``; otherwise samples with
    ``x[feature[i]] < threshold[i]`` go to ``left[i]``, the rest to ``right[i]``.
    ``value`` holds the per-leaf payload (class counts or path length).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            nd = node[idx]
            f = self.feature[nd]
            go_left = X[idx, f] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            n, d = stack.pop()
            best = max(best, d)
            if self.feature[n] >= 0:
                stack.append((int(self.left[n]), d + 1))
                stack.append((int(self.right[n]), d + 1))
        return best

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlatTree":
        return cls(np.asarray(data["feature"], dtype=np.intp),
                   np.asarray(data["threshold"], dtype=np.float64),
                   np.asarray(data["left"], dtype=np.intp),
                   np.asarray(data["right"], dtype=np.intp),
                   np.asarray(data["value"], dtype=np.float64))


class TreeBuilder:
    """Accumulates nodes in creation order."""

    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self, value, feature: int = -1, threshold: float = 0.0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def set_split(self, node: int, feature: int, threshold: float, left: int, right: int):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> FlatTree:
        return FlatTree(np.asarray(self.feature, dtype=np.intp),
                        np.asarray(self.threshold, dtype=np.float64),
                        np.asarray(self.left, dtype=np.intp),
                        np.asarray(self.right, dtype=np.intp),
                        np.asarray(self.value, dtype=np.float64))
