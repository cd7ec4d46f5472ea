"""Weighted CART classification trees grown best-first under a split budget."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .base import GlareClassifier


@dataclass
class TreeNodes:
    """Flat node arrays; ``feature == -1`` marks a leaf whose ``value`` is P(glare)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            active = np.flatnonzero(f >= 0)
            if active.size == 0:
                return node
            cur = node[active]
            go_left = X[active, f[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_splits(self) -> int:
        return int(np.count_nonzero(self.feature >= 0))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNodes":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(X, y, w, idx, min_leaf):
    """Best Gini split of the rows ``idx``: (gain, feature, threshold) or None."""
    n = idx.size
    if n < 2 * min_leaf:
        return None
    Xs = X[idx]
    ws = w[idx]
    wy = ws * y[idx]
    W = ws.sum()
    W1 = wy.sum()
    if W <= 0 or W1 <= 0 or W1 >= W:
        return None
    order = np.argsort(Xs, axis=0, kind="stable")
    V = np.take_along_axis(Xs, order, axis=0)
    cw = np.cumsum(ws[order], axis=0)[:-1]
    cw1 = np.cumsum(wy[order], axis=0)[:-1]
    rw = W - cw
    rw1 = W1 - cw1
    with np.errstate(divide="ignore", invalid="ignore"):
        imp_l = np.where(cw > 0, 2.0 * cw1 * (cw - cw1) / cw, 0.0)
        imp_r = np.where(rw > 0, 2.0 * rw1 * (rw - rw1) / rw, 0.0)
    gain = 2.0 * W1 * (W - W1) / W - imp_l - imp_r
    valid = V[1:] > V[:-1]
    k = np.arange(1, n)[:, None]
    valid &= (k >= min_leaf) & (n - k >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    pos, feat = divmod(flat, Xs.shape[1])
    g = gain[pos, feat]
    if not np.isfinite(g) or g <= 1e-12 * W:
        return None
    thr = 0.5 * (V[pos, feat] + V[pos + 1, feat])
    if thr >= V[pos + 1, feat]:  # midpoint collapsed by rounding
        thr = V[pos, feat]
    return float(g), int(feat), float(thr)


def grow_tree(X, y, sample_weight=None, max_splits=None, min_leaf_size=1) -> TreeNodes:
    """Grow a tree splitting the highest-gain leaf first until ``max_splits`` is spent."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    budget = n - 1 if max_splits is None else int(max_splits)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_leaf(rows):
        ws = w[rows].sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float((w[rows] * y[rows]).sum() / ws) if ws > 0 else float(y[rows].mean()))
        return len(feature) - 1

    heap = []
    counter = 0

    def push(node, rows):
        nonlocal counter
        s = _best_split(X, y, w, rows, min_leaf_size)
        if s is not None:
            heapq.heappush(heap, (-s[0], counter, node, rows, s[1], s[2]))
            counter += 1

    root_rows = np.arange(n)
    push(new_leaf(root_rows), root_rows)
    splits = 0
    while heap and splits < budget:
        _, _, node, rows, feat, thr = heapq.heappop(heap)
        go_left = X[rows, feat] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = feat
        threshold[node] = thr
        left[node] = new_leaf(lrows)
        right[node] = new_leaf(rrows)
        splits += 1
        push(left[node], lrows)
        push(right[node], rrows)

    return TreeNodes(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
    )


class DecisionTree(GlareClassifier):
    """Single Gini tree; the score is the weighted glare fraction of the leaf."""

    def __init__(self, max_splits=100, min_leaf_size=1, random_state=None):
        self.max_splits = max_splits
        self.min_leaf_size = min_leaf_size
        self.random_state = random_state

    def _fit(self, X, y):
        if self.max_splits is not None and self.max_splits < 0:
            raise ValueError("max_splits must be non-negative")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        self.tree_ = grow_tree(X, y, max_splits=self.max_splits, min_leaf_size=self.min_leaf_size)

    def _score(self, X):
        return self.tree_.predict_value(X)

    def _get_state(self):
        return {"tree": self.tree_.to_dict()}

    def _set_state(self, state):
        self.tree_ = TreeNodes.from_dict(state["tree"])
