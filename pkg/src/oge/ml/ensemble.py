"""Tree ensembles: bootstrap-aggregated trees and RUSBoost."""

from __future__ import annotations

import math

import numpy as np

from .base import GlareClassifier
from .tree import TreeNodes, grow_tree


class BaggedTrees(GlareClassifier):
    """Mean leaf probability over trees grown on bootstrap resamples."""

    def __init__(self, n_learners=30, max_splits=None, min_leaf_size=1, random_state=0):
        self.n_learners = n_learners
        self.max_splits = max_splits
        self.min_leaf_size = min_leaf_size
        self.random_state = random_state

    def _fit(self, X, y):
        if self.n_learners < 1:
            raise ValueError("n_learners must be >= 1")
        rng = np.random.default_rng(self.random_state)
        n = X.shape[0]
        self.trees_ = []
        for _ in range(self.n_learners):
            idx = rng.integers(0, n, size=n)
            self.trees_.append(
                grow_tree(X[idx], y[idx], max_splits=self.max_splits, min_leaf_size=self.min_leaf_size)
            )

    def _score(self, X):
        return np.mean([t.predict_value(X) for t in self.trees_], axis=0)

    def _get_state(self):
        return {"trees": [t.to_dict() for t in self.trees_]}

    def _set_state(self, state):
        self.trees_ = [TreeNodes.from_dict(d) for d in state["trees"]]


class RUSBoostTrees(GlareClassifier):
    """Boosting with random undersampling of the majority class each round.

    Each round keeps every minority row and an equal-sized random draw of the
    majority rows, fits a shallow tree to the boosting weights restricted to
    that subset, and scores it by the two-class pseudo-loss on the full set.
    ``round_class_counts_`` records ``(n_noglare, n_glare)`` used per round.
    """

    def __init__(self, n_learners=30, learning_rate=0.1, max_splits=20, min_leaf_size=1, random_state=0):
        self.n_learners = n_learners
        self.learning_rate = learning_rate
        self.max_splits = max_splits
        self.min_leaf_size = min_leaf_size
        self.random_state = random_state

    def _fit(self, X, y):
        if self.n_learners < 1:
            raise ValueError("n_learners must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        rng = np.random.default_rng(self.random_state)
        n = X.shape[0]
        pos = np.flatnonzero(y == 1)
        neg = np.flatnonzero(y == 0)
        minority, majority = (pos, neg) if pos.size <= neg.size else (neg, pos)
        D = np.full(n, 1.0 / n)
        lr = float(self.learning_rate)
        self.trees_, self.alphas_, self.round_class_counts_ = [], [], []
        for _ in range(self.n_learners):
            keep = np.sort(np.concatenate([minority, rng.choice(majority, size=minority.size, replace=False)]))
            tree = grow_tree(X[keep], y[keep], sample_weight=D[keep],
                             max_splits=self.max_splits, min_leaf_size=self.min_leaf_size)
            p1 = tree.predict_value(X)
            h_true = np.where(y == 1, p1, 1.0 - p1)
            # two-class pseudo-loss: 0.5 * sum D (1 - h(x, y) + h(x, not y)) = sum D (1 - h(x, y))
            eps = float(np.sum(D * (1.0 - h_true)))
            if eps >= 0.5:
                if not self.trees_:
                    self._keep(tree, 1.0, y[keep])
                break
            eps = max(eps, 1e-10)
            beta = eps / (1.0 - eps)
            self._keep(tree, lr * math.log(1.0 / beta), y[keep])
            D = D * beta ** (lr * h_true)
            D /= D.sum()

    def _keep(self, tree, alpha, y_kept):
        self.trees_.append(tree)
        self.alphas_.append(float(alpha))
        self.round_class_counts_.append((int(np.sum(y_kept == 0)), int(np.sum(y_kept == 1))))

    def _score(self, X):
        a = np.asarray(self.alphas_)
        votes = np.array([t.predict_value(X) for t in self.trees_])
        return a @ votes / a.sum()

    def _get_state(self):
        return {
            "trees": [t.to_dict() for t in self.trees_],
            "alphas": list(self.alphas_),
            "round_class_counts": [list(c) for c in self.round_class_counts_],
        }

    def _set_state(self, state):
        self.trees_ = [TreeNodes.from_dict(d) for d in state["trees"]]
        self.alphas_ = [float(a) for a in state["alphas"]]
        self.round_class_counts_ = [tuple(c) for c in state["round_class_counts"]]
