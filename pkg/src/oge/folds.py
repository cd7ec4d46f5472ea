"""Seeded k-fold partitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SplitError

__all__ = ["FoldAssignment", "kfold_split", "SeededKFold"]


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray  # fold id in 1..k for each row
    seed: int | None

    def sizes(self) -> list[int]:
        return [int(np.sum(self.assignment == f)) for f in range(1, self.k + 1)]

    def folds(self):
        """Yield ``(train_idx, test_idx)`` for folds 1..k."""
        for f in range(1, self.k + 1):
            test = self.assignment == f
            yield np.flatnonzero(~test), np.flatnonzero(test)


def kfold_split(n: int, k: int, seed=0) -> FoldAssignment:
    """Random permutation of the rows cut into ``k`` blocks; the first ``n % k`` blocks get one extra row."""
    if k < 2:
        raise SplitError(f"k must be at least 2, got {k}")
    if n < k:
        raise SplitError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.repeat(np.arange(1, k + 1), sizes)
    return FoldAssignment(k=k, assignment=assignment, seed=seed)


class SeededKFold:
    """scikit-learn compatible splitter wrapping :func:`kfold_split`."""

    def __init__(self, n_splits=5, random_state=0):
        self.n_splits = n_splits
        self.random_state = random_state

    def get_n_splits(self, X=None, y=None, groups=None) -> int:
        return self.n_splits

    def split(self, X, y=None, groups=None):
        yield from kfold_split(len(X), self.n_splits, self.random_state).folds()
