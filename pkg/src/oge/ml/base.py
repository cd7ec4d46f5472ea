"""Shared estimator plumbing for the binary Glare (1) / NoGlare (0) classifiers."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import DegenerateDataWarning, ShapeError


class GlareClassifier(ClassifierMixin, BaseEstimator):
    """Base class: validation, the single-class fallback and probability output.

    Subclasses implement ``_fit(X, y)``, ``_score(X)`` returning P(glare), and
    ``_get_state`` / ``_set_state`` for JSON persistence.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y)
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 (no glare) or 1 (glare)")
        y = y.astype(np.int64)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        present = np.unique(y)
        if present.size < 2:
            warnings.warn(
                f"training data holds only class {int(present[0])}; fitting a constant model",
                DegenerateDataWarning,
                stacklevel=2,
            )
            self.constant_ = int(present[0])
            return self
        self.constant_ = None
        self._fit(X, y)
        return self

    def _check_input(self, X) -> np.ndarray:
        check_is_fitted(self, "classes_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return check_array(X, dtype=np.float64)

    def glare_score(self, X) -> np.ndarray:
        """P(glare) for each row, in [0, 1]."""
        X = self._check_input(X)
        if self.constant_ is not None:
            return np.full(X.shape[0], float(self.constant_))
        return np.clip(self._score(X), 0.0, 1.0)

    def predict_proba(self, X) -> np.ndarray:
        p = self.glare_score(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.glare_score(X) >= threshold).astype(np.int64)

    # persistence -----------------------------------------------------------
    def get_state(self) -> dict:
        check_is_fitted(self, "classes_")
        state = {"n_features_in": int(self.n_features_in_), "constant": self.constant_}
        if self.constant_ is None:
            state["learned"] = self._get_state()
        return state

    def set_state(self, state: dict):
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(state["n_features_in"])
        self.constant_ = state["constant"]
        if self.constant_ is None:
            self._set_state(state["learned"])
        return self

    def _fit(self, X, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def _score(self, X):  # pragma: no cover - abstract
        raise NotImplementedError

    def _get_state(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError

    def _set_state(self, state: dict):  # pragma: no cover - abstract
        raise NotImplementedError


def zscore_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return mu, sd
