"""Training on feature matrices, k-fold cross-validation and prediction."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from ..errors import DegenerateDataWarning, ShapeError
from ..folds import kfold_split
from ..mrl_features import FeatureMatrix
from ..reports import EvaluationReport, confusion_from_predictions
from ..roc import roc_curve, summarize
from .base import GlareClassifier


@dataclass
class TrainedModel:
    """A fitted estimator plus what is needed to apply it to new scenes."""

    spec: "ClassifierSpec"  # noqa: F821
    estimator: GlareClassifier
    feature_names: list[str]
    fingerprint: dict = field(default_factory=dict)
    extraction: dict = field(default_factory=dict)
    threshold: float = 0.5

    def predict(self, row) -> tuple[int, float]:
        row = np.asarray(row, dtype=np.float64).ravel()
        if row.size != len(self.feature_names):
            raise ShapeError(f"model expects {len(self.feature_names)} features, got {row.size}")
        score = float(self.estimator.glare_score(row.reshape(1, -1))[0])
        return int(score >= self.threshold), score

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ShapeError(f"model expects {len(self.feature_names)} features per row")
        scores = self.estimator.glare_score(X)
        return (scores >= self.threshold).astype(np.int64), scores


def train(data: FeatureMatrix, spec) -> TrainedModel:
    est = spec.build().fit(data.values, data.labels)
    return TrainedModel(
        spec=spec,
        estimator=est,
        feature_names=list(data.feature_names),
        fingerprint={"dataset": data.dataset_name, "n": int(data.n), "seed": spec.seed},
    )


def _scores_report(y, scores, threshold) -> EvaluationReport:
    rep = EvaluationReport(confusion=confusion_from_predictions(y, scores >= threshold))
    if 0 < y.sum() < y.size:
        s = summarize(roc_curve(scores, y))
        rep.auc, rep.sqd = s.auc, s.sqd
    rep.scores = scores
    return rep


def cross_validate(data: FeatureMatrix, spec, k: int = 5, seed=0, threshold: float = 0.5,
                   estimator: GlareClassifier | None = None) -> EvaluationReport:
    """Pooled out-of-fold confusion, per-fold reports and the ROC summary of out-of-fold scores.

    Single-class training folds fall back to a constant model; the warning
    is raised once for the whole run rather than once per fold.
    """
    X = np.asarray(data.values, dtype=np.float64)
    y = np.asarray(data.labels).astype(np.int64)
    base = estimator if estimator is not None else spec.build()
    folds = kfold_split(len(y), k, seed)
    oof = np.full(len(y), np.nan)
    per_fold = []
    degenerate = 0
    for train_idx, test_idx in folds.folds():
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateDataWarning)
            est = clone(base).fit(X[train_idx], y[train_idx])
        for w in caught:
            if issubclass(w.category, DegenerateDataWarning):
                degenerate += 1
            else:
                warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
        s = est.glare_score(X[test_idx])
        oof[test_idx] = s
        per_fold.append(_scores_report(y[test_idx], s, threshold))
    if degenerate:
        warnings.warn(f"{degenerate} of {k} training folds held a single class; "
                      "constant models were used for them", DegenerateDataWarning, stacklevel=2)
    rep = _scores_report(y, oof, threshold)
    rep.per_fold = per_fold
    return rep
