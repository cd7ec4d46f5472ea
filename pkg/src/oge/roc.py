"""ROC curves, AUC, squared distance to the ideal corner, cutoffs and their stability.

Scores are oriented so that "higher means glare" internally; a metric declared
``"lower"`` is negated on the way in and cutoffs are reported in its own units.
With lower orientation a scene is predicted glare when its score is *at or
below* the cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RocError, SplitError, UnknownMetricError, VariationUndefinedError
from .folds import FoldAssignment, kfold_split
from .glare_metrics import METRIC_NAMES
from .reports import EvaluationReport, confusion_from_predictions

__all__ = [
    "RocCurve", "RocSummary", "CutoffComparison", "roc_curve", "summarize", "auc_score",
    "evaluate_at_cutoff", "cross_validated_cutoff", "variation_error", "metric_orientation_table",
    "orientation_for", "metric_table_row", "GENERALIZABLE_E",
]

HIGHER = "higher"
LOWER = "lower"
GENERALIZABLE_E = 10.0


def _sign(orientation: str) -> float:
    if orientation == HIGHER:
        return 1.0
    if orientation == LOWER:
        return -1.0
    raise ValueError(f"orientation must be 'higher' or 'lower', got {orientation!r}")


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise RocError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise RocError("scores must be finite")
    if not np.all(np.isin(y, (0, 1))):
        raise RocError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.sum() == 0 or y.sum() == y.size:
        raise RocError("ROC needs at least one positive and one negative label")
    return s, y


@dataclass(frozen=True)
class RocCurve:
    """Operating points from strictest to most lenient threshold.

    ``thresholds`` are in the metric's own units and start and end with the
    infinite sentinels.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    orientation: str = HIGHER

    @property
    def auc(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def roc_curve(scores, labels, orientation: str = HIGHER) -> RocCurve:
    sign = _sign(orientation)
    s, y = _check(scores, labels)
    z = sign * s
    distinct = np.unique(z)[::-1]  # strictest first
    P, N = int(y.sum()), int(y.size - y.sum())
    # counts of positives/negatives with oriented score >= t for each distinct t
    order = np.argsort(-z, kind="stable")
    zs, ys = z[order], y[order]
    last = np.searchsorted(-zs, -distinct, side="right") - 1
    tp = np.cumsum(ys)[last]
    fp = np.cumsum(1 - ys)[last]
    tpr = np.concatenate([[0.0], tp / P, [1.0]])
    fpr = np.concatenate([[0.0], fp / N, [1.0]])
    thr = np.concatenate([[np.inf], distinct, [-np.inf]]) * sign
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thr, orientation=orientation)


def auc_score(scores, labels, orientation: str = HIGHER) -> float:
    return roc_curve(scores, labels, orientation).auc


@dataclass(frozen=True)
class RocSummary:
    auc: float
    cutoff: float
    sqd: float
    tpr_at_cutoff: float
    tnr_at_cutoff: float
    orientation: str = HIGHER


def summarize(curve: RocCurve, criterion: str = "sqd") -> RocSummary:
    """Pick the operating point minimising (1-TPR)^2 + FPR^2 (or maximising Youden's J).

    Candidates are every distinct score plus the "predict nobody" position,
    which is reported as the next float beyond the strictest score.  Ties go
    to the larger TPR, then the smaller threshold (in oriented units).
    """
    sign = _sign(curve.orientation)
    tpr, fpr = curve.tpr[:-1], curve.fpr[:-1]  # drop the trailing -inf sentinel
    z = curve.thresholds[:-1] * sign
    z = z.copy()
    z[0] = np.nextafter(z[1], np.inf)
    if criterion == "sqd":
        obj = (1.0 - tpr) ** 2 + fpr ** 2
    elif criterion == "youden":
        obj = -(tpr - fpr)
    else:
        raise ValueError(f"unknown cutoff criterion {criterion!r}")
    best = np.flatnonzero(obj <= obj.min() + 1e-15)
    best = min(best, key=lambda i: (-tpr[i], z[i]))
    return RocSummary(
        auc=curve.auc,
        cutoff=float(z[best] * sign),
        sqd=float((1.0 - tpr[best]) ** 2 + fpr[best] ** 2),
        tpr_at_cutoff=float(tpr[best]),
        tnr_at_cutoff=float(1.0 - fpr[best]),
        orientation=curve.orientation,
    )


def predict_at_cutoff(scores, cutoff: float, orientation: str = HIGHER) -> np.ndarray:
    sign = _sign(orientation)
    return (sign * np.asarray(scores, dtype=np.float64) >= sign * cutoff).astype(np.int64)


def evaluate_at_cutoff(scores, labels, cutoff: float, orientation: str = HIGHER) -> EvaluationReport:
    y = np.asarray(labels).astype(np.int64)
    conf = confusion_from_predictions(y, predict_at_cutoff(scores, cutoff, orientation))
    rep = EvaluationReport(confusion=conf, cutoff=float(cutoff))
    if 0 < y.sum() < y.size:
        fpr = 1.0 - conf.tnr
        rep.sqd = (1.0 - conf.tpr) ** 2 + fpr ** 2
    return rep


def variation_error(c1: float, c2: float) -> float:
    """Percent variation between the fold-averaged and combined cutoffs."""
    if c1 == 0:
        raise VariationUndefinedError("variation error is undefined when the fold-averaged cutoff is 0")
    return abs(c1 - c2) / abs(c1) * 100.0


@dataclass
class CutoffComparison:
    c1: float
    c2: float
    e: float
    fold_summaries: list[RocSummary]
    combined: RocSummary
    folds: FoldAssignment
    fold_cutoffs: list[float] = field(default_factory=list)

    @property
    def generalizable(self) -> bool:
        return bool(self.e < GENERALIZABLE_E)


def stratifiable_folds(labels, k: int, seed, max_retries: int = 100) -> FoldAssignment:
    """A seeded partition in which every fold holds both classes.

    The first draw uses ``seed`` itself; redraws use seeds spawned from it.
    """
    y = np.asarray(labels).astype(np.int64)
    for attempt in range(max_retries + 1):
        s = seed if attempt == 0 else int(np.random.SeedSequence([int(seed), attempt]).generate_state(1)[0])
        folds = kfold_split(y.size, k, s)
        if all(0 < y[test].sum() < test.size for _, test in folds.folds()):
            return folds
    raise SplitError(f"no {k}-fold split with both classes in every fold after {max_retries} redraws")


def cross_validated_cutoff(scores, labels, k: int = 5, seed=0, orientation: str = HIGHER,
                           criterion: str = "sqd", max_retries: int = 100) -> CutoffComparison:
    """Per-fold cutoffs derived on each *test* fold, their mean, and the all-data cutoff."""
    cmp = _compare_cutoffs(scores, labels, k, seed, orientation, criterion, max_retries)
    cmp.e = variation_error(cmp.c1, cmp.c2)
    return cmp


def _compare_cutoffs(scores, labels, k, seed, orientation, criterion, max_retries) -> CutoffComparison:
    s, y = _check(scores, labels)
    folds = stratifiable_folds(y, k, seed, max_retries)
    sums = [summarize(roc_curve(s[test], y[test], orientation), criterion) for _, test in folds.folds()]
    cutoffs = [x.cutoff for x in sums]
    combined = summarize(roc_curve(s, y, orientation), criterion)
    return CutoffComparison(c1=float(np.mean(cutoffs)), c2=combined.cutoff, e=float("nan"),
                            fold_summaries=sums, combined=combined, folds=folds, fold_cutoffs=cutoffs)


_ORIENTATION = {name: HIGHER for name in METRIC_NAMES}
_ORIENTATION["VCP"] = LOWER


def metric_orientation_table(overrides: dict | None = None) -> dict[str, str]:
    table = dict(_ORIENTATION)
    for name, o in (overrides or {}).items():
        _sign(o)
        table[name] = o
    return table


def orientation_for(metric: str, overrides: dict | None = None) -> str:
    table = metric_orientation_table(overrides)
    if metric not in table:
        raise UnknownMetricError(metric)
    return table[metric]


def metric_table_row(metric: str, scores, labels, k: int = 5, seed=0, fold_eval: str = "per-fold",
                     orientation: str | None = None, criterion: str = "sqd") -> dict:
    """Fold-averaged and combined OA/TPR/TNR/cutoff/AUC/SqD for one metric, plus E.

    ``fold_eval="per-fold"`` scores each test fold at its own cutoff and
    averages the rates; ``"mean-cutoff"`` applies the averaged cutoff to every
    test fold and pools the counts.
    """
    if orientation is None:
        orientation = orientation_for(metric)
    s, y = _check(scores, labels)
    cmp = _compare_cutoffs(s, y, k, seed, orientation, criterion, max_retries=100)
    try:
        cmp.e = variation_error(cmp.c1, cmp.c2)
    except VariationUndefinedError:
        pass  # E stays NaN
    folds = list(cmp.folds.folds())
    if fold_eval == "per-fold":
        reps = [evaluate_at_cutoff(s[te], y[te], fs.cutoff, orientation) for (_, te), fs in zip(folds, cmp.fold_summaries)]
        oa = float(np.mean([r.oa for r in reps]))
        tpr = float(np.mean([r.tpr for r in reps]))
        tnr = float(np.mean([r.tnr for r in reps]))
        sqd = float(np.mean([fs.sqd for fs in cmp.fold_summaries]))
    elif fold_eval == "mean-cutoff":
        rep = evaluate_at_cutoff(s, y, cmp.c1, orientation)
        oa, tpr, tnr, sqd = rep.oa, rep.tpr, rep.tnr, rep.sqd
    else:
        raise ValueError(f"fold_eval must be 'per-fold' or 'mean-cutoff', got {fold_eval!r}")
    comb = evaluate_at_cutoff(s, y, cmp.c2, orientation)
    return {
        "metric": metric,
        "orientation": orientation,
        "kfold_OA": oa, "kfold_TPR": tpr, "kfold_TNR": tnr, "kfold_cutoff": cmp.c1,
        "kfold_AUC": float(np.mean([fs.auc for fs in cmp.fold_summaries])), "kfold_SqD": sqd,
        "combined_OA": comb.oa, "combined_TPR": comb.tpr, "combined_TNR": comb.tnr,
        "combined_cutoff": cmp.c2, "combined_AUC": cmp.combined.auc, "combined_SqD": cmp.combined.sqd,
        "E": cmp.e,
        "generalizable": cmp.generalizable,
    }
