"""Confusion counts, evaluation reports and the model acceptance gates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Confusion", "EvaluationReport", "GateResult", "GATES", "confusion_from_predictions",
           "apply_acceptance_gates"]


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def oa(self) -> float:
        return _ratio(self.tp + self.tn, self.n)

    @property
    def tpr(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def tnr(self) -> float:
        return _ratio(self.tn, self.tn + self.fp)

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def confusion_from_predictions(y_true, y_pred) -> Confusion:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    return Confusion(
        tp=int(np.sum(y_true & y_pred)),
        tn=int(np.sum(~y_true & ~y_pred)),
        fp=int(np.sum(~y_true & y_pred)),
        fn=int(np.sum(y_true & ~y_pred)),
    )


@dataclass
class EvaluationReport:
    """Pooled confusion plus optional per-fold breakdown and ROC summary.

    ``oa``/``tpr``/``tnr`` come from the pooled counts; ``macro_*`` average the
    per-fold rates (NaN folds skipped).
    """

    confusion: Confusion
    per_fold: list["EvaluationReport"] = field(default_factory=list)
    auc: float | None = None
    sqd: float | None = None
    cutoff: float | None = None
    scores: np.ndarray | None = None

    tp = property(lambda self: self.confusion.tp)
    tn = property(lambda self: self.confusion.tn)
    fp = property(lambda self: self.confusion.fp)
    fn = property(lambda self: self.confusion.fn)
    oa = property(lambda self: self.confusion.oa)
    tpr = property(lambda self: self.confusion.tpr)
    tnr = property(lambda self: self.confusion.tnr)

    def _macro(self, attr: str) -> float:
        vals = [getattr(f, attr) for f in self.per_fold]
        vals = [v for v in vals if v is not None and not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def macro_oa(self) -> float:
        return self._macro("oa")

    @property
    def macro_tpr(self) -> float:
        return self._macro("tpr")

    @property
    def macro_tnr(self) -> float:
        return self._macro("tnr")

    def as_dict(self) -> dict:
        return {
            "TP": self.tp, "TN": self.tn, "FP": self.fp, "FN": self.fn,
            "OA": self.oa, "TPR": self.tpr, "TNR": self.tnr,
            "AUC": self.auc, "SqD": self.sqd,
            "OA_macro": self.macro_oa, "TPR_macro": self.macro_tpr, "TNR_macro": self.macro_tnr,
        }


GATES = {"oa_min": 0.70, "tpr_min": 0.5, "tnr_min": 0.5, "auc_min": 0.6, "sqd_max": 0.5}


@dataclass(frozen=True)
class GateResult:
    passed: bool
    flags: dict  # gate name -> True / False / None (not evaluated)

    def failed(self) -> list[str]:
        return [k for k, v in self.flags.items() if v is False]


def _get(obj, name):
    if isinstance(obj, dict):
        return obj.get(name, obj.get(name.upper()))
    return getattr(obj, name, None)


def _flag(value, test):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return bool(test(value))


def apply_acceptance_gates(report) -> GateResult:
    """OA >= 0.70, TPR > 0.5, TNR > 0.5, AUC >= 0.6, SqD < 0.5.

    ``report`` may be an :class:`EvaluationReport` or a mapping with keys
    oa/tpr/tnr/auc/sqd.  A missing value leaves its flag as ``None`` and does
    not count toward a pass; OA, TPR and TNR are always required.
    """
    g = GATES
    sqd = _get(report, "sqd")
    if sqd is None and isinstance(report, dict):
        sqd = report.get("SqD")
    flags = {
        "OA": _flag(_get(report, "oa"), lambda v: v >= g["oa_min"] - 1e-12),
        "TPR": _flag(_get(report, "tpr"), lambda v: v > g["tpr_min"]),
        "TNR": _flag(_get(report, "tnr"), lambda v: v > g["tnr_min"]),
        "AUC": _flag(_get(report, "auc"), lambda v: v >= g["auc_min"] - 1e-12),
        "SqD": _flag(sqd, lambda v: v < g["sqd_max"]),
    }
    required_ok = all(flags[k] is True for k in ("OA", "TPR", "TNR"))
    passed = required_ok and all(v is not False for v in flags.values())
    return GateResult(passed=passed, flags=flags)
