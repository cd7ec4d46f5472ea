"""Binary glare classifiers with a shared fit/predict/serialize interface."""

from __future__ import annotations

from dataclasses import dataclass, field

from sklearn.base import clone

from .base import GlareClassifier
from .ensemble import BaggedTrees, RUSBoostTrees
from .simple import GaussianNaiveBayes, KNearestNeighbors, LogisticRegression
from .tree import DecisionTree

ALGORITHMS: dict[str, type[GlareClassifier]] = {
    "decision_tree": DecisionTree,
    "bagged_trees": BaggedTrees,
    "rusboost_trees": RUSBoostTrees,
    "gaussian_naive_bayes": GaussianNaiveBayes,
    "knn": KNearestNeighbors,
    "logistic_regression": LogisticRegression,
}

_SEEDED = {"decision_tree", "bagged_trees", "rusboost_trees"}


@dataclass(frozen=True)
class ClassifierSpec:
    algorithm: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {sorted(ALGORITHMS)}")
        est = ALGORITHMS[self.algorithm]()
        known = set(est.get_params()) - {"random_state"}
        unknown = set(self.hyperparameters) - known
        if unknown:
            raise ValueError(f"{self.algorithm} does not accept {sorted(unknown)}")
        hp = self.hyperparameters
        for name in ("n_learners", "k", "min_leaf_size"):
            if name in hp and (not isinstance(hp[name], int) or hp[name] < 1):
                raise ValueError(f"{name} must be a positive integer")
        if "max_splits" in hp and hp["max_splits"] is not None and hp["max_splits"] < 0:
            raise ValueError("max_splits must be non-negative")
        if "learning_rate" in hp and not 0 < hp["learning_rate"] <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if "C" in hp and not hp["C"] > 0:
            raise ValueError("C must be positive")

    def build(self) -> GlareClassifier:
        self.validate()
        params = dict(self.hyperparameters)
        if self.algorithm in _SEEDED:
            params["random_state"] = self.seed
        return ALGORITHMS[self.algorithm](**params)

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierSpec":
        return cls(algorithm=d["algorithm"], hyperparameters=dict(d.get("hyperparameters", {})),
                   seed=int(d.get("seed", 0)))


def make_classifier(algorithm: str, seed: int = 0, **hyperparameters) -> GlareClassifier:
    return ClassifierSpec(algorithm, hyperparameters, seed).build()


from .evaluation import TrainedModel, cross_validate, train  # noqa: E402
from .persistence import load_model, save_model  # noqa: E402

__all__ = [
    "ALGORITHMS", "ClassifierSpec", "make_classifier", "clone", "GlareClassifier",
    "DecisionTree", "BaggedTrees", "RUSBoostTrees", "GaussianNaiveBayes", "KNearestNeighbors",
    "LogisticRegression", "TrainedModel", "train", "cross_validate", "save_model", "load_model",
]
