"""JSON model files."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import FormatError

FORMAT = "oge-model"
FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "hyperparameters": model.estimator.get_params(),
        "feature_names": list(model.feature_names),
        "fingerprint": dict(model.fingerprint),
        "extraction": dict(model.extraction),
        "threshold": model.threshold,
        "state": model.estimator.get_state(),
    }


def model_from_dict(d: dict):
    from . import ALGORITHMS, ClassifierSpec
    from .evaluation import TrainedModel

    if d.get("format") != FORMAT:
        raise FormatError("not an oge model file")
    if d.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {d.get('format_version')!r}")
    spec = ClassifierSpec.from_dict(d["spec"])
    est = ALGORITHMS[spec.algorithm](**d["hyperparameters"]).set_state(d["state"])
    return TrainedModel(spec=spec, estimator=est, feature_names=list(d["feature_names"]),
                        fingerprint=d.get("fingerprint", {}), extraction=d.get("extraction", {}),
                        threshold=float(d.get("threshold", 0.5)))


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(d)
