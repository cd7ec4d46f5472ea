"""``oge`` command line: extract, metrics, train, predict, roc, synth, falsecolor.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Every CSV written starts with ``# oge <version> <subcommand> <config-hash>``
and a ``# config: {...}`` line; readers skip ``#`` lines.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, EmptyInputError, SchemaError
from .falsecolor import falsecolor_rgb, write_ppm
from .glare_metrics import METRIC_NAMES, SourceDetectionParams, glare_metrics
from .hdr_io import load_hdr, to_luminance
from .mrl_features import FeatureMatrix, FovMask, GridSpec, build_mask, dataset_name_for, extract_mrl
from .photometry import FisheyeGeometry, TaskZone
from .reports import apply_acceptance_gates

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- helpers

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("OGE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:12]


def _header_lines(sub: str, config: dict) -> list[str]:
    return [f"oge {__version__} {sub} {_config_hash(config)}", "config: " + json.dumps(config, sort_keys=True)]


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv_text(header_lines, columns, rows) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if v is None:
        return ""
    return v


def read_csv_with_config(path) -> tuple[list[str], list[list[str]], dict]:
    """Columns, rows and the embedded ``# config:`` mapping (empty if absent)."""
    config = {}
    lines = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("config:"):
                config = json.loads(body[len("config:"):])
            continue
        if line.strip():
            lines.append(line)
    if not lines:
        raise SchemaError(f"{path}: no CSV header")
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, list(reader), config


def read_feature_csv(path, require_labels: bool = True) -> tuple[FeatureMatrix, dict]:
    columns, rows, config = read_csv_with_config(path)
    if not columns or columns[0] != "id":
        raise SchemaError(f"{path}: first column must be 'id'")
    has_label = columns[-1] == "label"
    if require_labels and not has_label:
        raise SchemaError(f"{path}: no 'label' column")
    feat_cols = columns[1:-1] if has_label else columns[1:]
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in r[1:1 + len(feat_cols)]] for r in rows], dtype=np.float64)
        labels = np.array([int(r[-1]) for r in rows]) if has_label else np.zeros(len(rows), dtype=np.int64)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    fm = FeatureMatrix(values=values, labels=labels, feature_names=feat_cols,
                       dataset_name=config.get("dataset", Path(path).stem), ids=[r[0] for r in rows])
    return fm, config


def _list_images(path) -> tuple[list[Path], list[str]]:
    """Sorted .hdr files under ``path`` (or the file itself) and names of skipped entries."""
    p = Path(path)
    if p.is_file():
        return [p], []
    if not p.is_dir():
        raise EmptyInputError(f"{path}: no such file or directory")
    files, skipped = [], []
    for f in sorted(p.iterdir()):
        if f.is_file():
            (files if f.suffix.lower() in (".hdr", ".pic", ".rgbe") else skipped).append(f)
    if not files:
        raise EmptyInputError(f"{path}: no .hdr images found")
    return files, skipped


def read_labels(path) -> dict[str, int]:
    from .mrl_features import _label_value

    columns, rows, _ = read_csv_with_config(path)
    if "id" not in columns or "label" not in columns:
        raise SchemaError(f"{path}: labels file needs 'id' and 'label' columns")
    i, j = columns.index("id"), columns.index("label")
    try:
        return {r[i].strip(): _label_value(r[j]) for r in rows}
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _lookup_label(labels: dict[str, int], stem: str):
    for key in (stem, stem + ".hdr", stem.removeprefix("scene_")):
        if key in labels:
            return labels[key]
    return None


def _parse_task_zone(text: str | None) -> TaskZone:
    if not text:
        return TaskZone()
    try:
        parts = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"--task-zone expects RADIUS[,THETA,PHI] in degrees, got {text!r}") from exc
    if len(parts) == 1:
        return TaskZone(radius_deg=parts[0])
    if len(parts) == 3:
        return TaskZone(*parts)
    raise UsageError("--task-zone expects RADIUS or RADIUS,THETA,PHI")


def _mask_from_args(grid: int, mask_arg: str | None) -> FovMask:
    """``--mask`` is a region file (``g,row,col`` lines) or ``ellipse:a_h,a_v[,v0]``."""
    if not mask_arg:
        return build_mask(grid)
    if mask_arg.startswith("ellipse:"):
        vals = [float(t) for t in mask_arg[len("ellipse:"):].split(",")]
        if len(vals) not in (2, 3):
            raise UsageError("--mask ellipse: expects a_h,a_v[,v0]")
        return build_mask(grid, *vals)
    mask = FovMask.from_lines(Path(mask_arg).read_text())
    if mask.grid.g != grid:
        raise UsageError(f"mask file is for grid {mask.grid.g}, not {grid}")
    return mask


def _mask_config(mask: FovMask) -> dict:
    if mask.kind == "ellipse":
        return {"kind": "ellipse", **mask.params}
    return {"kind": "explicit", "regions": mask.to_lines()}


def _mask_from_config(grid: int, cfg: dict) -> FovMask:
    if cfg.get("kind") == "explicit":
        return FovMask.from_lines(cfg["regions"])
    return build_mask(grid, cfg.get("a_h"), cfg.get("a_v"), cfg.get("v0"))


def _detection_params(cfg: dict) -> SourceDetectionParams:
    return SourceDetectionParams(cfg["threshold_multiplier"], cfg["absolute_floor"], cfg["merge_radius"])


def _feature_rows(files, row_fn, strict: bool):
    """Apply ``row_fn`` to every file; returns (ok list of (stem, row), failures)."""
    def safe(f):
        try:
            return f.stem, row_fn(f), None
        except DataError as exc:
            return f.stem, None, f"{f.name}: {exc}"

    results = _map(safe, files)
    failures = [err for _, _, err in results if err]
    for err in failures:
        print(f"error: {err}", file=sys.stderr)
    if failures and strict:
        raise DataError(f"{len(failures)} image(s) failed")
    return [(stem, row) for stem, row, err in results if err is None], failures


def _join_labels(ok, labels_path, strict: bool):
    if not labels_path:
        return ok, None
    labels = read_labels(labels_path)
    kept, labs = [], []
    for stem, row in ok:
        lab = _lookup_label(labels, stem)
        if lab is None:
            msg = f"{stem}: no label in {labels_path}"
            if strict:
                raise SchemaError(msg)
            print(f"error: {msg}", file=sys.stderr)
            continue
        kept.append((stem, row))
        labs.append(lab)
    return kept, labs


def _features_csv(sub, config, names, ok, labs) -> str:
    cols = ["id", *names] + (["label"] if labs is not None else [])
    rows = []
    for i, (stem, row) in enumerate(ok):
        rows.append([stem, *map(float, row)] + ([int(labs[i])] if labs is not None else []))
    return _csv_text(_header_lines(sub, config), cols, rows)


def mrl_row(path, grid: int, mask: FovMask) -> np.ndarray:
    return np.asarray(extract_mrl(to_luminance(load_hdr(path)), None, grid, mask).region_means)


def metrics_row(path, params: SourceDetectionParams, zone: TaskZone, background: str) -> np.ndarray:
    lum = to_luminance(load_hdr(path))
    return glare_metrics(lum, FisheyeGeometry.for_image(lum.width, lum.height), params, zone, background).as_array()


# --------------------------------------------------------------------------- subcommands

def cmd_extract(a) -> int:
    files, skipped = _list_images(a.input)
    for s in skipped:
        print(f"skipped: {s.name} (not an .hdr file)", file=sys.stderr)
    mask = _mask_from_args(a.grid, a.mask)
    extraction = {"kind": "mrl", "grid": a.grid, "mask": _mask_config(mask)}
    config = {"extraction": extraction, "input": str(a.input), "labels": a.labels,
              "dataset": dataset_name_for(mask.count)}
    ok, _ = _feature_rows(files, lambda f: mrl_row(f, a.grid, mask), a.strict)
    ok, labs = _join_labels(ok, a.labels, a.strict)
    names = [f"f{i + 1:03d}" for i in range(mask.count)]
    _write_text(a.out, _features_csv("extract", config, names, ok, labs))
    return EXIT_OK


def cmd_metrics(a) -> int:
    files, skipped = _list_images(a.input)
    for s in skipped:
        print(f"skipped: {s.name} (not an .hdr file)", file=sys.stderr)
    zone = _parse_task_zone(a.task_zone)
    det = {"threshold_multiplier": a.threshold_multiplier, "absolute_floor": a.absolute_floor,
           "merge_radius": a.merge_radius}
    params = _detection_params(det)
    extraction = {"kind": "metrics", "detection": det, "background": a.background,
                  "task_zone": [zone.radius_deg, zone.theta_deg, zone.phi_deg]}
    config = {"extraction": extraction, "input": str(a.input), "labels": a.labels, "dataset": "24-metrics"}
    ok, _ = _feature_rows(files, lambda f: metrics_row(f, params, zone, a.background), a.strict)
    ok, labs = _join_labels(ok, a.labels, a.strict)
    _write_text(a.out, _features_csv("metrics", config, list(METRIC_NAMES), ok, labs))
    return EXIT_OK


def _parse_params(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--param expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


REPORT_COLUMNS = ["dataset", "algorithm", "TP", "TN", "FP", "FN", "OA", "TPR", "TNR", "AUC", "SqD",
                  "OA_macro", "TPR_macro", "TNR_macro", "gate_OA", "gate_TPR", "gate_TNR", "gate_AUC",
                  "gate_SqD", "pass"]


def cmd_train(a) -> int:
    from .ml import ALGORITHMS, ClassifierSpec, cross_validate, save_model, train

    data, fconfig = read_feature_csv(a.features, require_labels=True)
    algos = sorted(ALGORITHMS) if a.algorithm == ["all"] else a.algorithm
    hp = _parse_params(a.param)
    results = []
    for algo in algos:
        if algo not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {algo!r}; choose from {sorted(ALGORITHMS)} or 'all'")
        spec = ClassifierSpec(algo, hp if len(algos) == 1 else {}, a.seed)
        try:
            spec.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        report = cross_validate(data, spec, a.folds, a.seed)
        gates = apply_acceptance_gates(report)
        results.append((spec, report, gates))

    rows = []
    for spec, r, gates in results:
        d = r.as_dict()
        rows.append([data.dataset_name, spec.algorithm, d["TP"], d["TN"], d["FP"], d["FN"], d["OA"], d["TPR"],
                     d["TNR"], d["AUC"], d["SqD"], d["OA_macro"], d["TPR_macro"], d["TNR_macro"],
                     *[gates.flags[g] for g in ("OA", "TPR", "TNR", "AUC", "SqD")], gates.passed])
    config = {"features": str(a.features), "algorithms": algos, "hyperparameters": hp, "folds": a.folds,
              "seed": a.seed, "dataset": data.dataset_name, "extraction": fconfig.get("extraction", {})}
    _write_text(a.report, _csv_text(_header_lines("train", config), REPORT_COLUMNS, rows))

    if a.model_out:
        # the best cross-validated model (gate pass first, then OA) is refitted on all rows
        spec, _, _ = max(results, key=lambda t: (t[2].passed, t[1].oa))
        model = train(data, spec)
        model.extraction = fconfig.get("extraction", {})
        model.fingerprint["features_hash"] = hashlib.sha256(Path(a.features).read_bytes()).hexdigest()[:12]
        save_model(model, a.model_out)
    return EXIT_OK


def _row_fn_for(extraction: dict):
    kind = extraction.get("kind")
    if kind == "mrl":
        grid = int(extraction["grid"])
        mask = _mask_from_config(grid, extraction["mask"])
        return lambda f: mrl_row(f, grid, mask)
    if kind == "metrics":
        params = _detection_params(extraction["detection"])
        zone = TaskZone(*extraction["task_zone"])
        return lambda f: metrics_row(f, params, zone, extraction["background"])
    raise SchemaError("model file does not record how its features were extracted")


def cmd_predict(a) -> int:
    from .ml import load_model

    model = load_model(a.model)
    files, skipped = _list_images(a.input)
    for s in skipped:
        print(f"skipped: {s.name} (not an .hdr file)", file=sys.stderr)
    ok, _ = _feature_rows(files, _row_fn_for(model.extraction), a.strict)
    if a.threshold is not None:
        model.threshold = a.threshold
    rows = []
    for stem, feats in ok:
        label, score = model.predict(feats)
        rows.append([stem, score, label])
    config = {"model": str(a.model), "input": str(a.input), "threshold": model.threshold,
              "fingerprint": model.fingerprint}
    _write_text(a.out, _csv_text(_header_lines("predict", config), ["image_id", "score", "label"], rows))
    return EXIT_OK


ROC_COLUMNS = ["metric", "orientation", "kfold_OA", "kfold_TPR", "kfold_TNR", "kfold_cutoff", "kfold_AUC",
               "kfold_SqD", "combined_OA", "combined_TPR", "combined_TNR", "combined_cutoff", "combined_AUC",
               "combined_SqD", "E", "generalizable", "kfold_pass", "combined_pass"]


def _parse_orientations(items) -> dict:
    out = {}
    for item in items or ():
        name, _, o = item.partition("=")
        if o not in ("higher", "lower"):
            raise UsageError(f"--orientation expects METRIC=higher|lower, got {item!r}")
        out[name] = o
    return out


def cmd_roc(a) -> int:
    from .roc import metric_table_row, orientation_for

    data, _ = read_feature_csv(a.metrics, require_labels=True)
    overrides = _parse_orientations(a.orientation)
    rows = []
    for j, name in enumerate(data.feature_names):
        r = metric_table_row(name, data.values[:, j], data.labels, a.folds, a.seed, a.fold_eval,
                             orientation=orientation_for(name, overrides), criterion=a.criterion)
        kf = apply_acceptance_gates({"oa": r["kfold_OA"], "tpr": r["kfold_TPR"], "tnr": r["kfold_TNR"],
                                     "auc": r["kfold_AUC"], "sqd": r["kfold_SqD"]})
        cb = apply_acceptance_gates({"oa": r["combined_OA"], "tpr": r["combined_TPR"], "tnr": r["combined_TNR"],
                                     "auc": r["combined_AUC"], "sqd": r["combined_SqD"]})
        r["kfold_pass"], r["combined_pass"] = kf.passed, cb.passed
        rows.append(r)
    rows.sort(key=lambda r: -r["combined_OA"])  # stable: ties keep input column order
    config = {"metrics": str(a.metrics), "folds": a.folds, "seed": a.seed, "fold_eval": a.fold_eval,
              "criterion": a.criterion, "orientation_overrides": overrides}
    _write_text(a.out, _csv_text(_header_lines("roc", config), ROC_COLUMNS,
                                 [[r[c] for c in ROC_COLUMNS] for r in rows]))
    return EXIT_OK


def cmd_synth(a) -> int:
    from .synth import ScenarioParams, generate_corpus, params_dict, write_corpus

    params = ScenarioParams(n_scenes=a.n, positive_fraction=a.positive_fraction, quota=not a.bernoulli,
                            label_noise=a.label_noise, resolution=a.resolution, seed=a.seed)
    try:
        params.validate()
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from exc
    scenes = generate_corpus(params, threads=_threads())
    config = params_dict(params)
    write_corpus(scenes, a.out, _header_lines("synth", config))
    return EXIT_OK


def cmd_falsecolor(a) -> int:
    lum = to_luminance(load_hdr(a.input))
    if not 0 < a.lo < a.hi:
        raise UsageError("--lo and --hi must satisfy 0 < lo < hi")
    write_ppm(falsecolor_rgb(lum, a.lo, a.hi), a.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oge", description="Glare evaluation from fisheye HDR images.")
    p.add_argument("--version", action="version", version=f"oge {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common_images(sp):
        sp.add_argument("input", help="directory of .hdr images (or a single file)")
        sp.add_argument("--labels", help="CSV with id,label columns (Glare/NoGlare or 1/0)")
        sp.add_argument("--out", default="-", help="output CSV (default stdout)")
        sp.add_argument("--strict", action="store_true", help="fail on the first unreadable image")

    sp = sub.add_parser("extract", help="multi-region luminance features")
    common_images(sp)
    sp.add_argument("--grid", type=int, default=25)
    sp.add_argument("--mask", help="region file (g,row,col lines) or ellipse:a_h,a_v[,v0]")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("metrics", help="24 luminance, illuminance and glare indices")
    common_images(sp)
    sp.add_argument("--task-zone", help="RADIUS[,THETA,PHI] in degrees (default 30 around the view axis)")
    sp.add_argument("--threshold-multiplier", type=float, default=5.0)
    sp.add_argument("--absolute-floor", type=float, default=None)
    sp.add_argument("--merge-radius", type=float, default=0.2)
    sp.add_argument("--background", choices=("indirect", "nonsource"), default="indirect")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("train", help="cross-validate classifiers and save a model")
    sp.add_argument("features", help="features CSV from extract or metrics, with labels")
    sp.add_argument("--algorithm", action="append", default=None,
                    help="algorithm name (repeatable) or 'all'; default rusboost_trees")
    sp.add_argument("--param", action="append", help="hyperparameter NAME=VALUE (single algorithm only)")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report", "--out", dest="report", default="-", help="report CSV (default stdout)")
    sp.add_argument("--model-out", help="write the selected model here")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="apply a saved model to images")
    sp.add_argument("model")
    sp.add_argument("input")
    sp.add_argument("--out", default="-")
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--strict", action="store_true")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("roc", help="per-metric ROC cut-offs and variation errors")
    sp.add_argument("metrics", help="metrics CSV with labels")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fold-eval", choices=("per-fold", "mean-cutoff"), default="per-fold")
    sp.add_argument("--criterion", choices=("sqd", "youden"), default="sqd")
    sp.add_argument("--orientation", action="append", help="override METRIC=higher|lower")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_roc)

    sp = sub.add_parser("synth", help="generate a labelled synthetic corpus")
    sp.add_argument("out")
    sp.add_argument("--n", type=int, default=80)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--label-noise", type=float, default=0.0)
    sp.add_argument("--positive-fraction", type=float, default=0.375)
    sp.add_argument("--bernoulli", action="store_true", help="draw labels freely instead of an exact quota")
    sp.add_argument("--resolution", type=int, default=256)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("falsecolor", help="log-scaled false-colour PPM of an HDR image")
    sp.add_argument("input")
    sp.add_argument("--out", required=True)
    sp.add_argument("--lo", type=float, default=1.0, help="floor luminance, cd/m2")
    sp.add_argument("--hi", type=float, default=1.0e4, help="ceiling luminance, cd/m2")
    sp.set_defaults(func=cmd_falsecolor)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "algorithm", "") is None:
            args.algorithm = ["rusboost_trees"]
        if hasattr(args, "folds") and args.folds < 2:
            parser.error("--folds must be at least 2")
    except SystemExit as exc:  # usage errors, --help and --version
        return int(exc.code or 0)
    caught = []
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            return args.func(args)
    except UsageError as exc:
        print(f"oge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"oge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"oge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"oge: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        seen = set()
        for w in caught:
            msg = f"warning: {w.category.__name__}: {w.message}"
            if msg not in seen:
                seen.add(msg)
                print(msg, file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
