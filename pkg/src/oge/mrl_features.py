"""Multi-region luminance (MRL) features.

The square bounding the image circle is cut into ``g x g`` equal cells and the
cells whose centres fall inside an elliptical field-of-view mask are kept.
Mask coordinates are normalised to the side of that square: ``u`` runs from
-0.5 (left) to 0.5 (right), ``v`` from -0.5 (bottom) to 0.5 (top).  The ellipse
may be shifted vertically; the human visual field extends further down than
up, which is why the calibrated default sits below the optical axis.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import EmptyDatasetError, ShapeError
from .hdr_io import HdrImage, LuminanceMap, load_hdr, to_luminance
from .photometry import FisheyeGeometry, geometry_grids

__all__ = [
    "GridSpec",
    "FovMask",
    "MrlFeatureVector",
    "FeatureMatrix",
    "DEFAULT_GRIDS",
    "REFERENCE_COUNTS",
    "CALIBRATED_ELLIPSE",
    "build_mask",
    "calibrate_ellipse",
    "extract_mrl",
    "assemble_matrix_D",
    "dataset_name_for",
    "MrlExtractor",
]

DEFAULT_GRIDS = (10, 15, 20, 25, 30, 35, 40)
REFERENCE_COUNTS = {10: 62, 15: 133, 20: 244, 25: 374, 30: 554, 35: 739, 40: 980}

# Grid search over a_h, a_v in [0.30, 0.60] (step 0.001) and centre offset in
# [-0.10, 0.10] (step 0.001) against REFERENCE_COUNTS, ranked by exact matches,
# then total absolute deviation.  Counts: 62, 134, 244, 374, 550, 739, 980
# (residuals 0, +1, 0, 0, -4, 0, 0).
CALIBRATED_ELLIPSE = {"a_h": 0.396, "a_v": 0.502, "v0": -0.062}


@dataclass(frozen=True)
class GridSpec:
    g: int

    def __post_init__(self):
        if int(self.g) != self.g or self.g < 2:
            raise ValueError(f"grid size must be an integer >= 2, got {self.g}")

    def cell_centers(self) -> np.ndarray:
        """Normalised coordinate of each cell centre along one axis, left/top first."""
        return (np.arange(self.g) + 0.5) / self.g - 0.5


@dataclass(frozen=True)
class FovMask:
    """Boolean ``g x g`` region mask, row 0 at the top of the picture."""

    grid: GridSpec
    cells: np.ndarray
    kind: str = "ellipse"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (self.grid.g, self.grid.g):
            raise ShapeError(f"mask shape {cells.shape} does not match grid {self.grid.g}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    @property
    def mask_id(self) -> str:
        if self.kind == "ellipse":
            p = self.params
            return f"ellipse(g={self.grid.g},a_h={p['a_h']:g},a_v={p['a_v']:g},v0={p.get('v0', 0.0):g})"
        return f"explicit(g={self.grid.g},n={self.count})"

    def regions(self) -> list[tuple[int, int]]:
        """Included ``(row, col)`` pairs in row-major order."""
        return [tuple(map(int, rc)) for rc in np.argwhere(self.cells)]

    def to_lines(self) -> str:
        return "".join(f"{self.grid.g},{r},{c}\n" for r, c in self.regions())

    @classmethod
    def from_lines(cls, text: str) -> "FovMask":
        rows = [tuple(int(t) for t in line.split(",")) for line in text.splitlines()
                if line.strip() and not line.startswith("#")]
        if not rows:
            raise EmptyDatasetError("mask file lists no regions")
        gs = {r[0] for r in rows}
        if len(gs) != 1:
            raise ShapeError("mask file mixes grid sizes")
        g = gs.pop()
        cells = np.zeros((g, g), dtype=bool)
        for _, r, c in rows:
            cells[r, c] = True
        return cls(GridSpec(g), cells, kind="explicit")


def build_mask(grid: GridSpec | int, a_h: float | None = None, a_v: float | None = None,
               v0: float | None = None) -> FovMask:
    """Elliptical mask; a cell is kept iff ``(u/a_h)^2 + ((v - v0)/a_v)^2 <= 1`` at its centre.

    Omitted parameters take the calibrated defaults.
    """
    grid = grid if isinstance(grid, GridSpec) else GridSpec(int(grid))
    a_h = CALIBRATED_ELLIPSE["a_h"] if a_h is None else float(a_h)
    a_v = CALIBRATED_ELLIPSE["a_v"] if a_v is None else float(a_v)
    v0 = CALIBRATED_ELLIPSE["v0"] if v0 is None else float(v0)
    if not (0 < a_h <= 1 and 0 < a_v <= 1):
        raise ValueError("ellipse semi-axes must lie in (0, 1]")
    c = grid.cell_centers()
    u = c[None, :]
    v = -c[:, None]  # row 0 is the top
    cells = (u / a_h) ** 2 + ((v - v0) / a_v) ** 2 <= 1.0
    return FovMask(grid, cells, kind="ellipse", params={"a_h": a_h, "a_v": a_v, "v0": v0})


def _counts_for(g: int, ah: np.ndarray, av: np.ndarray, v0: float) -> np.ndarray:
    c = GridSpec(g).cell_centers()
    absu = np.sort(np.abs(c))
    cnt = np.zeros(np.broadcast(ah, av).shape, dtype=np.int64)
    for v in c:
        q = 1.0 - ((v - v0) / av) ** 2
        half = np.where(q >= 0, ah * np.sqrt(np.clip(q, 0.0, None)), -1.0)
        cnt += np.searchsorted(absu, half, side="right")
    return cnt


def calibrate_ellipse(targets: dict[int, int] | None = None, axis_range=(0.30, 0.60), step=0.001,
                      offset_range=(-0.10, 0.10), offset_step=0.001) -> dict:
    """Grid-search the mask ellipse against target region counts.

    Candidates are ranked by the number of exact matches, then the summed
    absolute deviation, then the worst relative error, then scan order.  Returns the parameters, counts and
    per-grid residuals.
    """
    targets = targets or REFERENCE_COUNTS
    axes = np.round(np.arange(axis_range[0], axis_range[1] + step / 2, step), 6)
    offsets = np.round(np.arange(offset_range[0], offset_range[1] + offset_step / 2, offset_step), 6)
    AH, AV = np.meshgrid(axes, axes, indexing="ij")
    best = None
    for v0 in offsets:
        tot = np.zeros(AH.shape)
        exact = np.zeros(AH.shape)
        worst = np.zeros(AH.shape)
        for g, t in targets.items():
            cnt = _counts_for(g, AH, AV, float(v0))
            tot += np.abs(cnt - t)
            exact += cnt == t
            worst = np.maximum(worst, np.abs(cnt - t) / t)
        order = np.lexsort((worst.ravel(), tot.ravel(), -exact.ravel()))
        k = order[0]
        key = (-exact.ravel()[k], tot.ravel()[k], worst.ravel()[k])
        if best is None or key < best[0]:
            i, j = np.unravel_index(k, AH.shape)
            best = (key, float(AH[i, j]), float(AV[i, j]), float(v0))
    _, a_h, a_v, v0 = best
    counts = {g: build_mask(g, a_h, a_v, v0).count for g in targets}
    return {
        "a_h": a_h,
        "a_v": a_v,
        "v0": v0,
        "counts": counts,
        "residuals": {g: counts[g] - targets[g] for g in targets},
    }


def dataset_name_for(n_features: int, kind: str = "mrl") -> str:
    return f"MRL-{n_features}" if kind == "mrl" else "24-metrics"


@dataclass(frozen=True)
class MrlFeatureVector:
    region_means: np.ndarray
    grid: GridSpec
    mask_id: str
    empty_regions: tuple = ()


def _cell_index(geom: FisheyeGeometry, g: int) -> np.ndarray:
    """Flat cell id ``row * g + col`` per pixel, ``-1`` outside the image circle."""
    grids = geometry_grids(geom)
    h, w = geom.height, geom.width
    side = 2.0 * geom.radius_px
    x0 = geom.center_x - geom.radius_px
    y0 = geom.center_y - geom.radius_px
    cols = np.clip(np.floor((np.arange(w) - x0) / side * g).astype(int), 0, g - 1)
    rows = np.clip(np.floor((np.arange(h) - y0) / side * g).astype(int), 0, g - 1)
    idx = rows[:, None] * g + cols[None, :]
    return np.where(grids.inside, idx, -1)


def extract_mrl(lum: LuminanceMap, geom: FisheyeGeometry | None, grid: GridSpec | int, mask: FovMask) -> MrlFeatureVector:
    """Plain pixel-mean luminance of every included region (row-major order)."""
    grid = grid if isinstance(grid, GridSpec) else GridSpec(int(grid))
    if mask.grid.g != grid.g:
        raise ShapeError(f"mask built for g={mask.grid.g}, grid is g={grid.g}")
    geom = geom or FisheyeGeometry.for_image(lum.width, lum.height)
    geom.check_matches(lum)
    cell = _cell_index(geom, grid.g).ravel()
    keep = cell >= 0
    n_cells = grid.g * grid.g
    sums = np.bincount(cell[keep], weights=lum.values.ravel()[keep], minlength=n_cells)
    counts = np.bincount(cell[keep], minlength=n_cells)
    sel = np.flatnonzero(mask.cells.ravel())
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts[sel] > 0, sums[sel] / np.maximum(counts[sel], 1), 0.0)
    empty = tuple(int(i) for i in np.flatnonzero(counts[sel] == 0))
    return MrlFeatureVector(region_means=means, grid=grid, mask_id=mask.mask_id, empty_regions=empty)


@dataclass
class FeatureMatrix:
    """Features ``values`` (n x m) plus binary ``labels`` (1 = glare)."""

    values: np.ndarray
    labels: np.ndarray
    feature_names: list
    dataset_name: str
    ids: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2:
            raise ShapeError("feature values must be 2-D")
        if self.values.shape[0] != self.labels.shape[0]:
            raise ShapeError("row count differs from label count")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("feature matrix holds missing or non-finite values")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ShapeError("labels must be 0 or 1")
        if not self.ids:
            self.ids = [str(i + 1) for i in range(self.n)]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def as_D(self) -> np.ndarray:
        """The n x (m + 1) matrix with the label as last column."""
        return np.column_stack([self.values, self.labels])

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", *self.feature_names, "label"])
        for rid, row, lab in zip(self.ids, self.values, self.labels):
            w.writerow([rid, *(repr(float(v)) for v in row), int(lab)])
        return buf.getvalue()


def _label_value(lab) -> int:
    if isinstance(lab, str):
        s = lab.strip().lower()
        if s in ("glare", "1", "yes", "true"):
            return 1
        if s in ("noglare", "no glare", "no_glare", "0", "no", "false"):
            return 0
        raise ValueError(f"unrecognised label {lab!r}")
    v = int(lab)
    if v not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {lab!r}")
    return v


def assemble_matrix_D(vectors, labels, ids=None, dataset_name=None) -> FeatureMatrix:
    """Stack MRL vectors or glare-metric records with their Glare/NoGlare labels."""
    from .glare_metrics import METRIC_NAMES, GlareMetricsRecord

    vectors = list(vectors)
    labels = list(labels)
    if not vectors:
        raise EmptyDatasetError("no feature vectors supplied")
    if len(vectors) != len(labels):
        raise ShapeError(f"{len(vectors)} vectors but {len(labels)} labels")
    kind = "metrics" if isinstance(vectors[0], GlareMetricsRecord) else "mrl"
    rows = []
    for v in vectors:
        if isinstance(v, GlareMetricsRecord):
            rows.append(v.as_array())
        elif isinstance(v, MrlFeatureVector):
            rows.append(np.asarray(v.region_means, dtype=np.float64))
        else:
            rows.append(np.asarray(v, dtype=np.float64).ravel())
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ShapeError(f"heterogeneous feature lengths {sorted(lengths)}")
    m = lengths.pop()
    names = list(METRIC_NAMES) if kind == "metrics" else [f"f{i + 1:03d}" for i in range(m)]
    return FeatureMatrix(
        values=np.vstack(rows),
        labels=np.array([_label_value(lab) for lab in labels]),
        feature_names=names,
        dataset_name=dataset_name or dataset_name_for(m, kind),
        ids=list(ids) if ids is not None else [],
    )


def _load_luminance(item) -> LuminanceMap:
    if isinstance(item, LuminanceMap):
        return item
    if isinstance(item, HdrImage):
        return to_luminance(item)
    return to_luminance(load_hdr(item))


class MrlExtractor(TransformerMixin, BaseEstimator):
    """Transform images into MRL rows for one grid and the calibrated (or given) mask."""

    def __init__(self, grid=25, a_h=None, a_v=None, v0=None, mask=None):
        self.grid = grid
        self.a_h = a_h
        self.a_v = a_v
        self.v0 = v0
        self.mask = mask

    def _mask(self) -> FovMask:
        if self.mask is not None:
            if self.mask.grid.g != self.grid:
                raise ShapeError("explicit mask grid differs from grid")
            return self.mask
        return build_mask(self.grid, self.a_h, self.a_v, self.v0)

    def fit(self, X=None, y=None):
        self.mask_ = self._mask()
        self.n_features_out_ = self.mask_.count
        return self

    def transform(self, X):
        mask = getattr(self, "mask_", None) or self._mask()
        rows = [extract_mrl(_load_luminance(item), None, mask.grid, mask).region_means for item in X]
        return np.vstack(rows) if rows else np.empty((0, mask.count))

    def get_feature_names_out(self, input_features=None):
        n = getattr(self, "n_features_out_", None) or self._mask().count
        return np.array([f"f{i + 1:03d}" for i in range(n)], dtype=object)
