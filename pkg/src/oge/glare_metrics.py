"""Glare-source detection and the 24 luminance / illuminance / glare-index values.

Index definitions follow their original publications:

* DGP   Wienold & Christoffersen (2006)
* UGR   CIE 117; UGP is the linear rescaling of Hirning et al. (2017),
        ``UGP = 0.26 * log10(UGR argument)``
* DGI   Hopkinson / Cornell; DGI_mod swaps the background term for the mean
        luminance of non-source pixels
* CGI   Einhorn
* DGR / VCP  Guth (VCP in its erf form)
* Lveil      Stiles-Holladay, ``10 * sum(E / theta_deg**2)`` over the picture
* Lveil_CIE  CIE 146 general disability-glare equation over source pixels

Images without a glare source keep every value finite: empty sums are
replaced by ``EMPTY_SUM`` wherever a logarithm or power would otherwise
diverge.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage
from scipy.special import erf
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DetectionError
from .hdr_io import HdrImage, LuminanceMap, to_luminance
from .photometry import FisheyeGeometry, SceneStats, TaskZone, geometry_grids, scene_stats

__all__ = [
    "GlareSource",
    "SourceDetectionParams",
    "GlareMetricsRecord",
    "METRIC_NAMES",
    "detect_sources",
    "compute_indices",
    "glare_metrics",
    "GlareMetricsExtractor",
    "dgp",
    "ugr",
    "ugr_exp",
    "ugp",
    "dgi",
    "cgi",
    "dgr",
    "vcp",
    "lveil_cie_factor",
]

EMPTY_SUM = 1e-9
_TINY = 1e-9


@dataclass(frozen=True)
class SourceDetectionParams:
    threshold_multiplier: float = 5.0
    absolute_floor: float | None = None
    merge_radius: float = 0.2

    def __post_init__(self):
        if not self.threshold_multiplier > 1:
            raise ValueError("threshold_multiplier must exceed 1")
        if self.merge_radius < 0:
            raise ValueError("merge_radius must be non-negative")
        if self.absolute_floor is not None and self.absolute_floor < 0:
            raise ValueError("absolute_floor must be non-negative")


@dataclass(frozen=True)
class GlareSource:
    pixel_ids: np.ndarray  # sorted flat indices into the image
    L_s: float
    omega_s: float
    P_s: float
    centroid_theta: float
    centroid_phi: float
    ev_dir: float  # direct illuminance contributed by the source pixels


def _centroid(vecs: np.ndarray, w: np.ndarray) -> np.ndarray:
    c = (vecs * w[:, None]).sum(axis=0)
    n = np.linalg.norm(c)
    return c / n if n > 0 else np.array([0.0, 0.0, 1.0])


def detect_sources(
    lum: LuminanceMap,
    geom: FisheyeGeometry,
    params: SourceDetectionParams | None = None,
    task_zone: TaskZone | None = None,
    task_lum: float | None = None,
) -> list[GlareSource]:
    """Threshold, label 8-connected components, then merge components whose
    centroids lie within ``merge_radius`` (great-circle) of each other."""
    params = params or SourceDetectionParams()
    geom.check_matches(lum)
    g = geometry_grids(geom)
    if params.absolute_floor is not None:
        threshold = params.absolute_floor
    else:
        if task_lum is None:
            tmask = (task_zone or TaskZone()).mask(geom)
            task_lum = float((lum.values[tmask] * g.omega[tmask]).sum() / g.omega[tmask].sum())
        if task_lum <= 0:
            raise DetectionError("task luminance is zero; set absolute_floor to detect sources")
        threshold = params.threshold_multiplier * task_lum

    candidates = g.inside & (lum.values > threshold)
    labels, n = ndimage.label(candidates, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []

    dirs = g.direction()
    flat_labels = labels.ravel()
    ids = np.flatnonzero(flat_labels)
    comp = flat_labels[ids] - 1
    w = g.omega.ravel()[ids]
    vec = dirs.reshape(-1, 3)[ids]
    cent = np.zeros((n, 3))
    np.add.at(cent, comp, vec * w[:, None])
    cent /= np.linalg.norm(cent, axis=1, keepdims=True)

    # union-find over component centroids
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if params.merge_radius > 0 and n > 1:
        ang = np.arccos(np.clip(cent @ cent.T, -1.0, 1.0))
        for i, j in zip(*np.nonzero(np.triu(ang <= params.merge_radius, k=1))):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    root = np.array([find(i) for i in range(n)])[comp]

    Lflat = lum.values.ravel()
    cos_t = np.cos(g.theta).ravel()
    pos = g.position.ravel()
    sources = []
    for r in np.unique(root):
        sel = root == r
        pid = ids[sel]
        ws = w[sel]
        omega_s = float(ws.sum())
        c = _centroid(vec[sel], ws)
        sources.append(
            GlareSource(
                pixel_ids=pid,
                L_s=float((Lflat[pid] * ws).sum() / omega_s),
                omega_s=omega_s,
                P_s=float((pos[pid] * ws).sum() / omega_s),
                centroid_theta=float(math.acos(max(-1.0, min(1.0, c[2])))),
                centroid_phi=float(math.atan2(c[0], c[1])),
                ev_dir=float((Lflat[pid] * ws * cos_t[pid]).sum()),
            )
        )
    return sources


# -- index formulas ---------------------------------------------------------

def _arr(*xs):
    return [np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in xs]


def dgp(ev, L, omega, P, low_light_correction=False):
    L, omega, P = _arr(L, omega, P)
    e = max(float(ev), _TINY)
    s = float(np.sum(L * L * omega / (e ** 1.87 * P * P)))
    val = 5.87e-5 * e + 9.18e-2 * math.log10(1.0 + s) + 0.16
    if low_light_correction and e < 1000:
        z = math.exp(0.024 * e - 4.0)
        val *= z / (1.0 + z)
    return val


def _ugr_sum(L, omega, P):
    L, omega, P = _arr(L, omega, P)
    s = float(np.sum(L * L * omega / (P * P)))
    return s if s > 0 else EMPTY_SUM


def ugr(lb, L, omega, P):
    return 8.0 * math.log10(0.25 / max(float(lb), _TINY) * _ugr_sum(L, omega, P))


def ugr_exp(ev, L, omega, P):
    """UGR with the adaptation luminance taken as ``Ev / pi``."""
    la = max(float(ev), _TINY) / math.pi
    return 8.0 * math.log10(0.25 / la * _ugr_sum(L, omega, P))


def ugp(ugr_value):
    return 0.26 * ugr_value / 8.0


def dgi(adaptation, L, omega, P):
    L, omega, P = _arr(L, omega, P)
    lb = max(float(adaptation), 0.0)
    terms = L ** 1.6 * (omega / (P * P)) ** 0.8 / (lb + 0.07 * np.sqrt(omega) * L + _TINY)
    s = float(np.sum(terms))
    return 10.0 * math.log10(0.478 * (s if s > 0 else EMPTY_SUM))


def cgi(ev, ev_dir, L, omega, P):
    e = max(float(ev), _TINY)
    return 8.0 * math.log10(2.0 * (1.0 + float(ev_dir) / 500.0) / e * _ugr_sum(L, omega, P))


def dgr(field_lum, L, omega, P):
    L, omega, P = _arr(L, omega, P)
    n = int(np.count_nonzero(omega > 0))
    if n == 0:
        return EMPTY_SUM
    q = 20.4 * omega + 1.52 * omega ** 0.2 - 0.075
    m = 0.5 * L * q / (P * max(float(field_lum), _TINY) ** 0.44)
    s = max(float(np.sum(m)), EMPTY_SUM)
    return s ** (n ** -0.0914)


def vcp(dgr_value):
    d = max(float(dgr_value), EMPTY_SUM)
    return 50.0 * (1.0 + float(erf((6.374 - 1.3227 * math.log(d)) / math.sqrt(2.0))))


def lveil_cie_factor(theta_deg, age=25.0, pigment=0.5):
    """CIE 146 veiling-luminance factor ``L_veil / E`` for a glare angle in degrees."""
    t = np.maximum(np.asarray(theta_deg, dtype=np.float64), 0.1)
    return 10.0 / t ** 3 + (5.0 / t ** 2 + 0.1 * pigment / t) * (1.0 + (age / 62.5) ** 4) + 0.0025 * pigment


# -- record -----------------------------------------------------------------

METRIC_NAMES = (
    "Ev", "Ev_dir", "DGP", "UGP", "UGR", "UGR_exp", "VCP", "DGI", "DGI_mod", "CGI",
    "DGR", "Lveil", "Lveil_CIE", "Omega_S", "Lum_sources", "Av_Lum_pos", "Av_Lum_pos2",
    "Med_lum", "Med_lum_pos", "Med_lum_pos2", "Av_Lum", "Lum_Background", "Task_Lum", "Max_Lum",
)


@dataclass(frozen=True)
class GlareMetricsRecord:
    Ev: float
    Ev_dir: float
    DGP: float
    UGP: float
    UGR: float
    UGR_exp: float
    VCP: float
    DGI: float
    DGI_mod: float
    CGI: float
    DGR: float
    Lveil: float
    Lveil_CIE: float
    Omega_S: float
    Lum_sources: float
    Av_Lum_pos: float
    Av_Lum_pos2: float
    Med_lum: float
    Med_lum_pos: float
    Med_lum_pos2: float
    Av_Lum: float
    Lum_Background: float
    Task_Lum: float
    Max_Lum: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)


assert tuple(f.name for f in fields(GlareMetricsRecord)) == METRIC_NAMES


def compute_indices(
    lum: LuminanceMap,
    geom: FisheyeGeometry,
    sources: list[GlareSource],
    stats: SceneStats,
    background: str = "indirect",
    low_light_correction: bool = False,
) -> GlareMetricsRecord:
    """All 24 values for one image.

    ``background`` selects the Lum_Background convention: ``"indirect"`` uses
    ``(Ev - Ev_dir) / pi``; ``"nonsource"`` the solid-angle weighted mean of
    the pixels outside every source.
    """
    g = geometry_grids(geom)
    Lv = lum.values
    L = np.array([s.L_s for s in sources])
    w = np.array([s.omega_s for s in sources])
    P = np.array([s.P_s for s in sources])
    ev = stats.ev
    ev_dir = math.fsum(s.ev_dir for s in sources)

    src_mask = np.zeros(Lv.size, dtype=bool)
    for s in sources:
        src_mask[s.pixel_ids] = True
    src_mask = src_mask.reshape(Lv.shape)
    rest = g.inside & ~src_mask
    w_rest = g.omega[rest]
    nonsource = float((Lv[rest] * w_rest).sum() / w_rest.sum()) if w_rest.sum() > 0 else 0.0
    indirect = max(ev - ev_dir, 0.0) / math.pi
    if background == "indirect":
        lb = indirect
    elif background == "nonsource":
        lb = nonsource
    else:
        raise ValueError(f"unknown background convention {background!r}")

    theta_deg = np.degrees(g.theta)
    e_pix = Lv * g.omega * np.cos(g.theta)
    far = g.inside & (theta_deg >= 1.0)
    lveil = 10.0 * math.fsum((e_pix[far] / theta_deg[far] ** 2).ravel())
    lveil_cie = math.fsum((e_pix[src_mask] * lveil_cie_factor(theta_deg[src_mask])).ravel())

    ugr_v = ugr(lb, L, w, P)
    dgr_v = dgr(stats.av_lum, L, w, P)
    omega_total = float(w.sum()) if len(sources) else 0.0
    return GlareMetricsRecord(
        Ev=ev,
        Ev_dir=ev_dir,
        DGP=dgp(ev, L, w, P, low_light_correction),
        UGP=ugp(ugr_v),
        UGR=ugr_v,
        UGR_exp=ugr_exp(ev, L, w, P),
        VCP=vcp(dgr_v),
        DGI=dgi(lb, L, w, P),
        DGI_mod=dgi(nonsource, L, w, P),
        CGI=cgi(ev, ev_dir, L, w, P),
        DGR=dgr_v,
        Lveil=lveil,
        Lveil_CIE=lveil_cie,
        Omega_S=omega_total,
        Lum_sources=float((L * w).sum() / omega_total) if omega_total > 0 else 0.0,
        Av_Lum_pos=stats.av_lum_pos,
        Av_Lum_pos2=stats.av_lum_pos2,
        Med_lum=stats.med_lum,
        Med_lum_pos=stats.med_lum_pos,
        Med_lum_pos2=stats.med_lum_pos2,
        Av_Lum=stats.av_lum,
        Lum_Background=lb,
        Task_Lum=stats.task_lum,
        Max_Lum=stats.max_lum,
    )


def glare_metrics(
    lum: LuminanceMap,
    geom: FisheyeGeometry | None = None,
    params: SourceDetectionParams | None = None,
    task_zone: TaskZone | None = None,
    background: str = "indirect",
) -> GlareMetricsRecord:
    """Scene statistics, source detection and indices in one call."""
    geom = geom or FisheyeGeometry.for_image(lum.width, lum.height)
    task_zone = task_zone or TaskZone()
    stats = scene_stats(lum, geom, task_zone)
    sources = detect_sources(lum, geom, params, task_zone, task_lum=stats.task_lum)
    return compute_indices(lum, geom, sources, stats, background=background)


def _as_luminance(item) -> LuminanceMap:
    if isinstance(item, LuminanceMap):
        return item
    if isinstance(item, HdrImage):
        return to_luminance(item)
    from .hdr_io import load_hdr

    return to_luminance(load_hdr(item))


class GlareMetricsExtractor(TransformerMixin, BaseEstimator):
    """Transform images (LuminanceMap, HdrImage or .hdr paths) into 24-column rows."""

    def __init__(self, threshold_multiplier=5.0, absolute_floor=None, merge_radius=0.2,
                 task_zone_deg=30.0, background="indirect"):
        self.threshold_multiplier = threshold_multiplier
        self.absolute_floor = absolute_floor
        self.merge_radius = merge_radius
        self.task_zone_deg = task_zone_deg
        self.background = background

    def fit(self, X, y=None):
        SourceDetectionParams(self.threshold_multiplier, self.absolute_floor, self.merge_radius)
        self.feature_names_out_ = np.array(METRIC_NAMES, dtype=object)
        self.n_features_out_ = len(METRIC_NAMES)
        return self

    def transform(self, X):
        params = SourceDetectionParams(self.threshold_multiplier, self.absolute_floor, self.merge_radius)
        zone = TaskZone(radius_deg=self.task_zone_deg)
        rows = [
            glare_metrics(_as_luminance(item), params=params, task_zone=zone, background=self.background).as_array()
            for item in X
        ]
        return np.vstack(rows) if rows else np.empty((0, len(METRIC_NAMES)))

    def get_feature_names_out(self, input_features=None):
        return np.array(METRIC_NAMES, dtype=object)
