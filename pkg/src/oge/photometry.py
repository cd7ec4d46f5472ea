"""Equidistant fisheye geometry and scene-level photometric quantities.

Pixel ``(x, y)`` (column, row) sits at integer coordinates; the default image
circle is centred on the image with radius ``min(width, height) / 2``.  The
field angle grows linearly with the distance from the centre and reaches 90
degrees on the circle.  Azimuth is measured from "up" (decreasing row) and
grows clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyRegionError, GeometryError
from .hdr_io import LuminanceMap

__all__ = [
    "FisheyeGeometry",
    "PixelGeometry",
    "GeometryGrids",
    "TaskZone",
    "SceneStats",
    "pixel_geometry",
    "geometry_grids",
    "position_index",
    "vertical_illuminance",
    "scene_stats",
    "weighted_median",
]

POSITION_INDEX_CAP = 16.0


@dataclass(frozen=True)
class FisheyeGeometry:
    width: int
    height: int
    center_x: float
    center_y: float
    radius_px: float

    @classmethod
    def for_image(cls, width: int, height: int, center_x=None, center_y=None, radius_px=None) -> "FisheyeGeometry":
        return cls(
            width=int(width),
            height=int(height),
            center_x=(width - 1) / 2.0 if center_x is None else float(center_x),
            center_y=(height - 1) / 2.0 if center_y is None else float(center_y),
            radius_px=min(width, height) / 2.0 if radius_px is None else float(radius_px),
        )

    @property
    def focal(self) -> float:
        """Pixels per radian of field angle."""
        return self.radius_px / (math.pi / 2)

    def validate(self) -> None:
        if not self.radius_px > 0:
            raise GeometryError(f"radius_px must be positive, got {self.radius_px}")
        if self.width < 1 or self.height < 1:
            raise GeometryError("image dimensions must be positive")

    def check_fits(self) -> None:
        """Raise unless the image circle lies inside the image (half-pixel slack)."""
        self.validate()
        r = self.radius_px
        if (self.center_x - r < -0.5 - 1e-9 or self.center_x + r > self.width - 0.5 + 1e-9
                or self.center_y - r < -0.5 - 1e-9 or self.center_y + r > self.height - 0.5 + 1e-9):
            raise GeometryError("image circle does not fit inside the image")

    def check_matches(self, lum: LuminanceMap) -> None:
        self.validate()
        if (lum.height, lum.width) != (self.height, self.width):
            raise GeometryError(
                f"luminance map is {lum.width}x{lum.height}, geometry expects {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class PixelGeometry:
    theta: float
    phi: float
    omega: float
    guth_position_index: float


def _sinc(theta):
    theta = np.asarray(theta, dtype=np.float64)
    out = np.ones_like(theta)
    nz = theta > 1e-12
    out[nz] = np.sin(theta[nz]) / theta[nz]
    return out


def position_index(theta, phi):
    """Position index for view angle ``theta`` and azimuth ``phi`` (radians).

    Above the horizontal plane through the line of sight this is Guth's
    formulation as fitted in Evalglare; below it the Iwata model
    ``1 + f * R/D`` with ``R/D = tan(theta)`` capped at 3 and ``f`` equal to 0.8
    up to ``R/D = 0.6`` and 1.2 beyond.  Values are capped at 16.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    up = np.cos(phi)  # vertical component of the azimuth unit vector
    sigma = np.degrees(theta)
    tau = np.degrees(np.arctan2(np.abs(np.sin(phi)), np.abs(up)))  # 0 = straight up, 90 = sideways
    a = (35.2 - 0.31889 * tau - 1.22 * np.exp(-2.0 * tau / 9.0)) / 1000.0
    b = (21.0 + 0.26667 * tau - 0.002963 * tau * tau) / 100000.0
    with np.errstate(over="ignore"):
        guth = np.exp(a * sigma + b * sigma * sigma)

    below = up < -1e-12
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.minimum(np.tan(np.minimum(theta, np.pi / 2 - 1e-9)), 3.0)
    fact = np.where(ratio > 0.6, 1.2, 0.8)
    iwata = 1.0 + fact * ratio

    p = np.where(below, iwata, guth)
    return np.minimum(p, POSITION_INDEX_CAP)


def pixel_geometry(geom: FisheyeGeometry, x: float, y: float) -> PixelGeometry | None:
    """Geometry of a single pixel, or ``None`` when it lies outside the image circle."""
    geom.validate()
    dx = x - geom.center_x
    dy = y - geom.center_y
    r = math.hypot(dx, dy)
    if r > geom.radius_px:
        return None
    f = geom.focal
    theta = r / f
    phi = math.atan2(dx, 0.0 - dy)
    omega = float(_sinc(np.array([theta]))[0]) / (f * f)
    p = float(position_index(theta, phi))
    return PixelGeometry(theta=theta, phi=phi, omega=omega, guth_position_index=p)


@dataclass(frozen=True)
class GeometryGrids:
    """Per-pixel arrays for a whole image; entries outside the circle have ``omega == 0``."""

    inside: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    omega: np.ndarray
    position: np.ndarray

    def direction(self) -> np.ndarray:
        """Unit view-space vectors ``(right, up, forward)``, shape ``(h, w, 3)``."""
        st = np.sin(self.theta)
        return np.stack([st * np.sin(self.phi), st * np.cos(self.phi), np.cos(self.theta)], axis=-1)


@lru_cache(maxsize=16)
def geometry_grids(geom: FisheyeGeometry) -> GeometryGrids:
    geom.validate()
    ys, xs = np.mgrid[0:geom.height, 0:geom.width].astype(np.float64)
    dx = xs - geom.center_x
    dy = ys - geom.center_y
    r = np.hypot(dx, dy)
    inside = r <= geom.radius_px
    f = geom.focal
    theta = np.where(inside, r / f, 0.0)
    phi = np.arctan2(dx, 0.0 - dy)
    omega = np.where(inside, _sinc(theta) / (f * f), 0.0)
    pos = np.where(inside, position_index(theta, phi), np.inf)
    for a in (inside, theta, phi, omega, pos):
        a.setflags(write=False)
    return GeometryGrids(inside=inside, theta=theta, phi=phi, omega=omega, position=pos)


def vertical_illuminance(lum: LuminanceMap, geom: FisheyeGeometry) -> float:
    """Illuminance at the lens from the hemisphere in front of it, in lux."""
    geom.check_matches(lum)
    g = geometry_grids(geom)
    contrib = lum.values * g.omega * np.cos(g.theta)
    return math.fsum(contrib[g.inside])


@dataclass(frozen=True)
class TaskZone:
    """Circular zone of angular radius ``radius_deg`` around direction (``theta_deg``, ``phi_deg``)."""

    radius_deg: float = 30.0
    theta_deg: float = 0.0
    phi_deg: float = 0.0

    def mask(self, geom: FisheyeGeometry) -> np.ndarray:
        g = geometry_grids(geom)
        t0, p0 = math.radians(self.theta_deg), math.radians(self.phi_deg)
        c = np.array([math.sin(t0) * math.sin(p0), math.sin(t0) * math.cos(p0), math.cos(t0)])
        cosang = np.clip(g.direction() @ c, -1.0, 1.0)
        return g.inside & (np.arccos(cosang) <= math.radians(self.radius_deg) + 1e-12)


@dataclass(frozen=True)
class SceneStats:
    ev: float
    av_lum: float
    med_lum: float
    max_lum: float
    task_lum: float
    av_lum_pos: float
    av_lum_pos2: float
    med_lum_pos: float
    med_lum_pos2: float


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    """Lower weighted median: smallest value whose cumulative weight reaches half the total."""
    values = np.asarray(values, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    keep = weights > 0
    values, weights = values[keep], weights[keep]
    if values.size == 0:
        raise EmptyRegionError("no positive weights")
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(weights[order])
    idx = int(np.searchsorted(cw, 0.5 * cw[-1], side="left"))
    return float(values[order][min(idx, values.size - 1)])


def _wmean(values, weights) -> float:
    return math.fsum(values * weights) / math.fsum(weights)


def scene_stats(lum: LuminanceMap, geom: FisheyeGeometry, task_zone: TaskZone | None = None) -> SceneStats:
    geom.check_matches(lum)
    task_zone = task_zone or TaskZone()
    g = geometry_grids(geom)
    inside = g.inside
    L = lum.values[inside]
    w = g.omega[inside]
    p = g.position[inside]
    tmask = task_zone.mask(geom)
    if not tmask.any():
        raise EmptyRegionError("task zone contains no pixels")
    w_pos = w / p
    w_pos2 = w / (p * p)
    return SceneStats(
        ev=vertical_illuminance(lum, geom),
        av_lum=_wmean(L, w),
        med_lum=weighted_median(L, w),
        max_lum=float(L.max()),
        task_lum=_wmean(lum.values[tmask], g.omega[tmask]),
        av_lum_pos=_wmean(L, w_pos),
        av_lum_pos2=_wmean(L, w_pos2),
        med_lum_pos=weighted_median(L, w_pos),
        med_lum_pos2=weighted_median(L, w_pos2),
    )
