"""False-colour luminance maps written as binary PPM (P6)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .hdr_io import LuminanceMap

__all__ = ["RAMP", "falsecolor_rgb", "write_ppm", "ramp_color"]

# fixed ramp from the floor (dark blue) to the ceiling (red), evenly spaced in log luminance
RAMP = np.array(
    [
        [0, 0, 96],
        [0, 64, 255],
        [0, 200, 255],
        [0, 220, 96],
        [200, 240, 0],
        [255, 160, 0],
        [255, 0, 0],
    ],
    dtype=np.float64,
)


def ramp_color(t: np.ndarray) -> np.ndarray:
    """Colours for ramp positions ``t`` in [0, 1] by piecewise-linear interpolation."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    x = t * (len(RAMP) - 1)
    i = np.minimum(np.floor(x).astype(np.int64), len(RAMP) - 2)
    f = (x - i)[..., None]
    rgb = RAMP[i] * (1.0 - f) + RAMP[i + 1] * f
    return np.rint(rgb).astype(np.uint8)


def falsecolor_rgb(lum: LuminanceMap | np.ndarray, lo: float = 1.0, hi: float = 1.0e4) -> np.ndarray:
    """Map luminance to 8-bit RGB on a log scale between ``lo`` and ``hi`` cd/m2.

    Values at or below ``lo`` (including zero) take the floor colour.
    """
    if not 0 < lo < hi:
        raise ValueError("scale bounds must satisfy 0 < lo < hi")
    L = lum.values if isinstance(lum, LuminanceMap) else np.asarray(lum, dtype=np.float64)
    with np.errstate(divide="ignore"):
        t = (np.log10(np.maximum(L, lo)) - np.log10(lo)) / (np.log10(hi) - np.log10(lo))
    return ramp_color(t)


def write_ppm(rgb: np.ndarray, path) -> None:
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())
