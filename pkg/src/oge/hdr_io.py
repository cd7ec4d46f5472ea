"""Radiance RGBE (.hdr / .pic) reading, writing and luminance conversion."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import BinaryIO, Union

import numpy as np

from .errors import (
    CorruptDataError,
    FormatError,
    InvalidDimensionError,
    UnsupportedOrientationError,
)

__all__ = [
    "HdrImage",
    "LuminanceMap",
    "read_radiance_hdr",
    "write_radiance_hdr",
    "load_hdr",
    "save_hdr",
    "to_luminance",
    "rgbe_to_float",
    "float_to_rgbe",
    "image_from_luminance",
    "LUMINOUS_EFFICACY",
    "RGB_WEIGHTS",
]

LUMINOUS_EFFICACY = 179.0
RGB_WEIGHTS = (0.265, 0.670, 0.065)

_MAGIC = (b"#?RADIANCE", b"#?RGBE")
_FORMAT = "32-bit_rle_rgbe"
_RES_RE = re.compile(rb"^([-+])([XY]) (\d+) ([-+])([XY]) (\d+)$")
_MIN_RLE = 8
_MAX_RLE = 0x7FFF

PathOrStream = Union[str, os.PathLike, BinaryIO, bytes]


@dataclass(frozen=True)
class HdrImage:
    """Decoded radiance image.

    ``pixels`` has shape ``(height, width, 3)``, row 0 at the top of the picture,
    values in W/(sr m^2) already divided by the header exposure.
    """

    pixels: np.ndarray
    exposure: float = 1.0
    header_vars: tuple = field(default_factory=tuple)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidDimensionError(f"pixels must be (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidDimensionError("image must be at least 1x1")
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise ValueError("pixel channels must be finite and non-negative")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "header_vars", tuple(tuple(kv) for kv in self.header_vars))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class LuminanceMap:
    """Per-pixel luminance in cd/m^2, shape ``(height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidDimensionError(f"luminance must be a non-empty 2-D array, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("luminance values must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def scaled(self, k: float) -> "LuminanceMap":
        return LuminanceMap(self.values * k)


def rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    """Decode ``(..., 4)`` uint8 quadruples: ``(m / 256) * 2**(e - 128)``; ``e == 0`` is black."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    mant = rgbe[..., :3].astype(np.float64)
    exp = rgbe[..., 3].astype(np.int64)
    out = np.ldexp(mant, (exp - 136)[..., None])
    out[exp == 0] = 0.0
    return out


def float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    """Encode ``(..., 3)`` radiances with round-to-nearest mantissas."""
    rgb = np.asarray(rgb, dtype=np.float64)
    vmax = rgb.max(axis=-1)
    frac, exp = np.frexp(vmax)
    # a mantissa that rounds up to 256 must move to the next exponent
    bump = np.rint(frac * 256.0) >= 256.0
    exp = np.where(bump, exp + 1, exp)
    with np.errstate(divide="ignore", invalid="ignore"):
        mant = np.rint(np.ldexp(rgb, (8 - exp)[..., None]))
    mant = np.clip(np.nan_to_num(mant), 0, 255)
    black = vmax < 1e-32
    big = exp + 128 > 255
    if np.any(big):
        raise ValueError("radiance too large for RGBE encoding")
    out = np.empty(rgb.shape[:-1] + (4,), dtype=np.uint8)
    out[..., :3] = mant.astype(np.uint8)
    out[..., 3] = np.clip(exp + 128, 0, 255).astype(np.uint8)
    out[black] = 0
    return out


def _open_bytes(src: PathOrStream) -> bytes:
    if isinstance(src, (bytes, bytearray, memoryview)):
        return bytes(src)
    if isinstance(src, (str, os.PathLike)):
        with open(src, "rb") as fh:
            return fh.read()
    return src.read()


def _parse_header(data: bytes) -> tuple[list[tuple[str, str]], float, int, int, int]:
    """Return header vars, exposure product, height, width and the offset of pixel data."""
    if not any(data.startswith(m) for m in _MAGIC):
        raise FormatError("missing Radiance magic line (#?RADIANCE or #?RGBE)")
    end = data.find(b"\n\n")
    if end < 0:
        raise FormatError("header is not terminated by a blank line")
    lines = data[:end].split(b"\n")[1:]
    header_vars: list[tuple[str, str]] = []
    exposure = 1.0
    fmt = None
    for raw in lines:
        line = raw.decode("latin-1").strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            # command lines written by Radiance tools
            header_vars.append(("", line))
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "FORMAT":
            fmt = value
        elif key == "EXPOSURE":
            try:
                exposure *= float(value)
            except ValueError as exc:
                raise FormatError(f"bad EXPOSURE value {value!r}") from exc
        header_vars.append((key, value))
    if fmt is None:
        raise FormatError("header lacks FORMAT=32-bit_rle_rgbe")
    if fmt != _FORMAT:
        raise FormatError(f"unsupported pixel format {fmt!r}")
    if exposure <= 0:
        raise FormatError("EXPOSURE must be positive")

    res_start = end + 2
    res_end = data.find(b"\n", res_start)
    if res_end < 0:
        raise FormatError("missing resolution line")
    m = _RES_RE.match(data[res_start:res_end].strip())
    if m is None:
        raise FormatError(f"malformed resolution line {data[res_start:res_end]!r}")
    s1, a1, n1, s2, a2, n2 = m.groups()
    if not (s1 == b"-" and a1 == b"Y" and s2 == b"+" and a2 == b"X"):
        raise UnsupportedOrientationError(
            f"orientation {data[res_start:res_end].decode('ascii', 'replace')!r}; only -Y h +X w is supported"
        )
    height, width = int(n1), int(n2)
    if height < 1 or width < 1:
        raise FormatError("resolution must be positive")
    return header_vars, exposure, height, width, res_end + 1


def _read_rle_scanline(buf: memoryview, pos: int, width: int) -> tuple[np.ndarray, int]:
    line = np.empty((4, width), dtype=np.uint8)
    n = len(buf)
    for c in range(4):
        j = 0
        while j < width:
            if pos >= n:
                raise CorruptDataError("truncated RLE scanline")
            count = buf[pos]
            pos += 1
            if count > 128:
                count -= 128
                if j + count > width:
                    raise CorruptDataError("RLE run overruns scanline")
                if pos >= n:
                    raise CorruptDataError("truncated RLE run")
                line[c, j:j + count] = buf[pos]
                pos += 1
            else:
                if count == 0 or j + count > width:
                    raise CorruptDataError("bad RLE literal count")
                if pos + count > n:
                    raise CorruptDataError("truncated RLE literal")
                line[c, j:j + count] = np.frombuffer(buf[pos:pos + count], dtype=np.uint8)
                pos += count
            j += count
    return line.T, pos


def read_radiance_hdr(src: PathOrStream) -> HdrImage:
    """Parse a Radiance RGBE stream (flat or new-style RLE scanlines)."""
    data = _open_bytes(src)
    header_vars, exposure, height, width, pos = _parse_header(data)
    buf = memoryview(data)
    n = len(data)
    out = np.empty((height, width, 4), dtype=np.uint8)
    for y in range(height):
        if pos + 4 <= n and _MIN_RLE <= width <= _MAX_RLE and buf[pos] == 2 and buf[pos + 1] == 2 and buf[pos + 2] < 128:
            declared = (buf[pos + 2] << 8) | buf[pos + 3]
            if declared != width:
                raise CorruptDataError(f"scanline {y} declares width {declared}, expected {width}")
            out[y], pos = _read_rle_scanline(buf, pos + 4, width)
        else:
            end = pos + 4 * width
            if end > n:
                raise CorruptDataError(f"truncated flat scanline {y}")
            out[y] = np.frombuffer(buf[pos:end], dtype=np.uint8).reshape(width, 4)
            pos = end
    pixels = rgbe_to_float(out) / exposure
    return HdrImage(pixels=pixels, exposure=exposure, header_vars=tuple(header_vars))


def write_radiance_hdr(img: HdrImage, dst: BinaryIO | None = None) -> bytes:
    """Serialise ``img`` with flat scanlines; returns the bytes (also written to ``dst``)."""
    if img.width < 1 or img.height < 1:
        raise InvalidDimensionError("cannot write an empty image")
    lines = [b"#?RADIANCE"]
    for key, value in img.header_vars:
        if key in ("FORMAT", "EXPOSURE"):
            continue
        lines.append((f"{key}={value}" if key else value).encode("latin-1"))
    lines.append(f"FORMAT={_FORMAT}".encode())
    if img.exposure != 1.0:
        lines.append(f"EXPOSURE={img.exposure!r}".encode())
    header = b"\n".join(lines) + b"\n\n" + f"-Y {img.height} +X {img.width}\n".encode()
    body = float_to_rgbe(img.pixels * img.exposure).tobytes()
    out = header + body
    if dst is not None:
        dst.write(out)
    return out


def load_hdr(path: str | os.PathLike) -> HdrImage:
    return read_radiance_hdr(path)


def save_hdr(img: HdrImage, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        write_radiance_hdr(img, fh)


def to_luminance(img: HdrImage, efficacy: float = LUMINOUS_EFFICACY, weights=RGB_WEIGHTS) -> LuminanceMap:
    """Luminance ``efficacy * (wr r + wg g + wb b)`` per pixel."""
    w = np.asarray(weights, dtype=np.float64)
    return LuminanceMap(efficacy * (img.pixels @ w))


def image_from_luminance(lum: np.ndarray, efficacy: float = LUMINOUS_EFFICACY) -> HdrImage:
    """Grey HdrImage whose luminance equals ``lum`` (weights sum to one)."""
    lum = np.asarray(lum, dtype=np.float64)
    grey = lum / (efficacy * sum(RGB_WEIGHTS))
    return HdrImage(np.repeat(grey[:, :, None], 3, axis=2))
