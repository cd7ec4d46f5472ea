import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oge.errors import CorruptDataError, FormatError, InvalidDimensionError, UnsupportedOrientationError
from oge.hdr_io import (
    HdrImage,
    float_to_rgbe,
    image_from_luminance,
    read_radiance_hdr,
    rgbe_to_float,
    to_luminance,
    write_radiance_hdr,
)


def _stream(quads: np.ndarray, w: int, h: int, extra_header=b"", res=None) -> bytes:
    res = res or f"-Y {h} +X {w}".encode()
    return b"#?RADIANCE\n" + extra_header + b"FORMAT=32-bit_rle_rgbe\n\n" + res + b"\n" + quads.astype(np.uint8).tobytes()


def _rle_scanline(quads: np.ndarray) -> bytes:
    """Encode one scanline in new-style RLE, mixing runs and literals."""
    w = quads.shape[0]
    out = bytearray([2, 2, w >> 8, w & 0xFF])
    for c in range(4):
        data = quads[:, c]
        j = 0
        while j < w:
            run = 1
            while j + run < w and data[j + run] == data[j] and run < 127:
                run += 1
            if run >= 3:
                out += bytes([128 + run, data[j]])
                j += run
            else:
                k = j
                while k < w and k - j < 128 and not (k + 2 < w and data[k] == data[k + 1] == data[k + 2]):
                    k += 1
                k = max(k, j + 1)
                out += bytes([k - j]) + bytes(data[j:k].tolist())
                j = k
    return bytes(out)


def test_decode_rule_examples():
    assert np.allclose(rgbe_to_float(np.array([128, 128, 128, 129])), [1.0, 1.0, 1.0])
    assert np.array_equal(rgbe_to_float(np.array([0, 0, 0, 0])), [0.0, 0.0, 0.0])
    # zero exponent means black whatever the mantissas say
    assert np.array_equal(rgbe_to_float(np.array([200, 10, 3, 0])), [0.0, 0.0, 0.0])


def test_every_quadruple_decodes_finite_nonnegative():
    q = np.stack(np.meshgrid(np.arange(0, 256, 5), np.arange(0, 256, 5), indexing="ij"), -1).reshape(-1, 2)
    quads = np.column_stack([q[:, 0], q[:, 1], q[:, 0], q[:, 1]]).astype(np.uint8)
    v = rgbe_to_float(quads)
    assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_read_flat_stream_single_pixel():
    img = read_radiance_hdr(_stream(np.array([[128, 128, 128, 129]]), 1, 1))
    assert (img.width, img.height) == (1, 1)
    assert np.allclose(img.pixels[0, 0], 1.0)


def test_exposure_headers_multiply():
    extra = b"EXPOSURE=2\nEXPOSURE=0.5\nEXPOSURE=4\n"
    img = read_radiance_hdr(_stream(np.array([[128, 128, 128, 129]]), 1, 1, extra))
    assert img.exposure == pytest.approx(4.0)
    assert np.allclose(img.pixels[0, 0], 0.25)


def test_header_vars_retained_and_rewritten():
    extra = b"SOFTWARE=hand made\nVIEW= -vta -vh 180 -vv 180\n"
    img = read_radiance_hdr(_stream(np.array([[128, 64, 32, 130]]), 1, 1, extra))
    assert ("SOFTWARE", "hand made") in img.header_vars
    again = read_radiance_hdr(write_radiance_hdr(img))
    assert ("SOFTWARE", "hand made") in again.header_vars
    assert ("VIEW", "-vta -vh 180 -vv 180") in again.header_vars


def test_rle_scanlines_decode_like_flat():
    rng = np.random.default_rng(4)
    w, h = 37, 5
    quads = rng.integers(0, 256, size=(h, w, 4)).astype(np.uint8)
    quads[:, 5:20, :] = quads[:, 5:6, :]  # long runs
    quads[..., 3] = np.where(quads[..., 3] == 0, 1, quads[..., 3])
    flat = read_radiance_hdr(_stream(quads.reshape(-1, 4), w, h))
    body = b"".join(_rle_scanline(quads[y]) for y in range(h))
    rle = read_radiance_hdr(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n" + f"-Y {h} +X {w}".encode() + b"\n" + body)
    assert np.array_equal(flat.pixels, rle.pixels)


def test_truncated_rle_is_corrupt():
    quads = np.full((9, 4), 130, dtype=np.uint8)
    line = _rle_scanline(quads)
    data = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 9\n" + line[:-3]
    with pytest.raises(CorruptDataError):
        read_radiance_hdr(data)


def test_rle_run_overrun_is_corrupt():
    data = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 9\n" + bytes([2, 2, 0, 9, 128 + 12, 7])
    with pytest.raises(CorruptDataError):
        read_radiance_hdr(data)


def test_truncated_flat_is_corrupt():
    with pytest.raises(CorruptDataError):
        read_radiance_hdr(_stream(np.zeros((3, 4)), 2, 2))


@pytest.mark.parametrize(
    "data",
    [
        b"P6\n1 1\n255\n\x00\x00\x00",
        b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n\x00\x00\x00\x00",
        b"#?RADIANCE\n\n-Y 1 +X 1\n\x00\x00\x00\x00",
        b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n-Y 1 +X 1\n",
        b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y one +X 1\n",
    ],
)
def test_malformed_headers(data):
    with pytest.raises(FormatError):
        read_radiance_hdr(data)


def test_other_orientations_rejected():
    with pytest.raises(UnsupportedOrientationError):
        read_radiance_hdr(_stream(np.zeros((1, 4)), 1, 1, res=b"+Y 1 +X 1"))
    with pytest.raises(UnsupportedOrientationError):
        read_radiance_hdr(_stream(np.zeros((1, 4)), 1, 1, res=b"-X 1 +Y 1"))


def test_writer_black_pixels_are_zero_quads():
    data = write_radiance_hdr(HdrImage(np.zeros((1, 2, 3))))
    assert data.endswith(bytes(8))


def test_writer_rejects_empty_image():
    with pytest.raises(InvalidDimensionError):
        HdrImage(np.zeros((0, 3, 3)))


def test_writer_to_stream_and_dimensions():
    rng = np.random.default_rng(0)
    img = HdrImage(rng.uniform(0, 10, size=(8, 8, 3)))
    buf = io.BytesIO()
    data = write_radiance_hdr(img, buf)
    assert buf.getvalue() == data
    again = read_radiance_hdr(io.BytesIO(data))
    assert (again.width, again.height) == (8, 8)


def test_mantissa_rounding_carries_into_exponent():
    # 255.9 / 256 rounds up to 256 and must move to the next exponent
    q = float_to_rgbe(np.array([0.99961, 0.5, 0.0]))
    assert q[3] == 129 and q[0] == 128
    assert np.allclose(rgbe_to_float(q), [1.0, 0.5, 0.0], atol=1 / 256)


RGBE_MIN = 1e-32  # the reference encoder writes pixels whose largest channel is below this as black


def _assert_rgbe_close(a, b):
    """Shared-exponent tolerance: every channel within 1/256 of its pixel's largest channel."""
    vmax = a.max(axis=-1, keepdims=True)
    tiny = vmax[..., 0] < RGBE_MIN
    assert np.all(b[tiny] == 0.0)
    assert np.all((np.abs(a - b) <= vmax / 256)[~tiny])


def test_round_trip_1x1():
    img = HdrImage(np.ones((1, 1, 3)))
    again = read_radiance_hdr(write_radiance_hdr(img))
    assert np.allclose(again.pixels, 1.0, rtol=1 / 256)


def test_round_trip_random_4x4():
    rng = np.random.default_rng(1)
    px = rng.uniform(0, 1e4, size=(4, 4, 3))
    again = read_radiance_hdr(write_radiance_hdr(HdrImage(px))).pixels
    _assert_rgbe_close(px, again)


def test_round_trip_grey_is_per_channel_relative():
    rng = np.random.default_rng(2)
    g = rng.uniform(1e-3, 1e6, size=(10, 10))
    px = np.repeat(g[..., None], 3, axis=2)
    again = read_radiance_hdr(write_radiance_hdr(HdrImage(px))).pixels
    assert np.all(np.abs(again - px) <= px / 256)


def test_round_trip_with_exposure():
    rng = np.random.default_rng(3)
    img = HdrImage(rng.uniform(0, 100, size=(3, 5, 3)), exposure=2.5)
    again = read_radiance_hdr(write_radiance_hdr(img))
    assert again.exposure == pytest.approx(2.5)
    _assert_rgbe_close(img.pixels, again.pixels)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)),
              elements=st.floats(0, 1e6, allow_nan=False)))
def test_round_trip_property(px):
    again = read_radiance_hdr(write_radiance_hdr(HdrImage(px))).pixels
    assert again.shape == px.shape
    _assert_rgbe_close(px, again)


def test_luminance_examples():
    img = HdrImage(np.array([[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]]))
    L = to_luminance(img).values[0]
    assert L[0] == pytest.approx(179.0)
    assert L[1] == 0.0
    assert L[2] == pytest.approx(119.93)


def test_luminance_linearity():
    rng = np.random.default_rng(5)
    px = rng.uniform(0, 50, size=(4, 6, 3))
    for k in (0.0, 0.5, 3.0):
        a = to_luminance(HdrImage(px * k)).values
        b = k * to_luminance(HdrImage(px)).values
        assert np.allclose(a, b, rtol=1e-15, atol=0)


def test_image_from_luminance_inverts():
    L = np.array([[0.0, 1.0], [179.0, 5e4]])
    assert np.allclose(to_luminance(image_from_luminance(L)).values, L, rtol=1e-12)


def test_negative_pixels_rejected():
    with pytest.raises(ValueError):
        HdrImage(-np.ones((1, 1, 3)))
