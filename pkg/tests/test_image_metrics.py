import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from deepkpm.errors import DimensionMismatchError, ImageError
from deepkpm.image import Image, composite, read_image, tonemap_8bit, write_image
from deepkpm.metrics import psnr, rmse, ssim

px = arrays(np.float64, (4, 5, 3), elements=st.floats(0, 4, allow_nan=False))


def test_composite_constants():
    out = composite(Image.constant(2, 2, 0.25), Image.constant(2, 2, 0.5))
    assert np.all(out.pixels == 0.75)


@given(px, px, px)
def test_composite_algebra(a, b, c):
    A, B, C = Image(a), Image(b), Image(c)
    assert composite(A, Image.zeros(5, 4)) == A
    assert composite(A, B) == composite(B, A)
    assert np.allclose(composite(composite(A, B), C).pixels, composite(A, composite(B, C)).pixels)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        composite(Image.zeros(2, 2), Image.zeros(3, 2))
    with pytest.raises(DimensionMismatchError):
        rmse(Image.zeros(2, 2), Image.zeros(2, 3))
    with pytest.raises(ImageError):
        Image(np.zeros((2, 2)))


@given(px)
@settings(max_examples=25)
def test_pfm_round_trip_is_float32_exact(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("pfm") / "x.pfm"
    write_image(Image(a), p)
    assert read_image(p) == Image(a.astype(np.float32))


def test_pfm_layout(tmp_path):
    a = np.zeros((2, 3, 3))
    a[0, 0] = (1, 2, 3)  # top-left
    write_image(Image(a), tmp_path / "a.pfm")
    raw = (tmp_path / "a.pfm").read_bytes()
    assert raw.startswith(b"PF\n3 2\n-1.0\n")
    body = np.frombuffer(raw[len(b"PF\n3 2\n-1.0\n"):], "<f4").reshape(2, 3, 3)
    assert list(body[1, 0]) == [1, 2, 3]  # written bottom row first


def test_ppm_tone_mapping(tmp_path):
    assert list(tonemap_8bit(np.array([1.0, 0.0, 0.5]))) == [255, 0, round(255 * 0.5 ** (1 / 2.2))]
    assert round(255 * 0.5 ** (1 / 2.2)) == 186
    write_image(Image(np.array([[[2.0, -1.0, 0.5]]])), tmp_path / "a.ppm")
    raw = (tmp_path / "a.ppm").read_bytes()
    assert raw == b"P6\n1 1\n255\n" + bytes([255, 0, 186])


def test_read_errors(tmp_path):
    (tmp_path / "bad.pfm").write_bytes(b"PX\n1 1\n-1.0\n" + b"\0" * 12)
    with pytest.raises(ImageError):
        read_image(tmp_path / "bad.pfm")
    (tmp_path / "short.pfm").write_bytes(b"PF\n2 2\n-1.0\n" + b"\0" * 12)
    with pytest.raises(ImageError):
        read_image(tmp_path / "short.pfm")


def test_metric_examples():
    a, b = Image.constant(4, 4, 0.5), Image.constant(4, 4, 0.0)
    assert rmse(a, b) == 0.5
    assert psnr(Image.constant(4, 4, 0.1), b) == pytest.approx(20.0)
    assert psnr(a, a) == math.inf
    assert rmse(a, a) == 0.0


def test_ssim_identity_and_range(rng):
    a = Image(rng.random((20, 24, 3)))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    b = Image(rng.random((20, 24, 3)))
    assert -1.0 <= ssim(a, b) < 0.5


@given(px, px, px)
def test_rmse_is_a_metric(a, b, c):
    A, B, C = Image(a), Image(b), Image(c)
    assert rmse(A, B) == rmse(B, A)
    assert rmse(A, C) <= rmse(A, B) + rmse(B, C) + 1e-12


@given(px, px)
@settings(max_examples=30)
def test_ssim_bounded_symmetric(a, b):
    s = ssim(Image(a), Image(b))
    assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
    assert s == pytest.approx(ssim(Image(b), Image(a)), abs=1e-12)
