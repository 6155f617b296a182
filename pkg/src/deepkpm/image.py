"""HDR image container, compositing, and PFM / PPM I/O."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, ImageError

GAMMA = 2.2


class Image:
    """Row-major (height, width, 3) float64 linear radiance, row 0 at the top."""

    def __init__(self, pixels):
        px = np.asarray(pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageError(f"expected a (height, width, 3) array, got {px.shape}")
        self.pixels = px

    @classmethod
    def zeros(cls, width, height):
        return cls(np.zeros((height, width, 3)))

    @classmethod
    def constant(cls, width, height, value):
        return cls(np.full((height, width, 3), float(value)))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape

    def luminance(self):
        p = self.pixels
        return 0.2126 * p[..., 0] + 0.7152 * p[..., 1] + 0.0722 * p[..., 2]

    def crop(self, x0, y0, x1, y1) -> "Image":
        return Image(self.pixels[y0:y1, x0:x1])

    def __eq__(self, other):
        return isinstance(other, Image) and self.pixels.shape == other.pixels.shape \
            and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Image({self.width}x{self.height})"


def check_same_shape(a: Image, b: Image):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def composite(pm_ls: Image, pt_no_ls: Image) -> Image:
    """Pixelwise sum of the photon-mapped LS layer and the LS-free path-traced layer."""
    check_same_shape(pm_ls, pt_no_ls)
    return Image(pm_ls.pixels + pt_no_ls.pixels)


def write_pfm(img: Image, path) -> None:
    # negative scale marks little-endian; PFM stores rows bottom to top
    data = np.ascontiguousarray(img.pixels[::-1], dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"PF\n%d %d\n-1.0\n" % (img.width, img.height))
        f.write(data.tobytes())


def tonemap_8bit(pixels) -> np.ndarray:
    x = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    return np.rint(255.0 * x ** (1.0 / GAMMA)).astype(np.uint8)


def write_ppm(img: Image, path) -> None:
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
        f.write(tonemap_8bit(img.pixels).tobytes())


def write_image(img: Image, path, format: str | None = None) -> None:
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    if fmt == "pfm":
        write_pfm(img, path)
    elif fmt == "ppm":
        write_ppm(img, path)
    else:
        raise ImageError(f"unsupported image format {fmt!r}")


_HEADER = re.compile(rb"\A(P[Ff6])\s+(\d+)\s+(\d+)\s+(\S+)\s")


def read_image(path) -> Image:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageError(f"cannot read {path}: {exc}") from exc
    m = _HEADER.match(data)
    if not m:
        raise ImageError(f"{path}: malformed PFM/PPM header")
    kind, w, h, extra = m.group(1), int(m.group(2)), int(m.group(3)), m.group(4)
    body = data[m.end():]
    if kind == b"P6":
        if int(extra) != 255:
            raise ImageError(f"{path}: only maxval 255 is supported")
        if len(body) < w * h * 3:
            raise ImageError(f"{path}: truncated pixel data")
        px = np.frombuffer(body, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3) / 255.0
        return Image(px ** GAMMA)
    if kind != b"PF":
        raise ImageError(f"{path}: grayscale PFM is not supported")
    try:
        scale = float(extra)
    except ValueError:
        raise ImageError(f"{path}: bad PFM scale") from None
    dtype = "<f4" if scale < 0 else ">f4"
    if len(body) < w * h * 12:
        raise ImageError(f"{path}: truncated pixel data")
    px = np.frombuffer(body, dtype=dtype, count=w * h * 3).reshape(h, w, 3)[::-1]
    return Image(px.astype(np.float64))
