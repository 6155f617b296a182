"""Image error metrics: RMSE in linear radiance, PSNR and SSIM after clamping to [0, 1]."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .image import Image, check_same_shape

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def rmse(a: Image, b: Image) -> float:
    check_same_shape(a, b)
    d = a.pixels - b.pixels
    return math.sqrt(float(np.mean(d * d)))


def psnr(a: Image, b: Image, peak: float = 1.0) -> float:
    """PSNR in dB on clamped images; identical inputs give +inf."""
    check_same_shape(a, b)
    d = np.clip(a.pixels, 0.0, 1.0) - np.clip(b.pixels, 0.0, 1.0)
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    return math.inf if mse == 0.0 else 10.0 * math.log10(peak * peak / mse)


def _gaussian_window():
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    return g / g.sum()


def _blur(x, g):
    return correlate1d(correlate1d(x, g, axis=0, mode="reflect"), g, axis=1, mode="reflect")


def ssim(a: Image, b: Image) -> float:
    """Mean SSIM of luminance, Gaussian window 11x11 / sigma 1.5, dynamic range 1."""
    check_same_shape(a, b)
    x = np.clip(a.luminance(), 0.0, 1.0)
    y = np.clip(b.luminance(), 0.0, 1.0)
    g = _gaussian_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mx, my = _blur(x, g), _blur(y, g)
    sxx = _blur(x * x, g) - mx * mx
    syy = _blur(y * y, g) - my * my
    sxy = _blur(x * y, g) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
