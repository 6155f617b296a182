"""Classic K-nearest-neighbor photon density estimation (the PM baseline).

L(p, wo) = sum_t f(p, wo, wi_t) * phi_t * k(|p - p_t|, r_K), with the 1/N
already folded into the stored photon powers, r_K the distance to the K-th
neighbor, and photons whose normal disagrees with n (dot <= 0.5) skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, KernelDomainError
from .knn import KnnIndex
from .photons import PhotonMap
from .scene import Material

NORMAL_AGREEMENT = 0.5


@dataclass(frozen=True)
class KernelKind:
    name: str  # "constant" | "epanechnikov" | "cone"
    c: float = 1.0  # cone slope parameter, >= 1

    def __post_init__(self):
        if self.name not in ("constant", "epanechnikov", "cone"):
            raise ValueError(f"unknown kernel {self.name!r}")
        if self.name == "cone" and self.c < 1.0:
            raise ValueError("cone kernel needs c >= 1")


CONSTANT = KernelKind("constant")
EPANECHNIKOV = KernelKind("epanechnikov")


def kernel_weights(kind: KernelKind, d, r):
    """Vectorized kernel values in m^-2; support is the closed disc d <= r."""
    d = np.asarray(d, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0.0):
        raise KernelDomainError("kernel bandwidth r must be > 0")
    r2 = r * r
    inside = d <= r
    if kind.name == "constant":
        w = np.broadcast_to(1.0 / (math.pi * r2), np.broadcast(d, r).shape)
    elif kind.name == "epanechnikov":
        w = (2.0 / (math.pi * r2)) * (1.0 - d * d / r2)
    else:
        w = (1.0 - d / (kind.c * r)) / ((1.0 - 2.0 / (3.0 * kind.c)) * math.pi * r2)
    return np.where(inside, w, 0.0)


def kernel_eval(kind: KernelKind, d: float, r: float) -> float:
    return float(kernel_weights(kind, d, r))


@dataclass(frozen=True)
class ShadingPoint:
    position: np.ndarray
    normal: np.ndarray
    wo: np.ndarray
    material: Material

    def __post_init__(self):
        if self.material.kind != "lambertian":
            raise EstimationError("shading points must be on Lambertian surfaces")


@dataclass
class ShadingBatch:
    """Struct-of-arrays shading points; ``albedo`` replaces the per-point material."""

    position: np.ndarray  # (Q, 3)
    normal: np.ndarray
    wo: np.ndarray
    albedo: np.ndarray  # (Q, 3)

    def __len__(self):
        return len(self.position)

    @classmethod
    def from_points(cls, points):
        return cls(np.array([p.position for p in points], dtype=np.float64).reshape(-1, 3),
                   np.array([p.normal for p in points], dtype=np.float64).reshape(-1, 3),
                   np.array([p.wo for p in points], dtype=np.float64).reshape(-1, 3),
                   np.array([p.material.color for p in points], dtype=np.float64).reshape(-1, 3))

    def subset(self, sel):
        return ShadingBatch(self.position[sel], self.normal[sel], self.wo[sel], self.albedo[sel])


def lambertian_f(albedo, normal, wo, wi):
    """albedo/pi where both directions lie above the surface, else 0. Broadcasts over photons."""
    up_i = np.einsum("...j,...j->...", wi, normal) > 0.0
    up_o = np.einsum("...j,...j->...", wo, normal) > 0.0
    return albedo / math.pi * (up_i & up_o)[..., None]


def estimate_batch(sp: ShadingBatch, photons: PhotonMap, index: KnnIndex, k: int,
                   kind: KernelKind = EPANECHNIKOV, threads: int = 1, neighbors=None):
    """Radiance (Q, 3) at a batch of shading points. ``neighbors`` lets callers reuse a query."""
    if photons.m_valid == 0:
        raise EstimationError("cannot estimate radiance from an empty photon map")
    idx, dist = neighbors if neighbors is not None else index.query(sp.position, k, threads)
    r = np.maximum(dist[:, -1:], 1e-300)
    w = kernel_weights(kind, dist, r)  # (Q, K)
    pn = photons.normals[idx].astype(np.float64)
    agree = np.einsum("qkj,qj->qk", pn, sp.normal) > NORMAL_AGREEMENT
    wi = photons.incident[idx].astype(np.float64)
    f = lambertian_f(sp.albedo[:, None, :], sp.normal[:, None, :], sp.wo[:, None, :], wi)
    phi = photons.power[idx].astype(np.float64)
    return np.einsum("qk,qkc->qc", w * agree, f * phi)


def estimate_radiance_pm(sp: ShadingPoint, photons: PhotonMap, index: KnnIndex, k: int,
                         kind: KernelKind = EPANECHNIKOV):
    """Single-point estimate; returns (rgb, clamped) where clamped means K > M."""
    if photons.m_valid == 0:
        raise EstimationError("cannot estimate radiance from an empty photon map")
    clamped = k > photons.m_valid
    L = estimate_batch(ShadingBatch.from_points([sp]), photons, index, min(k, photons.m_valid), kind)
    return L[0], clamped
