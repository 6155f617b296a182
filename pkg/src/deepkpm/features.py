"""Per-photon network inputs.

Each neighbor photon t of a shading point becomes a 12-vector:

    [0:3]   (p_t - p) / r_K in the local frame of n
    [3:6]   incident direction in the local frame
    [6]     photon normal . n
    [7]     |p_t - p| / r_K
    [8]     log(1 + lum(phi_t) * M)
    [9:12]  phi_t / lum(phi_t)

plus the contribution c_t = f * phi_t / (pi r_K^2) that predicted weights
multiply. Rows past the available neighbors are zero with mask 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .density import ShadingBatch, lambertian_f
from .photons import PhotonMap

FEATURE_DIM = 12
LUMA = np.array([0.2126, 0.7152, 0.0722])


def onb(n):
    """Branchless orthonormal basis (t, b) around unit normals n, shape (..., 3)."""
    n = np.asarray(n, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    sign = np.copysign(1.0, z)
    a = -1.0 / (sign + z)
    b = x * y * a
    t = np.stack([1.0 + sign * x * x * a, sign * b, -sign * x], axis=-1)
    bt = np.stack([b, sign + y * y * a, -y], axis=-1)
    return t, bt


def to_local(v, n):
    """Coordinates of v in the frame (t, b, n); broadcasts v (..., K, 3) against n (..., 3)."""
    t, b = onb(n)
    t, b, n = t[..., None, :], b[..., None, :], np.asarray(n, dtype=np.float64)[..., None, :]
    return np.stack([np.sum(v * t, -1), np.sum(v * b, -1), np.sum(v * n, -1)], axis=-1)


@dataclass
class FeatureBatch:
    features: np.ndarray  # (Q, K, 12)
    contributions: np.ndarray  # (Q, K, 3)
    mask: np.ndarray  # (Q, K) float64 0/1

    def __len__(self):
        return len(self.features)

    def __getitem__(self, sel):
        return FeatureBatch(self.features[sel], self.contributions[sel], self.mask[sel])


def build_feature_batch(sp: ShadingBatch, idx, dist, photons: PhotonMap, k: int) -> FeatureBatch:
    """Features for Q shading points from their neighbor ids / distances (Q, n), n <= k."""
    idx = np.asarray(idx)
    dist = np.asarray(dist, dtype=np.float64)
    q, n = idx.shape
    if n == 0:
        raise EstimationError("empty neighborhood")
    if n > k:
        raise EstimationError(f"neighborhood of {n} exceeds K={k}")
    r = dist[:, -1]
    inv_r = np.divide(1.0, r, out=np.zeros_like(r), where=r > 0.0)
    pos = photons.positions[idx].astype(np.float64)
    inc = photons.incident[idx].astype(np.float64)
    nrm = photons.normals[idx].astype(np.float64)
    phi = photons.power[idx].astype(np.float64)

    feats = np.zeros((q, k, FEATURE_DIM))
    feats[:, :n, 0:3] = to_local(pos - sp.position[:, None, :], sp.normal) * inv_r[:, None, None]
    feats[:, :n, 3:6] = to_local(inc, sp.normal)
    feats[:, :n, 6] = np.einsum("qkj,qj->qk", nrm, sp.normal)
    feats[:, :n, 7] = np.minimum(dist * inv_r[:, None], 1.0)
    lum = phi @ LUMA
    feats[:, :n, 8] = np.log1p(lum * photons.m_valid)
    safe = np.where(lum > 0.0, lum, 1.0)
    feats[:, :n, 9:12] = np.where((lum > 0.0)[..., None], phi / safe[..., None], 0.0)

    f = lambertian_f(sp.albedo[:, None, :], sp.normal[:, None, :], sp.wo[:, None, :], inc)
    base = np.divide(1.0, math.pi * r * r, out=np.zeros_like(r), where=r > 0.0)
    contrib = np.zeros((q, k, 3))
    contrib[:, :n] = f * phi * base[:, None, None]
    mask = np.zeros((q, k))
    mask[:, :n] = 1.0
    return FeatureBatch(feats, contrib, mask)


def build_features(sp, nb, photons: PhotonMap, k: int):
    """Single shading point: returns (K x 12 features, K x 3 contributions, K mask)."""
    if len(nb) == 0:
        raise EstimationError("empty neighborhood")
    fb = build_feature_batch(ShadingBatch.from_points([sp]), nb.indices[None, :], nb.distances[None, :],
                             photons, k)
    return fb.features[0], fb.contributions[0], fb.mask[0]
