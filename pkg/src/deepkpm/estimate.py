"""Radiance estimators over a photon map and LS-layer image rendering.

Both estimators take a ShadingBatch and return (Q, 3) radiance. The learned
estimator evaluates the network in fixed-size chunks so each point's result
does not depend on which other points share its batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import EPANECHNIKOV, KernelKind, ShadingBatch, ShadingPoint, estimate_batch
from .errors import EstimationError
from .features import FeatureBatch, build_feature_batch
from .image import Image
from .knn import KnnIndex
from .network import NetParams, run
from .photons import PhotonMap
from .scene import Scene
from .shading import ShadingPoints, camera_rays, pixel_centers, trace_shading_points

INFER_ROWS = 1600  # fixed per-call batch shape keeps results independent of the caller's batching


@dataclass(frozen=True)
class ClassicPM:
    k: int
    kind: KernelKind = EPANECHNIKOV
    name: str = "pm"

    def __call__(self, sb: ShadingBatch, photons: PhotonMap, index: KnnIndex, threads: int = 1, neighbors=None):
        return estimate_batch(sb, photons, index, min(self.k, photons.m_valid), self.kind, threads, neighbors)


@dataclass(frozen=True)
class Learned:
    params: NetParams
    k: int
    head: str = "kernel"
    name: str = "ours"

    def __call__(self, sb: ShadingBatch, photons: PhotonMap, index: KnnIndex, threads: int = 1, neighbors=None):
        if photons.m_valid == 0:
            raise EstimationError("cannot estimate radiance from an empty photon map")
        if neighbors is None:
            neighbors = index.query(sb.position, self.k, threads)
        idx, dist = neighbors
        return predict(self.params, self.head, sb, idx, dist, photons, self.k)


def chunk_points(k: int) -> int:
    """Shading points per network call, about INFER_ROWS photon rows."""
    return max(1, INFER_ROWS // k)


def predict(params, head, sb: ShadingBatch, idx, dist, photons, k):
    q = len(sb)
    out = np.zeros((q, 3))
    step = chunk_points(k)
    for a in range(0, q, step):
        b = min(a + step, q)
        fb = build_feature_batch(sb.subset(slice(a, b)), idx[a:b], dist[a:b], photons, k)
        out[a:b] = run_fixed(params, head, fb, step)
    return out


def run_fixed(params, head, fb: FeatureBatch, size: int):
    """Network on a batch zero-padded to ``size`` points."""
    n = len(fb)
    if n < size:
        pad = size - n
        fb = FeatureBatch(np.concatenate([fb.features, np.zeros((pad,) + fb.features.shape[1:])]),
                          np.concatenate([fb.contributions, np.zeros((pad,) + fb.contributions.shape[1:])]),
                          np.concatenate([fb.mask, np.zeros((pad,) + fb.mask.shape[1:])]))
    L, _ = run(params, head, fb.features, fb.contributions, fb.mask)
    return L[:n]


def estimate_radiance_learned(sp: ShadingPoint, photons: PhotonMap, index: KnnIndex, params: NetParams,
                              k: int, head: str = "kernel"):
    return Learned(params, k, head)(ShadingBatch.from_points([sp]), photons, index)[0]


def shading_grid(scene: Scene, seed: int = 0, samples: int = 1, threads: int = 1):
    """Shading points for every pixel: the pixel center, or ``samples`` stratified jittered rays."""
    cam = scene.camera
    px, py = pixel_centers(cam)
    if samples > 1:
        g = int(np.sqrt(samples))
        if g * g != samples:
            raise ValueError("shading samples per pixel must be a square number")
        rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2 ** 64 - 1), 0x5A5A]))
        sx, sy = np.meshgrid(np.arange(g), np.arange(g))
        jx = (sx.ravel()[None, :] + rng.random((len(px), samples))) / g - 0.5
        jy = (sy.ravel()[None, :] + rng.random((len(px), samples))) / g - 0.5
        px = (px[:, None] + jx).ravel()
        py = (py[:, None] + jy).ravel()
    o, d = camera_rays(cam, px, py)
    return trace_shading_points(scene, o, d, seed, threads=threads)


def ls_layer(scene: Scene, points: ShadingPoints, radiance, samples: int = 1) -> Image:
    """Image from per-valid-point radiance: throughput-weighted and averaged per pixel."""
    cam = scene.camera
    full = np.zeros((len(points.valid), 3))
    full[points.valid.astype(bool)] = radiance
    full *= points.throughput
    px = full.reshape(cam.height * cam.width, samples, 3).mean(axis=1)
    return Image(px.reshape(cam.height, cam.width, 3))


def render_ls(scene: Scene, photons: PhotonMap, estimator, seed: int = 0, samples: int = 1,
              threads: int = 1, points: ShadingPoints | None = None, index: KnnIndex | None = None) -> Image:
    """Render the photon-mapped LS layer of ``scene`` with the given estimator."""
    if points is None:
        points = shading_grid(scene, seed, samples, threads)
    sb = points.batch(scene)
    if len(sb) == 0 or photons.m_valid == 0:
        return ls_layer(scene, points, np.zeros((len(sb), 3)), samples)
    if index is None:
        index = KnnIndex(photons.positions)
    return ls_layer(scene, points, estimator(sb, photons, index, threads), samples)

