"""Camera rays and first-diffuse-hit shading points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .density import ShadingBatch
from .scene import Camera, Scene

CHUNK = 4096


def camera_rays(camera: Camera, px, py):
    """Unit ray directions through image coordinates (px, py); y grows downward."""
    o, u, v, w, h, aspect = camera.basis()
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    sx = (2.0 * px / camera.width - 1.0) * h * aspect
    sy = (1.0 - 2.0 * py / camera.height) * h
    d = np.asarray(w) + sx[:, None] * np.asarray(u) + sy[:, None] * np.asarray(v)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.broadcast_to(np.asarray(o, dtype=np.float64), d.shape).copy(), d


def pixel_centers(camera: Camera):
    ys, xs = np.mgrid[0:camera.height, 0:camera.width]
    return xs.ravel() + 0.5, ys.ravel() + 0.5


@dataclass
class ShadingPoints:
    """First diffuse hits of a batch of rays; rows with ``valid == 0`` missed."""

    position: np.ndarray
    normal: np.ndarray
    wo: np.ndarray
    material: np.ndarray
    throughput: np.ndarray  # specular-chain weight from the camera
    valid: np.ndarray

    def batch(self, scene: Scene) -> ShadingBatch:
        sel = self.valid.astype(bool)
        colors = np.array([m.color for m in scene.materials], dtype=np.float64).reshape(-1, 3)
        return ShadingBatch(self.position[sel], self.normal[sel], self.wo[sel], colors[self.material[sel]])


def trace_shading_points(scene: Scene, origins, dirs, seed: int = 0, max_depth: int = 16,
                         threads: int = 1, kernels=None) -> ShadingPoints:
    k = kernels or backend.kernels
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(origins)
    out = ShadingPoints(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)),
                        np.zeros(n, dtype=np.int32), np.zeros((n, 3)), np.zeros(n, dtype=np.uint8))
    ps = scene.packed
    seed = int(seed) & ((1 << 64) - 1)
    backend.run_chunks(
        lambda a, b: k.trace_shading_range(ps, origins, dirs, seed, a, b, int(max_depth), out.position,
                                           out.normal, out.wo, out.material, out.throughput, out.valid),
        backend.chunks(n, CHUNK), threads,
    )
    return out


def image_shading_points(scene: Scene, seed: int = 0, threads: int = 1) -> ShadingPoints:
    """One shading point per pixel through the pixel center."""
    o, d = camera_rays(scene.camera, *pixel_centers(scene.camera))
    return trace_shading_points(scene, o, d, seed, threads=threads)


def random_shading_points(scene: Scene, n: int, seed: int = 0, threads: int = 1) -> ShadingPoints:
    """``n`` camera rays at uniformly random image positions (numpy Philox stream)."""
    rng = np.random.Generator(np.random.Philox(key=[int(seed) & ((1 << 64) - 1), 3]))
    cam = scene.camera
    px = rng.random(n) * cam.width
    py = rng.random(n) * cam.height
    o, d = camera_rays(cam, px, py)
    return trace_shading_points(scene, o, d, seed, threads=threads)
