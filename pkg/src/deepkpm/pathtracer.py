"""Unidirectional path tracing with next-event estimation and balance-heuristic MIS.

``mode="no_ls"`` drops emission reached by BSDF sampling through a specular
vertex once the camera path has passed a diffuse vertex. Those are exactly
the light-specular paths the photon tracer keeps, so
``full = no_ls + photon-mapped LS layer`` in expectation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ConfigurationError
from .image import Image
from .scene import Scene

PIXEL_CHUNK = 256


@dataclass(frozen=True)
class RenderJob:
    scene: Scene
    spp: int = 16
    max_bounces: int = 8
    mode: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.spp < 1:
            raise ConfigurationError("spp must be >= 1")
        if self.mode not in ("full", "no_ls"):
            raise ConfigurationError(f"mode must be 'full' or 'no_ls', not {self.mode!r}")
        if self.max_bounces < 0:
            raise ConfigurationError("max_bounces must be >= 0")


def render_pt(job: RenderJob, threads: int = 1, kernels=None) -> Image:
    """Per-pixel mean of ``spp`` stratified samples; sample s of pixel p uses stream (seed, p, s)."""
    scene = job.scene
    if not scene.lights and not any(m.kind == "emissive" for m in scene.materials) \
            and not any(scene.background_radiance):
        raise ConfigurationError("scene has no light source")
    k = kernels or backend.kernels
    cam = scene.camera
    n_pix = cam.width * cam.height
    out = np.zeros((n_pix, 3), dtype=np.float64)
    ps, cp = scene.packed, scene.camera.packed()
    seed = int(job.seed) & ((1 << 64) - 1)
    no_ls = job.mode == "no_ls"
    backend.run_chunks(
        lambda a, b: k.render_range(ps, cp, seed, a, b, int(job.spp), int(job.max_bounces), no_ls, out),
        backend.chunks(n_pix, PIXEL_CHUNK), threads,
    )
    return Image(out.reshape(cam.height, cam.width, 3))


def trace_camera_path(scene: Scene, origin, direction, mode: str = "full", max_bounces: int = 8,
                      seed: int = 0, stream: int = 0, kernels=None) -> np.ndarray:
    """Radiance of one path along a given unit ray."""
    k = kernels or backend.kernels
    L = k.path_radiance(scene.packed, origin, direction, int(max_bounces), mode == "no_ls",
                        int(seed) & ((1 << 64) - 1), int(stream), 0)
    return np.array(L)
